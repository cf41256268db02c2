import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from centroflow.sphere import build_grid

TWO_PI = 2.0 * np.pi


class TestBuildGrid:
    def test_circle_nodes_and_weights(self):
        g = build_grid(1, 360)
        assert g.size == 360
        assert_allclose(g.theta, TWO_PI * np.arange(360) / 360)
        assert_allclose(g.weights, TWO_PI / 360)

    def test_sphere_weight_sum(self, sphere):
        assert abs(sphere.integrate(np.ones(sphere.size)) - 4 * np.pi) < 1e-10 * 4 * np.pi

    def test_circle_weight_sum(self, circle):
        assert abs(circle.integrate(np.ones(circle.size)) - TWO_PI) < 1e-10 * TWO_PI

    def test_unit_norm_nodes(self, sphere, circle):
        for g in (sphere, circle):
            assert np.max(np.abs(np.linalg.norm(g.nodes, axis=1) - 1.0)) < 1e-14

    def test_antipodal_map_exact(self, sphere, circle):
        for g in (sphere, circle):
            assert np.array_equal(g.nodes[g.antipode], -g.nodes)
            assert np.array_equal(g.weights[g.antipode], g.weights)

    def test_odd_circle_count_rejected(self):
        with pytest.raises(ValueError, match="antipodal"):
            build_grid(1, 5)

    def test_odd_longitude_rejected(self):
        with pytest.raises(ValueError, match="antipodal"):
            build_grid(2, (16, 33))

    def test_bad_dimension_rejected(self):
        with pytest.raises(ValueError, match="dimension"):
            build_grid(3, 16)

    def test_minimum_resolution(self):
        with pytest.raises(ValueError):
            build_grid(1, 6)
        with pytest.raises(ValueError):
            build_grid(2, (6, 16))


class TestIntegrate:
    def test_constant_circle(self, circle):
        assert_allclose(circle.integrate(np.ones(circle.size)), TWO_PI, rtol=1e-12)

    def test_constant_sphere(self, sphere):
        assert_allclose(sphere.integrate(np.ones(sphere.size)), 4 * np.pi, rtol=1e-12)

    def test_second_moment_sphere(self, sphere):
        # closed form: integral of z3^2 over S^2 is 4 pi / 3
        f = sphere.nodes[:, 2] ** 2
        assert_allclose(sphere.integrate(f), 4 * np.pi / 3, rtol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(data=st.data())
    def test_odd_function_quadrature_vanishes(self, sphere, data):
        # odd under the antipodal map: odd-degree harmonics
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        c = np.zeros((sphere.degree + 1, sphere.degree + 1, 2))
        for l in range(1, sphere.degree + 1, 2):
            for m in range(l + 1):
                c[m, l, 0] = rng.normal()
                if m > 0:
                    c[m, l, 1] = rng.normal()
        f = sphere.synthesize(c)
        scale = max(np.max(np.abs(f)), 1.0)
        assert abs(sphere.integrate(f)) < 1e-12 * scale * 4 * np.pi


class TestCovariantHessian:
    def test_constant_field(self, sphere, circle):
        for g in (sphere, circle):
            h = g.covariant_hessian(np.ones(g.size))
            assert np.max(np.abs(h)) < 1e-10

    def test_circle_cosine(self, circle_fine):
        # s = cos(theta): s'' + s = 0 (restriction of a linear function)
        s = np.cos(circle_fine.theta)
        h = circle_fine.covariant_hessian(s)[:, 0, 0]
        assert np.max(np.abs(h + s)) < 1e-7

    def test_sphere_linear_restriction(self, sphere):
        # s(z) = <v, z>: covariant Hessian equals -s * identity
        v = np.array([0.3, -1.2, 0.7])
        s = sphere.nodes @ v
        h = sphere.covariant_hessian(s)
        expected = -s[:, None, None] * np.eye(2)
        assert np.max(np.abs(h - expected)) < 1e-10

    def test_sphere_z3_squared_symbolic_oracle(self, sphere):
        # independent oracle: symbolic differentiation of the degree-1
        # homogeneous extension h(x) = x3^2 / |x|, restricted to the
        # tangent plane, equals covariant Hessian + s * identity
        import sympy as sp

        x1, x2, x3 = sp.symbols("x1 x2 x3", real=True)
        r = sp.sqrt(x1**2 + x2**2 + x3**2)
        h_ext = x3**2 / r
        hess = sp.hessian(h_ext, (x1, x2, x3))
        hess_fn = sp.lambdify((x1, x2, x3), hess, "numpy")

        s = sphere.nodes[:, 2] ** 2
        hess_num = sphere.covariant_hessian(s)
        frames = sphere.frames()
        idx = np.arange(0, sphere.size, 131)
        for k in idx:
            z = sphere.nodes[k]
            full = np.array(hess_fn(*z), dtype=float)
            e = frames[k]
            tangential = e @ full @ e.T  # equals hess + s * I in this frame
            expected = tangential - s[k] * np.eye(2)
            assert np.max(np.abs(hess_num[k] - expected)) < 1e-9

    def test_homogeneous_extension_fd_oracle(self, sphere):
        # independent path: 4th-order Cartesian finite differences of the
        # 1-homogeneous extension of the band-limited interpolant
        rng = np.random.default_rng(3)
        c = np.zeros((sphere.degree + 1, sphere.degree + 1, 2))
        for l in range(0, 7):
            for m in range(l + 1):
                c[m, l, 0] = rng.normal() * 0.1
                if m > 0:
                    c[m, l, 1] = rng.normal() * 0.1
        f = sphere.synthesize(c)
        hess = sphere.covariant_hessian(f)
        frames = sphere.frames()

        def extension(pts):
            norms = np.linalg.norm(pts, axis=1)
            dirs = pts / norms[:, None]
            return norms * sphere.evaluate(c, dirs)[0]

        eps = 1e-3
        stencil = np.array([-2, -1, 1, 2], dtype=float)
        w2 = np.array([-1.0, 16.0, 16.0, -1.0]) / 12.0  # plus -30/12 center
        for k in range(0, sphere.size, 257):
            z = sphere.nodes[k]
            e = frames[k]
            center = extension(z[None, :])[0]
            fd = np.empty((2, 2))
            for a in range(2):
                pts = z[None, :] + (stencil * eps)[:, None] * e[a]
                vals = extension(pts)
                fd[a, a] = (w2 @ vals - 30.0 / 12.0 * center) / eps**2
            w1 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
            pts = np.array([
                z + eps * (sa * e[0] + sb * e[1])
                for sa in stencil for sb in stencil
            ])
            vals = extension(pts).reshape(4, 4)
            mixed = (w1 @ vals @ w1) / eps**2
            fd[0, 1] = fd[1, 0] = mixed
            expected = hess[k] + f[k] * np.eye(2)
            assert np.max(np.abs(fd - expected)) < 5e-7

    def test_linearity(self, sphere):
        rng = np.random.default_rng(0)
        f = sphere.project(rng.normal(size=sphere.size))
        g = sphere.project(rng.normal(size=sphere.size))
        lhs = sphere.covariant_hessian(2.5 * f - 1.25 * g)
        rhs = 2.5 * sphere.covariant_hessian(f) - 1.25 * sphere.covariant_hessian(g)
        scale = max(np.max(np.abs(rhs)), 1.0)
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * scale

    def test_symmetry(self, sphere):
        rng = np.random.default_rng(1)
        f = sphere.project(rng.normal(size=sphere.size))
        h = sphere.covariant_hessian(f)
        assert np.max(np.abs(h - np.transpose(h, (0, 2, 1)))) < 1e-10

    def test_refinement_convergence_circle(self):
        # 4th-order scheme: error drops ~16x per refinement (>= 2nd order)
        errs = []
        for size in (64, 128):
            g = build_grid(1, size)
            s = np.exp(np.cos(g.theta))
            h = g.covariant_hessian(s)[:, 0, 0]
            exact = s * (np.sin(g.theta) ** 2 - np.cos(g.theta))
            errs.append(np.max(np.abs(h - exact)))
        assert errs[0] / errs[1] > 8.0

    def test_refinement_convergence_sphere(self):
        # spectral scheme on an analytic field: far better than 2nd order
        errs = []
        for res in ((12, 24), (24, 48)):
            g = build_grid(2, res)
            x = g.nodes[:, 2]
            s = np.exp(x)
            h = g.covariant_hessian(s)
            st2 = 1.0 - x**2
            exact_tt = s * st2 - s * x  # d2/dtheta2 of exp(cos theta)
            exact_pp = -s * x  # cot * d/dtheta
            err = max(
                np.max(np.abs(h[:, 0, 0] - exact_tt)),
                np.max(np.abs(h[:, 1, 1] - exact_pp)),
                np.max(np.abs(h[:, 0, 1])),
            )
            errs.append(err)
        assert errs[0] / errs[1] > 4.0


class TestInterpolation:
    def test_band_limited_reproduction(self, sphere):
        rng = np.random.default_rng(2)
        c = np.zeros((sphere.degree + 1, sphere.degree + 1, 2))
        c[0, 0, 0] = 1.0
        c[2, 5, 1] = 0.4
        c[3, 7, 0] = -0.2
        f = sphere.synthesize(c)
        vals = sphere.evaluate(sphere.analyze(f), sphere.nodes)[0]
        assert_allclose(vals, f, atol=1e-12)

    def test_analysis_synthesis_roundtrip(self, sphere):
        rng = np.random.default_rng(4)
        c = np.zeros((sphere.degree + 1, sphere.degree + 1, 2))
        for l in range(sphere.degree + 1):
            for m in range(l + 1):
                c[m, l, 0] = rng.normal()
                if m > 0:
                    c[m, l, 1] = rng.normal()
        c2 = sphere.analyze(sphere.synthesize(c))
        assert np.max(np.abs(c2 - c)) < 1e-12 * max(1.0, np.max(np.abs(c)))

    def test_circle_trig_interpolation(self, circle):
        s = np.cos(circle.theta) + 0.3 * np.cos(4 * circle.theta)
        angles = np.array([0.1, 1.7, 3.9])
        pts = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        vals = circle.interpolate(s, pts)
        exact = np.cos(angles) + 0.3 * np.cos(4 * angles)
        assert_allclose(vals, exact, atol=1e-13)

    def test_symmetrize_exact(self, sphere):
        rng = np.random.default_rng(5)
        f = rng.normal(size=sphere.size)
        g = sphere.symmetrize(f)
        assert np.array_equal(g, g[sphere.antipode])
