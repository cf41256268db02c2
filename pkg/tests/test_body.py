import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from centroflow import seeds
from centroflow.body import Body, ConvexityError, mahler_volume, unit_ball_volume
from centroflow.sphere import build_grid

from conftest import random_special_linear


class TestRadiiOfCurvature:
    def test_unit_ball_identity(self, sphere):
        r = seeds.ball(sphere).radii_of_curvature()
        assert np.max(np.abs(r - np.eye(2))) < 1e-9

    def test_ball_homogeneity(self, sphere, circle):
        for g in (sphere, circle):
            r = seeds.ball(g, 2.5).radii_of_curvature()
            assert np.max(np.abs(r - 2.5 * np.eye(g.n))) < 1e-8

    def test_ellipsoid_principal_radii_closed_form(self, sphere):
        # oracle: for the ellipsoid x^T diag(a_i^-2) x = 1 with outward
        # normal z, the radii-of-curvature matrix is the tangential part
        # of (A - (Az)(Az)^T / s^2) / s with A = diag(a_i^2), s = |A^1/2 z|
        axes = (1.0, 1.0, 2.0)
        body = seeds.ellipsoid(sphere, axes)
        eigs = body.principal_radii()
        a_mat = np.diag(np.square(axes))
        for k in range(0, sphere.size, 97):
            z = sphere.nodes[k]
            s = np.sqrt(z @ a_mat @ z)
            m = (a_mat - np.outer(a_mat @ z, a_mat @ z) / s**2) / s
            p = np.eye(3) - np.outer(z, z)
            lam = np.sort(np.linalg.eigvalsh(p @ m @ p))[1:]
            assert np.max(np.abs(np.sort(eigs[k]) - lam)) < 2e-3

    def test_nonconvex_rejected(self, circle):
        # amplitude beyond 1/15 turns the cos(4 theta) body non-convex
        with pytest.raises(ConvexityError) as err:
            seeds.perturbed_ball(circle, 0.12, 4)
        assert err.value.node_index is not None
        assert err.value.node is not None


class TestReciprocalGaussCurvature:
    def test_unit_ball(self, sphere):
        sn = seeds.ball(sphere).reciprocal_gauss_curvature()
        assert_allclose(sn, 1.0, atol=1e-9)

    def test_homogeneity_degree_n(self, sphere, circle):
        for g, r in ((sphere, 1.8), (circle, 1.8)):
            sn = seeds.ball(g, r).reciprocal_gauss_curvature()
            assert_allclose(sn, r**g.n, rtol=1e-9)

    def test_smoothed_square_independent_stencil(self):
        # production path is a 4th-order stencil; check against an
        # independently coded 2nd-order stencil on a smoothed square
        g = build_grid(1, 512)
        body = seeds.perturbed_ball(g, 0.04, 4)
        sn = body.reciprocal_gauss_curvature()
        s = body.s
        h = g.spacing
        second = (np.roll(s, -1) - 2 * s + np.roll(s, 1)) / h**2
        assert np.max(np.abs(sn - (second + s))) < 1e-3


class TestCentroAffineCurvature:
    def test_unit_ball(self, sphere):
        cac = seeds.ball(sphere).centro_affine_curvature()
        assert_allclose(cac, 1.0, atol=1e-9)

    def test_ball_scaling(self, sphere, circle):
        for g in (sphere, circle):
            r = 1.6
            cac = seeds.ball(g, r).centro_affine_curvature()
            assert_allclose(cac, r ** (-2 * (g.n + 1)), rtol=1e-8)

    def test_sl_image_of_ball_is_pinched_to_one(self, sphere):
        body = seeds.ball(sphere).linear_image(np.diag([1.2, 1.0, 1 / 1.2]))
        lo, hi = body.centro_affine_extremes()
        assert abs(lo - 1.0) < 1e-4
        assert abs(hi - 1.0) < 1e-4


class TestVolume:
    def test_unit_disk(self, circle):
        assert_allclose(seeds.ball(circle).volume(), np.pi, rtol=1e-12)

    def test_unit_ball(self, sphere):
        assert_allclose(seeds.ball(sphere).volume(), 4 * np.pi / 3, rtol=1e-12)

    def test_ellipsoid_volume_closed_form(self):
        g = build_grid(2, (48, 96))
        axes = (1.0, 1.2, 0.9)
        body = seeds.ellipsoid(g, axes)
        assert_allclose(body.volume(), 4 * np.pi / 3 * np.prod(axes), rtol=1e-6)

    @settings(max_examples=10, deadline=None)
    @given(c=st.floats(0.25, 4.0))
    def test_scaling_laws(self, sphere_coarse, c):
        g = sphere_coarse
        base = seeds.perturbed_ball(g, 0.05, 4, 1)
        scaled = base.scaled(c)
        assert_allclose(scaled.volume(), c ** (g.n + 1) * base.volume(), rtol=1e-10)
        assert_allclose(
            scaled.reciprocal_gauss_curvature(),
            c**g.n * base.reciprocal_gauss_curvature(),
            rtol=1e-7,
        )
        assert_allclose(
            scaled.centro_affine_curvature(),
            c ** (-2 * (g.n + 1)) * base.centro_affine_curvature(),
            rtol=1e-7,
        )


class TestRadiiBounds:
    def test_ball(self, sphere):
        lo, hi = seeds.ball(sphere, 1.4).radii_bounds()
        assert_allclose([lo, hi], [1.4, 1.4], rtol=1e-12)

    def test_ellipsoid(self, sphere):
        lo, hi = seeds.ellipsoid(sphere, (1.0, 1.0, 2.0)).radii_bounds()
        assert abs(lo - 1.0) < 5e-3
        assert abs(hi - 2.0) < 5e-3

    def test_capped_ball_curvature_contrast_mahler_near_max(self, sphere):
        # cutting shallow caps barely dents the Mahler volume while the
        # principal-radius contrast becomes large (flat caps, tight rim)
        capped = seeds.capped_ball(sphere, depth=0.35, width=0.15)
        cs = capped.curvature_summary()
        assert cs.lambda_max / cs.lambda_min > 5.0
        assert mahler_volume(capped) > 0.95 * unit_ball_volume(3) ** 2

    def test_stretched_capped_ball_ratio_large_mahler_constant(self, sphere):
        capped = seeds.capped_ball(sphere, depth=0.15, width=0.2)
        stretched = capped.linear_image(np.diag([1.6, 1.0, 1 / 1.6]))
        lo, hi = stretched.radii_bounds()
        assert hi / lo > 3.0
        assert mahler_volume(stretched) > 0.95 * unit_ball_volume(3) ** 2


class TestPolar:
    def test_unit_ball_self_polar(self, sphere):
        p = seeds.ball(sphere).polar()
        assert np.max(np.abs(p.s - 1.0)) < 1e-12

    def test_ball_reciprocal(self, sphere, circle):
        for g in (sphere, circle):
            p = seeds.ball(g, 2.0).polar()
            assert np.max(np.abs(p.s - 0.5)) < 1e-10

    def test_circle_ellipse_closed_form(self, circle_fine):
        axes = np.array([2.0, 0.5])
        p = seeds.ellipsoid(circle_fine, axes).polar()
        exact = np.sqrt((circle_fine.nodes**2) @ (1.0 / axes) ** 2)
        assert np.max(np.abs(p.s - exact) / exact) < 1e-6

    def test_sphere_ellipsoid_closed_form(self, sphere):
        axes = np.array([1.0, 1.3, 0.8])
        p = seeds.ellipsoid(sphere, axes).polar()
        exact = np.sqrt((sphere.nodes**2) @ (1.0 / axes) ** 2)
        assert np.max(np.abs(p.s - exact) / exact) < 1e-6

    def test_involution(self, sphere, circle):
        for g, amp in ((sphere, 0.05), (circle, 0.05)):
            body = seeds.perturbed_ball(g, amp, 4, 1 if g.n == 2 else 0)
            back = body.polar().polar()
            assert np.max(np.abs(back.s - body.s)) / np.max(body.s) < 5e-4


class TestLinearImage:
    def test_identity(self, sphere):
        body = seeds.perturbed_ball(sphere, 0.04, 4, 2)
        image = body.linear_image(np.eye(3))
        assert np.max(np.abs(image.s - body.s)) < 1e-10

    def test_scalar_matrix(self, sphere):
        body = seeds.ball(sphere, 1.1)
        image = body.linear_image(0.7 * np.eye(3))
        assert_allclose(image.s, 0.7 * body.s, rtol=1e-10)

    def test_area_preserved_by_special_linear(self):
        grid = build_grid(1, 1024)
        disk = seeds.ball(grid)
        image = disk.linear_image(np.diag([2.0, 0.5]))
        assert abs(image.volume() - np.pi) < 1e-8 * np.pi

    def test_volume_scales_with_determinant(self, sphere):
        rng = np.random.default_rng(8)
        body = seeds.perturbed_ball(sphere, 0.03, 4, 1)
        a = random_special_linear(3, 3.0, rng) * 1.2
        image = body.linear_image(a)
        assert_allclose(image.volume(), abs(np.linalg.det(a)) * body.volume(),
                        rtol=1e-6)

    def test_singular_rejected(self, sphere):
        with pytest.raises(ValueError, match="singular"):
            seeds.ball(sphere).linear_image(np.zeros((3, 3)))


class TestCurvatureSummary:
    def test_unit_ball(self, sphere):
        cs = seeds.ball(sphere).curvature_summary()
        for v in (cs.sn_min, cs.sn_max, cs.centro_affine_min,
                  cs.centro_affine_max, cs.lambda_min, cs.lambda_max):
            assert abs(v - 1.0) < 1e-6
        assert abs(cs.mean_curvature_max - 2.0) < 1e-6

    def test_ball_radius(self, circle):
        cs = seeds.ball(circle, 2.0).curvature_summary()
        assert abs(cs.lambda_min - 2.0) < 1e-8
        assert abs(cs.lambda_max - 2.0) < 1e-8

    def test_ellipse_curvature_range_closed_form(self, circle_fine):
        # ellipse with semi-axes (a, b): radius of curvature as a function
        # of the normal direction is (ab)^2 / s^3, extremes b^2/a and a^2/b
        a, b = 1.0, 2.0
        cs = seeds.ellipsoid(circle_fine, (a, b)).curvature_summary()
        assert abs(cs.lambda_min - min(a**2 / b, b**2 / a)) < 1e-5
        assert abs(cs.lambda_max - max(a**2 / b, b**2 / a)) < 1e-5


class TestInvariancesAndAudits:
    def test_blaschke_santalo_ceiling(self, sphere):
        ceiling = unit_ball_volume(3) ** 2
        ell = seeds.ellipsoid(sphere, (1.0, 1.2, 0.9))
        assert mahler_volume(ell) <= ceiling * (1 + 2e-4)
        assert abs(mahler_volume(ell) - ceiling) < 1e-4 * ceiling
        bump = seeds.perturbed_ball(sphere, 0.08, 4, 2)
        gap = ceiling - mahler_volume(bump)
        assert gap > 1e-3 * ceiling  # strictly below for a non-ellipsoid

    def test_centro_affine_extremes_sl_invariant(self, sphere):
        rng = np.random.default_rng(12)
        body = seeds.perturbed_ball(sphere, 0.04, 4, 1)
        lo0, hi0 = body.centro_affine_extremes()
        for _ in range(3):
            a = random_special_linear(3, 2.0, rng)
            lo1, hi1 = body.linear_image(a).centro_affine_extremes()
            assert abs(lo1 - lo0) / lo0 < 5e-4
            assert abs(hi1 - hi0) / hi0 < 5e-4

    def test_mahler_gl_invariant(self, circle):
        rng = np.random.default_rng(13)
        body = seeds.perturbed_ball(circle, 0.05, 4)
        m0 = mahler_volume(body)
        for _ in range(3):
            a = random_special_linear(2, 3.0, rng) * rng.uniform(0.5, 2.0)
            m1 = mahler_volume(body.linear_image(a))
            assert abs(m1 - m0) / m0 < 1e-6


class TestBodyConstruction:
    def test_symmetrization_reported(self, circle):
        s = 1.0 + 0.01 * np.cos(3 * circle.theta)  # odd mode: asymmetric
        body = Body(circle, s)
        assert body.symmetrization_correction > 1e-3
        assert np.array_equal(body.s, body.s[circle.antipode])

    def test_positivity_enforced(self, circle):
        with pytest.raises(ValueError, match="positive"):
            Body(circle, np.full(circle.size, -1.0))

    def test_cache_consistency(self, sphere):
        body = seeds.perturbed_ball(sphere, 0.05, 4, 1)
        sn1 = body.reciprocal_gauss_curvature()
        fresh = Body(sphere, body.s, symmetrize=False, band_limit=False)
        sn2 = fresh.reciprocal_gauss_curvature()
        assert np.max(np.abs(sn1 - sn2)) < 1e-12 * np.max(sn1)

    def test_field_shape_rejected(self, sphere):
        with pytest.raises(ValueError, match="shape"):
            Body(sphere, np.ones(sphere.size + 1))

    def test_nonfinite_rejected(self, sphere):
        s = np.ones(sphere.size)
        s[3] = np.nan
        with pytest.raises(ValueError, match="finite"):
            Body(sphere, s)
