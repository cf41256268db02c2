"""Discretizations of the unit circle and unit sphere with spectral calculus.

Grids carry quadrature weights, antipodal bookkeeping, and the machinery to
evaluate second covariant derivatives of sampled scalar fields in a
per-node orthonormal tangent frame.  The circle uses 4th-order periodic
finite differences for the production second derivative and a trigonometric
interpolant for off-node evaluation; the sphere uses a truncated
orthonormal spherical-harmonic expansion fitted by Gauss-Legendre /
trapezoid quadrature and differentiated analytically.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SphereGrid", "CircleGrid", "LatLonGrid", "build_grid"]

TWO_PI = 2.0 * np.pi


def as_field(grid, values) -> np.ndarray:
    """Validate and return a per-node scalar field as a float array."""
    f = np.asarray(values, dtype=float)
    if f.shape != (grid.size,):
        raise ValueError(
            f"field has shape {f.shape}, expected ({grid.size},) for this grid"
        )
    if not np.all(np.isfinite(f)):
        raise ValueError("field contains non-finite values")
    return f


class SphereGrid:
    """Common interface of the circle and latitude-longitude sphere grids.

    Attributes
    ----------
    n : int
        Intrinsic dimension of the sphere (1 for the circle, 2 for S^2).
    nodes : ndarray, shape (size, n+1)
        Unit vectors of the quadrature nodes.
    weights : ndarray, shape (size,)
        Quadrature weights for the surface measure.
    antipode : ndarray of int, shape (size,)
        Index of the node -z for each node z (exact by construction).
    """

    n: int
    size: int
    nodes: np.ndarray
    weights: np.ndarray
    antipode: np.ndarray

    def integrate(self, values) -> float:
        """Quadrature of a scalar field over the sphere."""
        return float(self.weights @ as_field(self, values))

    def symmetrize(self, values) -> np.ndarray:
        """Antipodal average (f(z) + f(-z)) / 2, exact on the node set."""
        f = as_field(self, values)
        return 0.5 * (f + f[self.antipode])

    # Subclasses implement: project, covariant_hessian, gradient, frames,
    # analyze, evaluate, spectral_scale, resolution_descriptor.


def build_grid(n: int, resolution) -> SphereGrid:
    """Build an antipodally symmetric grid on S^n.

    Parameters
    ----------
    n : 1 or 2
    resolution : int or (int, int)
        Node count for the circle; (nlat, nlon) for the sphere.  A bare
        int on the sphere means (m, 2m).
    """
    if n == 1:
        if not np.isscalar(resolution):
            raise ValueError("circle resolution must be a single node count")
        return CircleGrid(int(resolution))
    if n == 2:
        if np.isscalar(resolution):
            nlat, nlon = int(resolution), 2 * int(resolution)
        else:
            nlat, nlon = (int(r) for r in resolution)
        return LatLonGrid(nlat, nlon)
    raise ValueError(f"sphere dimension must be 1 or 2, got {n}")


class CircleGrid(SphereGrid):
    """Uniform periodic grid on the unit circle."""

    n = 1

    def __init__(self, size: int):
        if size % 2 != 0:
            raise ValueError(
                f"odd node count {size} breaks antipodal symmetry; use an even count"
            )
        if size < 8:
            raise ValueError("circle grid needs at least 8 nodes")
        self.size = size
        self.theta = TWO_PI * np.arange(size) / size
        # Build half the circle and negate so antipodal pairs are bit-exact.
        half = np.stack(
            [np.cos(self.theta[: size // 2]), np.sin(self.theta[: size // 2])],
            axis=1,
        )
        self.nodes = np.concatenate([half, -half], axis=0)
        self.spacing = TWO_PI / size
        self.weights = np.full(size, self.spacing)
        self.antipode = (np.arange(size) + size // 2) % size
        # 4th-order periodic stencils, applied via circulant rolls.
        self._d1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * self.spacing)
        self._d2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (
            12.0 * self.spacing**2
        )

    @property
    def resolution_descriptor(self):
        return {"kind": "circle", "size": self.size}

    def _apply_stencil(self, f, coeffs):
        out = np.zeros_like(f)
        for k, c in zip(range(-2, 3), coeffs):
            if c != 0.0:
                out += c * np.roll(f, -k)
        return out

    def project(self, values) -> np.ndarray:
        """Identity: circle samples retain their full trigonometric content."""
        return as_field(self, values)

    def gradient(self, values) -> np.ndarray:
        """First derivative d/dtheta as a (size, 1) frame-component array."""
        f = as_field(self, values)
        return self._apply_stencil(f, self._d1)[:, None]

    def covariant_hessian(self, values) -> np.ndarray:
        """Second derivative d^2/dtheta^2 as a (size, 1, 1) array."""
        f = as_field(self, values)
        return self._apply_stencil(f, self._d2).reshape(-1, 1, 1)

    def frames(self) -> np.ndarray:
        """Unit tangent per node, shape (size, 1, 2)."""
        t = np.stack([-np.sin(self.theta), np.cos(self.theta)], axis=1)
        return t[:, None, :]

    @property
    def spectral_scale(self) -> float:
        """Largest eigenvalue magnitude of the discrete second derivative."""
        return (16.0 / 3.0) / self.spacing**2

    # -- trigonometric interpolant -------------------------------------------

    def analyze(self, values) -> np.ndarray:
        """Complex Fourier coefficients of the interpolant (rfft layout)."""
        return np.fft.rfft(as_field(self, values)) / self.size

    def evaluate(self, coeffs, points, order: int = 0):
        """Evaluate the trigonometric interpolant at arbitrary unit vectors.

        Returns (values,) for order 0, plus frame gradient (Q, 1) and frame
        Hessian (Q, 1, 1) and frames (Q, 1, 2) for order 2.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        psi = np.arctan2(pts[:, 1], pts[:, 0])
        m = np.arange(coeffs.size)
        # Interior modes count twice (conjugate pair); Nyquist mode once.
        scale = np.full(coeffs.size, 2.0)
        scale[0] = 1.0
        if self.size % 2 == 0:
            scale[-1] = 1.0
        phase = np.exp(1j * np.outer(psi, m))
        c = coeffs * scale
        val = np.real(phase @ c)
        if order == 0:
            return (val,)
        d1 = np.real(phase @ (1j * m * c))[:, None]
        if order == 1:
            return val, d1
        d2 = np.real(phase @ (-(m**2) * c))[:, None, None]
        frames = np.stack([-np.sin(psi), np.cos(psi)], axis=1)[:, None, :]
        return val, d1, d2, frames

    def interpolate(self, values, points) -> np.ndarray:
        return self.evaluate(self.analyze(values), points)[0]


class LatLonGrid(SphereGrid):
    """Gauss-Legendre latitudes x uniform longitudes on S^2.

    Latitude nodes avoid the poles; an even longitude count makes the grid
    exactly antipodally symmetric.  The working basis is the real
    orthonormal spherical harmonics up to degree ``min(nlat // 2,
    (nlon - 2) // 2)``, for which discrete analysis equals the continuous
    projection.
    """

    n = 2

    def __init__(self, nlat: int, nlon: int):
        if nlon % 2 != 0:
            raise ValueError(
                f"odd longitude count {nlon} breaks antipodal symmetry"
            )
        if nlat < 8 or nlon < 8:
            raise ValueError("sphere grid needs at least 8 nodes per axis")
        self.nlat, self.nlon = nlat, nlon
        self.size = nlat * nlon

        x, wx = np.polynomial.legendre.leggauss(nlat)
        # Enforce exact +/- symmetry of the Gauss nodes so the antipodal
        # map is a bit-exact grid symmetry.
        x = 0.5 * (x - x[::-1])
        wx = 0.5 * (wx + wx[::-1])
        order = np.argsort(-x)  # colatitude ascending (north to south)
        self._x = x[order]
        self._wlat = wx[order]
        self.theta = np.arccos(self._x)
        self._sin_t = np.sqrt(1.0 - self._x**2)

        self.phi = TWO_PI * np.arange(nlon) / nlon
        ct, st = self._x, self._sin_t
        # Negate the first half-turn of longitudes for the second so that
        # antipodal node pairs are bit-exact.
        cp_half = np.cos(self.phi[: nlon // 2])
        sp_half = np.sin(self.phi[: nlon // 2])
        cp = np.concatenate([cp_half, -cp_half])
        sp = np.concatenate([sp_half, -sp_half])
        self.nodes = np.stack(
            [
                np.outer(st, cp).ravel(),
                np.outer(st, sp).ravel(),
                np.outer(ct, np.ones(nlon)).ravel(),
            ],
            axis=1,
        )
        self.weights = np.repeat(self._wlat * (TWO_PI / nlon), nlon)

        i = np.repeat(np.arange(nlat), nlon)
        j = np.tile(np.arange(nlon), nlat)
        self.antipode = (nlat - 1 - i) * nlon + (j + nlon // 2) % nlon

        self.degree = min(nlat // 2, (nlon - 2) // 2)
        self._tables = None  # lazy per-grid Legendre tables

    @property
    def resolution_descriptor(self):
        return {"kind": "latlon", "nlat": self.nlat, "nlon": self.nlon}

    # -- Legendre / trigonometric tables --------------------------------------

    def _basis(self):
        if self._tables is None:
            L = self.degree
            P, Pt, Ptt = _legendre_theta_tables(self._x, L)
            T, dT, d2T = _trig_tables(self.phi, L)
            self._tables = (P, Pt, Ptt, T, dT, d2T)
        return self._tables

    def analyze(self, values) -> np.ndarray:
        """Real spherical-harmonic coefficients, shape (L+1, L+1, 2).

        Index layout is [m, l, parity] with parity 0 = cos(m phi),
        1 = sin(m phi); entries with l < m are zero.
        """
        f = as_field(self, values).reshape(self.nlat, self.nlon)
        P, _, _, T, _, _ = self._basis()
        g = np.einsum("ij,jmp->imp", f, T) * (TWO_PI / self.nlon)
        return np.einsum("i,iml,imp->mlp", self._wlat, P, g)

    def _synth(self, coeffs, Ptab, Ttab) -> np.ndarray:
        prof = np.einsum("iml,mlp->imp", Ptab, coeffs)
        return np.einsum("imp,jmp->ij", prof, Ttab)

    def synthesize(self, coeffs) -> np.ndarray:
        P, _, _, T, _, _ = self._basis()
        return self._synth(coeffs, P, T).ravel()

    def project(self, values) -> np.ndarray:
        """Projection onto the working band-limited space."""
        return self.synthesize(self.analyze(values))

    def gradient(self, values) -> np.ndarray:
        """Covariant gradient in the (e_theta, e_phi) frame, shape (size, 2)."""
        c = self.analyze(values)
        P, Pt, _, T, dT, _ = self._basis()
        st = self._sin_t[:, None]
        g_t = self._synth(c, Pt, T)
        g_p = self._synth(c, P, dT) / st
        return np.stack([g_t.ravel(), g_p.ravel()], axis=1)

    def covariant_hessian(self, values) -> np.ndarray:
        """Second covariant derivative in the orthonormal frame, (size, 2, 2).

        Computed on the band-limited interpolant; exact (to round-off) for
        fields within the working degree.
        """
        c = self.analyze(values)
        return self._hessian_from_coeffs(c)

    def _hessian_from_coeffs(self, c) -> np.ndarray:
        P, Pt, Ptt, T, dT, d2T = self._basis()
        st = self._sin_t[:, None]
        ct = self._x[:, None]
        s_t = self._synth(c, Pt, T)
        s_p = self._synth(c, P, dT)
        s_tt = self._synth(c, Ptt, T)
        s_tp = self._synth(c, Pt, dT)
        s_pp = self._synth(c, P, d2T)
        h_tt = s_tt
        h_tp = s_tp / st - ct * s_p / st**2
        h_pp = s_pp / st**2 + ct * s_t / st
        out = np.empty((self.size, 2, 2))
        out[:, 0, 0] = h_tt.ravel()
        out[:, 0, 1] = out[:, 1, 0] = h_tp.ravel()
        out[:, 1, 1] = h_pp.ravel()
        return out

    def frames(self) -> np.ndarray:
        """Orthonormal tangent frame (e_theta, e_phi) per node, (size, 2, 3)."""
        return _frames_at(self.nodes)

    @property
    def spectral_scale(self) -> float:
        """Spectral radius L(L+1) of the Laplace-Beltrami on the basis."""
        return float(self.degree * (self.degree + 1))

    # -- arbitrary-point evaluation -------------------------------------------

    def evaluate(self, coeffs, points, order: int = 0):
        """Evaluate the band-limited interpolant at arbitrary unit vectors.

        Returns (values,), or (values, frame gradient), or
        (values, gradient, frame Hessian, frames) depending on ``order``.
        Large point sets are processed in blocks to bound the size of the
        per-point Legendre tables.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        block = max(1, 2_000_000 // (self.degree + 1) ** 2)
        if pts.shape[0] > block:
            parts = [
                self.evaluate(coeffs, pts[i:i + block], order)
                for i in range(0, pts.shape[0], block)
            ]
            return tuple(np.concatenate(comp, axis=0) for comp in zip(*parts))
        x = np.clip(pts[:, 2], -1.0 + 1e-12, 1.0 - 1e-12)
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        L = self.degree
        nder = 2 if order >= 2 else (1 if order == 1 else 0)
        tabs = _legendre_theta_tables(x, L, nder)
        T, dT, d2T = _trig_tables(phi, L)
        st = np.sqrt(1.0 - x**2)

        def synth(Ptab, Ttab):
            prof = np.einsum("qml,mlp->qmp", Ptab, coeffs)
            return np.einsum("qmp,qmp->q", prof, Ttab)

        val = synth(tabs[0], T)
        if order == 0:
            return (val,)
        s_p = synth(tabs[0], dT)
        g = np.stack([synth(tabs[1], T), s_p / st], axis=1)
        if order == 1:
            return val, g
        s_tt = synth(tabs[2], T)
        s_tp = synth(tabs[1], dT)
        s_pp = synth(tabs[0], d2T)
        ct = x
        h = np.empty((pts.shape[0], 2, 2))
        h[:, 0, 0] = s_tt
        h[:, 0, 1] = h[:, 1, 0] = s_tp / st - ct * s_p / st**2
        h[:, 1, 1] = s_pp / st**2 + ct * g[:, 0] / st
        return val, g, h, _frames_at(pts)

    def interpolate(self, values, points) -> np.ndarray:
        return self.evaluate(self.analyze(values), points)[0]


def _frames_at(points: np.ndarray) -> np.ndarray:
    """Orthonormal tangent frame (e_theta, e_phi) at unit vectors, (Q, 2, 3)."""
    pts = np.atleast_2d(points)
    x = np.clip(pts[:, 2], -1.0, 1.0)
    st = np.sqrt(np.maximum(1.0 - x**2, 1e-30))
    cp = pts[:, 0] / st
    sp = pts[:, 1] / st
    e_t = np.stack([x * cp, x * sp, -st], axis=1)
    e_p = np.stack([-sp, cp, np.zeros_like(sp)], axis=1)
    return np.stack([e_t, e_p], axis=1)


def _legendre_theta_tables(x: np.ndarray, L: int, nder: int = 2):
    """Fully normalized associated Legendre tables with theta-derivatives.

    Returns padded arrays of shape (len(x), L+1, L+1) indexed [point, m, l]
    containing Pbar_l^m(x), d/dtheta Pbar_l^m(cos theta), and
    d^2/dtheta^2 Pbar_l^m, the latter via the associated Legendre ODE.
    Entries with l < m are zero.  Normalization: int_{S^2} (Ylm)^2 = 1.
    """
    x = np.asarray(x, dtype=float)
    q = x.shape[0]
    st = np.sqrt(1.0 - x**2)
    P = np.zeros((q, L + 1, L + 1))
    P[:, 0, 0] = np.sqrt(1.0 / (4.0 * np.pi))
    for m in range(1, L + 1):
        P[:, m, m] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * P[:, m - 1, m - 1]
    for m in range(L + 1):
        if m + 1 <= L:
            P[:, m, m + 1] = np.sqrt(2.0 * m + 3.0) * x * P[:, m, m]
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(
                ((2.0 * l + 1.0) * ((l - 1.0) ** 2 - m * m))
                / ((2.0 * l - 3.0) * (l * l - m * m))
            )
            P[:, m, l] = a * x * P[:, m, l - 1] - b * P[:, m, l - 2]
    if nder == 0:
        return (P,)
    Pt = np.zeros_like(P)
    for m in range(L + 1):
        for l in range(m, L + 1):
            low = P[:, m, l - 1] if l - 1 >= m else 0.0
            c = np.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0)) if l > m else 0.0
            Pt[:, m, l] = (l * x * P[:, m, l] - c * low) / st
    if nder == 1:
        return P, Pt
    Ptt = np.zeros_like(P)
    cot = x / st
    for m in range(L + 1):
        for l in range(m, L + 1):
            Ptt[:, m, l] = -cot * Pt[:, m, l] - (
                l * (l + 1.0) - (m * m) / st**2
            ) * P[:, m, l]
    return P, Pt, Ptt


def _trig_tables(phi: np.ndarray, L: int):
    """Longitude factor tables T, dT/dphi, d2T/dphi2 of shape (len(phi), L+1, 2).

    T[:, m, 0] = sqrt(2) cos(m phi), T[:, m, 1] = sqrt(2) sin(m phi) for
    m > 0, and T[:, 0, 0] = 1 (with the sin channel zero).
    """
    phi = np.asarray(phi, dtype=float)
    m = np.arange(L + 1)
    norm = np.where(m == 0, 1.0, np.sqrt(2.0))
    C = norm * np.cos(np.outer(phi, m))
    S = norm * np.sin(np.outer(phi, m))
    S[:, 0] = 0.0
    T = np.stack([C, S], axis=2)
    dT = np.stack([-m * S, m * C], axis=2)
    d2T = -(m**2)[None, :, None] * T
    return T, dT, d2T
