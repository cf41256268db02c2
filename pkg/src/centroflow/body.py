"""Origin-symmetric strictly convex bodies represented by support functions.

A :class:`Body` samples the support function on a :class:`~centroflow.sphere.SphereGrid`
and lazily caches the derived curvature fields: the radii-of-curvature
matrix, its determinant (the reciprocal Gauss curvature read through the
Gauss map), and the centro-affine curvature.  All geometric operations
(volume, polar body, linear images, curvature extremes) live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sphere import SphereGrid, as_field

__all__ = [
    "Body",
    "ConvexityError",
    "CurvatureSummary",
    "unit_ball_volume",
    "mahler_volume",
]

# Relative eigenvalue floor below which a body is declared non-convex.
CONVEXITY_FLOOR = 1e-10
# Node-level tolerance for the origin-symmetry invariant.
SYMMETRY_TOL = 1e-12


class ConvexityError(ValueError):
    """Raised when the radii-of-curvature matrix fails to be positive definite."""

    def __init__(self, message, node_index=None, node=None, eigenvalue=None):
        super().__init__(message)
        self.node_index = node_index
        self.node = node
        self.eigenvalue = eigenvalue


def unit_ball_volume(dim: int) -> float:
    """Lebesgue volume of the unit ball in R^dim."""
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


@dataclass(frozen=True)
class CurvatureSummary:
    """Extremes of the pointwise curvature fields of a body."""

    sn_min: float
    sn_max: float
    centro_affine_min: float
    centro_affine_max: float
    lambda_min: float
    lambda_max: float
    mean_curvature_max: float


class Body:
    """Origin-symmetric, strictly convex body sampled by its support function.

    Parameters
    ----------
    grid : SphereGrid
    support : array_like, shape (grid.size,)
        Support-function samples (positive).
    symmetrize : bool
        Replace s by its antipodal average and record the applied
        correction (default).  Disable only for data that is already
        exactly symmetric, e.g. snapshot round-trips.
    band_limit : bool
        Project onto the grid's working band-limited space (no-op on the
        circle).  Disable for snapshot round-trips.
    validate : bool
        Check positivity, symmetry, and strict convexity.
    """

    def __init__(self, grid: SphereGrid, support, *, symmetrize: bool = True,
                 band_limit: bool = True, validate: bool = True):
        f = as_field(grid, support)
        correction = 0.0
        if symmetrize:
            g = grid.symmetrize(f)
            correction = float(np.max(np.abs(g - f)))
            f = g
        if band_limit:
            f = grid.project(f)
        self.grid = grid
        self.s = f
        self.s.flags.writeable = False
        self.symmetrization_correction = correction
        self._radii = None
        self._radii_eigs = None
        self._sn = None
        self._cac = None
        self._coeffs = None
        if validate:
            self._validate()

    # -- invariants ------------------------------------------------------------

    def _validate(self):
        smin = float(np.min(self.s))
        if smin <= 0.0:
            k = int(np.argmin(self.s))
            raise ValueError(
                f"support function must be positive (origin interior); "
                f"min {smin:.3e} at node {k}"
            )
        asym = float(np.max(np.abs(self.s - self.s[self.grid.antipode])))
        if asym > SYMMETRY_TOL * float(np.max(self.s)):
            raise ValueError(
                f"support function is not origin-symmetric (deviation {asym:.3e})"
            )
        self.radii_of_curvature()  # raises ConvexityError on failure

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def coeffs(self) -> np.ndarray:
        """Interpolant coefficients of s (cached)."""
        if self._coeffs is None:
            self._coeffs = self.grid.analyze(self.s)
        return self._coeffs

    # -- curvature fields --------------------------------------------------------

    def radii_of_curvature(self) -> np.ndarray:
        """Radii-of-curvature matrix per node in the orthonormal frame.

        Shape (size, n, n); symmetric positive definite for a valid body.
        Raises :class:`ConvexityError` if any eigenvalue falls below the
        relative floor.
        """
        if self._radii is None:
            hess = self.grid.covariant_hessian(self.s)
            r = hess + self.s[:, None, None] * np.eye(self.n)
            eigs = _sym_eigenvalues(r)
            lam_min = float(eigs.min())
            lam_max = float(eigs.max())
            if lam_min <= CONVEXITY_FLOOR * lam_max:
                k = int(np.argmin(eigs.min(axis=1)))
                raise ConvexityError(
                    f"body is not strictly convex: min principal radius "
                    f"{lam_min:.3e} at node {k} (floor {CONVEXITY_FLOOR:.0e} x "
                    f"max {lam_max:.3e})",
                    node_index=k,
                    node=self.grid.nodes[k].copy(),
                    eigenvalue=lam_min,
                )
            self._radii = r
            self._radii_eigs = eigs
        return self._radii

    def principal_radii(self) -> np.ndarray:
        """Eigenvalues of the radii-of-curvature matrix, shape (size, n)."""
        self.radii_of_curvature()
        return self._radii_eigs

    def reciprocal_gauss_curvature(self) -> np.ndarray:
        """Determinant of the radii-of-curvature matrix (S_n field).

        Equals 1 / (Gauss curvature composed with the inverse Gauss map).
        """
        if self._sn is None:
            r = self.radii_of_curvature()
            if self.n == 1:
                self._sn = r[:, 0, 0].copy()
            else:
                self._sn = r[:, 0, 0] * r[:, 1, 1] - r[:, 0, 1] ** 2
        return self._sn

    def gauss_curvature(self) -> np.ndarray:
        return 1.0 / self.reciprocal_gauss_curvature()

    def centro_affine_curvature(self) -> np.ndarray:
        """Gauss curvature divided by s^(n+2); SL-invariant in min and max."""
        if self._cac is None:
            self._cac = 1.0 / (self.reciprocal_gauss_curvature() * self.s ** (self.n + 2))
        return self._cac

    def curvature_summary(self) -> CurvatureSummary:
        eigs = self.principal_radii()
        sn = self.reciprocal_gauss_curvature()
        cac_lo, cac_hi = self.centro_affine_extremes()
        mean_curv = np.sum(1.0 / eigs, axis=1)
        return CurvatureSummary(
            sn_min=float(sn.min()),
            sn_max=float(sn.max()),
            centro_affine_min=cac_lo,
            centro_affine_max=cac_hi,
            lambda_min=float(eigs.min()),
            lambda_max=float(eigs.max()),
            mean_curvature_max=float(mean_curv.max()),
        )

    def curvature_at(self, points) -> np.ndarray:
        """Centro-affine curvature at arbitrary unit vectors, evaluated
        through the band-limited interpolant of s."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        val, _, hess, _ = self.grid.evaluate(self.coeffs, pts, order=2)
        r = hess + val[:, None, None] * np.eye(self.n)
        if self.n == 1:
            det = r[:, 0, 0]
        else:
            det = r[:, 0, 0] * r[:, 1, 1] - r[:, 0, 1] ** 2
        return 1.0 / (det * val ** (self.n + 2))

    def centro_affine_extremes(self) -> tuple[float, float]:
        """Min and max of the centro-affine curvature over the sphere.

        Node extremes are polished by two stages of local quadratic fits
        on the composite curvature, which removes the O(h^2) bias of pure
        node sampling; the extremes (not the field) are the special-linear
        invariants audited along flows.
        """
        cac = self.centro_affine_curvature()
        lo = _polish_extremum(self, int(np.argmin(cac)), sign=-1.0)
        hi = _polish_extremum(self, int(np.argmax(cac)), sign=+1.0)
        return min(lo, float(cac.min())), max(hi, float(cac.max()))

    # -- integral and radial quantities -------------------------------------------

    def volume(self) -> float:
        """Enclosed volume, (1/(n+1)) * integral of s * det(radii)."""
        sn = self.reciprocal_gauss_curvature()
        return self.grid.integrate(self.s * sn) / (self.n + 1)

    def radii_bounds(self) -> tuple[float, float]:
        """(inradius, circumradius); for origin-symmetric bodies these are
        the extremes of the support function."""
        return float(np.min(self.s)), float(np.max(self.s))

    # -- maps -------------------------------------------------------------------

    def polar(self) -> "Body":
        """Polar dual body sampled on the same grid.

        Uses s*(z) = max_u <z,u> / s(u), located by discrete search and
        refined by Newton iterations on the interpolant.
        """
        values = dual_support_transform(self.grid, self.s, coeffs=self.coeffs)
        try:
            return Body(self.grid, values)
        except ConvexityError as err:
            raise ConvexityError(
                f"computed polar body violates strict convexity at this "
                f"resolution: {err}",
                node_index=err.node_index,
                node=err.node,
                eigenvalue=err.eigenvalue,
            ) from err

    def linear_image(self, matrix) -> "Body":
        """Image of the body under an invertible linear map A.

        The support function transforms as s_AK(z) = |A^T z| s(A^T z / |A^T z|),
        resampled through the body's interpolant.
        """
        d = self.n + 1
        A = np.asarray(matrix, dtype=float)
        if A.shape != (d, d):
            raise ValueError(f"matrix must be {d}x{d}")
        if abs(np.linalg.det(A)) < 1e-300:
            raise ValueError("matrix is singular")
        w = self.grid.nodes @ A  # rows A^T z
        norms = np.linalg.norm(w, axis=1)
        dirs = w / norms[:, None]
        vals = self.grid.evaluate(self.coeffs, dirs)[0]
        return Body(self.grid, norms * vals)

    def scaled(self, c: float) -> "Body":
        if c <= 0:
            raise ValueError("scale factor must be positive")
        return Body(self.grid, c * self.s, symmetrize=False, band_limit=False)


def mahler_volume(body: Body) -> float:
    """V(K) V(K*): the GL-invariant volume product."""
    return body.volume() * body.polar().volume()


def _polish_extremum(body: Body, node_index: int, sign: float) -> float:
    """Refine a node extremum of the centro-affine curvature off-node.

    Two stages of 3^n-point quadratic fits with halving stencil size;
    each stage relocates the extremum to second order, so the returned
    value carries an O(h^4)-level bias instead of O(h^2).
    """
    grid = body.grid
    center = grid.nodes[node_index].copy()
    if grid.n == 1:
        sigma = grid.spacing
    else:
        sigma = max(np.pi / grid.nlat, 2.0 * np.pi / grid.nlon)
    offsets = np.array([-1.0, 0.0, 1.0])
    best = sign * float(body.centro_affine_curvature()[node_index])
    for _ in range(4):
        frame = _frame_at_point(center, grid.n)
        if grid.n == 1:
            xi = offsets[:, None] * sigma
        else:
            xi = np.array([[a, b] for a in offsets for b in offsets]) * sigma
        pts = center[None, :] + xi @ frame
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        vals = sign * body.curvature_at(pts)
        best = max(best, float(vals.max()))
        coeff, shift = _quadratic_peak(xi / sigma, vals)
        if coeff is not None:
            # The fit locates the extremum; values come from evaluations.
            step = np.clip(shift, -1.5, 1.5) * sigma
        else:
            # Degenerate fit (ridge): pattern-search toward the best sample.
            step = xi[int(np.argmax(vals))]
        center = center + step @ frame
        center /= np.linalg.norm(center)
        sigma *= 0.5
    best = max(best, sign * float(body.curvature_at(center[None, :])[0]))
    return sign * best


def _frame_at_point(z: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.array([[-z[1], z[0]]])
    from .sphere import _frames_at

    return _frames_at(z[None, :])[0]


def _quadratic_peak(xi: np.ndarray, vals: np.ndarray):
    """Least-squares quadratic fit; returns (peak value, peak location) or
    (None, None) when the fit has no interior maximum."""
    npts, nd = xi.shape
    if nd == 1:
        basis = np.stack([np.ones(npts), xi[:, 0], xi[:, 0] ** 2], axis=1)
    else:
        basis = np.stack(
            [np.ones(npts), xi[:, 0], xi[:, 1], xi[:, 0] ** 2,
             xi[:, 0] * xi[:, 1], xi[:, 1] ** 2],
            axis=1,
        )
    c, *_ = np.linalg.lstsq(basis, vals, rcond=None)
    if nd == 1:
        a = c[2]
        if a >= 0.0:
            return None, None
        shift = -c[1] / (2.0 * a)
        peak = c[0] + c[1] * shift + a * shift**2
        return float(peak), np.array([shift])
    hxx, hxy, hyy = 2.0 * c[3], c[4], 2.0 * c[5]
    det = hxx * hyy - hxy**2
    if det <= 0.0 or hxx >= 0.0:
        return None, None
    gx, gy = c[1], c[2]
    sx = -(hyy * gx - hxy * gy) / det
    sy = -(-hxy * gx + hxx * gy) / det
    shift = np.array([sx, sy])
    peak = (c[0] + gx * sx + gy * sy + 0.5 * (hxx * sx**2 + 2 * hxy * sx * sy
                                              + hyy * sy**2))
    return float(peak), shift


def _sym_eigenvalues(r: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric (size, n, n) fields, closed form, (size, n)."""
    if r.shape[1] == 1:
        return r[:, :, 0].copy()
    a, b, c = r[:, 0, 0], r[:, 0, 1], r[:, 1, 1]
    half = 0.5 * (a + c)
    disc = np.sqrt(np.maximum((0.5 * (a - c)) ** 2 + b**2, 0.0))
    return np.stack([half - disc, half + disc], axis=1)


def dual_support_transform(grid: SphereGrid, values, coeffs=None,
                           newton_iterations: int = 8) -> np.ndarray:
    """Per-node maximum of <z, u> / f(u) over the sphere.

    For f = s_K this is the support function of the polar body; for
    f = 1/rho it recovers the support function of the body with radial
    function rho.  The discrete argmax over grid nodes is refined by
    safeguarded Newton iterations on the band-limited interpolant.
    """
    f = as_field(grid, values)
    if np.min(f) <= 0.0:
        raise ValueError("dual transform requires a positive field")
    if coeffs is None:
        coeffs = grid.analyze(f)
    Z = grid.nodes
    ratio = (Z @ Z.T) / f[None, :]
    best_idx = np.argmax(ratio, axis=1)
    best_val = ratio[np.arange(grid.size), best_idx]
    u = Z[best_idx].copy()

    if grid.n == 1:
        clamp = 1.5 * grid.spacing
    else:
        clamp = np.pi / grid.nlat + 2.0 * np.pi / grid.nlon

    for _ in range(newton_iterations):
        val, grad, hess, frames = grid.evaluate(coeffs, u, order=2)
        p = np.einsum("qd,qd->q", Z, u)
        p_tan = np.einsum("qd,qad->qa", Z, frames)
        q = p / val
        best_val = np.maximum(best_val, q)
        # gradient and Hessian of q = p / f in the tangent frame
        gq = p_tan / val[:, None] - (p / val**2)[:, None] * grad
        hq = (
            -(p / val)[:, None, None] * np.eye(grid.n)
            - (p_tan[:, :, None] * grad[:, None, :]
               + grad[:, :, None] * p_tan[:, None, :]) / val[:, None, None] ** 2
            - (p / val**2)[:, None, None] * hess
            + (2.0 * p / val**3)[:, None, None]
            * grad[:, :, None] * grad[:, None, :]
        )
        step = _newton_ascent_step(gq, hq, clamp)
        u = u + np.einsum("qa,qad->qd", step, frames)
        u /= np.linalg.norm(u, axis=1)[:, None]

    final = np.einsum("qd,qd->q", Z, u) / grid.evaluate(coeffs, u)[0]
    return np.maximum(best_val, final)


def _newton_ascent_step(grad: np.ndarray, hess: np.ndarray, clamp: float) -> np.ndarray:
    """Newton step -H^{-1} g for maximization, with fallback and clamping."""
    nq, nd = grad.shape
    if nd == 1:
        h = hess[:, 0, 0]
        ok = h < 0.0
        step = np.where(ok, -grad[:, 0] / np.where(ok, h, -1.0), 0.0)
        gnorm = np.abs(grad[:, 0])
        fallback = np.where(gnorm > 0, clamp * np.sign(grad[:, 0]), 0.0)
        step = np.where(ok, step, fallback)[:, None]
    else:
        a, b, c = hess[:, 0, 0], hess[:, 0, 1], hess[:, 1, 1]
        det = a * c - b * b
        ok = (det > 0.0) & (a < 0.0)  # negative definite
        safe_det = np.where(ok, det, 1.0)
        sx = -(c * grad[:, 0] - b * grad[:, 1]) / safe_det
        sy = -(-b * grad[:, 0] + a * grad[:, 1]) / safe_det
        step = np.stack([sx, sy], axis=1)
        gnorm = np.linalg.norm(grad, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            fallback = clamp * grad / np.where(gnorm > 0, gnorm, 1.0)[:, None]
        step = np.where(ok[:, None], step, fallback)
    norms = np.linalg.norm(step, axis=1)
    over = norms > clamp
    if np.any(over):
        step[over] *= (clamp / norms[over])[:, None]
    return step
