"""Seed bodies for flow experiments."""

from __future__ import annotations

import numpy as np

from .body import Body, dual_support_transform
from .sphere import SphereGrid

__all__ = ["ball", "ellipsoid", "harmonic_field", "perturbed_ball", "capped_ball"]


def ball(grid: SphereGrid, radius: float = 1.0) -> Body:
    if radius <= 0:
        raise ValueError("radius must be positive")
    return Body(grid, np.full(grid.size, float(radius)))


def ellipsoid(grid: SphereGrid, semi_axes) -> Body:
    """Origin-centered ellipsoid sum (x_i / a_i)^2 <= 1.

    The support function is s(z) = sqrt(sum (a_i z_i)^2).
    """
    a = np.asarray(semi_axes, dtype=float)
    if a.shape != (grid.n + 1,) or np.any(a <= 0):
        raise ValueError(f"need {grid.n + 1} positive semi-axes")
    return Body(grid, np.sqrt((grid.nodes**2) @ (a**2)))


def harmonic_field(grid: SphereGrid, degree: int, order: int = 0,
                   parity: int = 0) -> np.ndarray:
    """Samples of one orthonormal spherical harmonic on the grid.

    On the circle the harmonic of degree k is sqrt(1/pi) cos(k theta)
    (parity 0) or sqrt(1/pi) sin(k theta) (parity 1); ``order`` is ignored.
    """
    if grid.n == 1:
        if parity == 0:
            return np.cos(degree * grid.theta) / np.sqrt(np.pi)
        return np.sin(degree * grid.theta) / np.sqrt(np.pi)
    if not (0 <= order <= degree <= grid.degree):
        raise ValueError("need 0 <= order <= degree <= grid degree")
    c = np.zeros((grid.degree + 1, grid.degree + 1, 2))
    c[order, degree, parity] = 1.0
    return grid.synthesize(c)


def perturbed_ball(grid: SphereGrid, amplitude: float, degree: int = 4,
                   order: int = 0) -> Body:
    """Unit ball plus a single even-degree harmonic bump.

    The amplitude must leave the body strictly convex; this is checked by
    the Body constructor rather than assumed.
    """
    if degree % 2 != 0:
        raise ValueError("odd-degree harmonics break origin symmetry")
    return Body(grid, 1.0 + amplitude * harmonic_field(grid, degree, order))


def capped_ball(grid: SphereGrid, depth: float, width: float) -> Body:
    """Unit ball with two opposite caps cut off and the edges smoothed.

    Realized as the gauge body { |x|^q + (|x_d| / (1 - depth))^q <= 1 } with
    even q ~ 1/width; the support function is recovered from the radial
    function by the dual max transform.
    """
    if not 0.0 < depth < 1.0:
        raise ValueError("cap depth must be in (0, 1)")
    if not 0.0 < width <= 1.0:
        raise ValueError("smoothing width must be in (0, 1]")
    q = 2 * max(1, round(0.5 / width))
    c = 1.0 - depth
    u_axis = grid.nodes[:, -1]
    gauge = (1.0 + np.abs(u_axis / c) ** q) ** (1.0 / q)  # h(u) = 1 / rho(u)
    return Body(grid, dual_support_transform(grid, gauge))
