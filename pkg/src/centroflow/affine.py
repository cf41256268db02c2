"""Special-linear normalization, pinching thresholds, and Banach-Mazur bounds.

A body is normalized by fitting the minimum-volume enclosing (Loewner)
ellipsoid of its boundary samples and mapping it to a ball with the
unit-determinant part of the ellipsoid's square root.  The pinching
threshold delta(epsilon) and its admissibility condition
delta^(1+alpha) < 1.5 are evaluated here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .body import Body, mahler_volume, unit_ball_volume

__all__ = [
    "AffineFrame",
    "PinchingSpec",
    "mvee",
    "boundary_points",
    "normalize_special_linear",
    "banach_mazur_upper",
    "pinching_delta",
    "max_admissible_epsilon",
    "mahler_pinched",
]

MVEE_TOL = 1e-7
MVEE_MAX_ITERATIONS = 100_000


@dataclass(frozen=True)
class AffineFrame:
    """A unit-determinant matrix normalizing a body, with its fit data."""

    matrix: np.ndarray
    quadratic_form: np.ndarray
    achieved_ratio: float

    def __post_init__(self):
        det = float(np.linalg.det(self.matrix))
        if abs(det - 1.0) > 1e-10:
            raise ValueError(f"frame determinant {det} deviates from 1")
        if self.achieved_ratio < 1.0 - 1e-12:
            raise ValueError("achieved ratio must be at least 1")


@dataclass(frozen=True)
class PinchingSpec:
    """Pinching parameter, stability constant, and the derived ratio bound."""

    epsilon: float
    gamma: float
    n: int
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")

    @property
    def delta(self) -> float:
        return pinching_delta(self.epsilon, self.gamma, self.n)

    @property
    def admissible(self) -> bool:
        """Whether delta^(1+alpha) < 1.5 (small-epsilon assumption)."""
        return self.delta ** (1.0 + self.alpha) < 1.5


def mvee(points, tol: float = MVEE_TOL, max_iterations: int = MVEE_MAX_ITERATIONS,
         weights=None) -> np.ndarray:
    """Minimum-volume origin-centered ellipsoid containing a symmetric set.

    Parameters
    ----------
    points : (N, d) array
        Sample points; the set is treated as centrally symmetric (the
        solution for X equals the one for X union -X).
    tol : float
        Relative volume optimality target.
    weights : optional (N,) array
        Initial simplex weights (e.g. quadrature weights) to warm-start.

    Returns
    -------
    Q : (d, d) SPD matrix with x^T Q x <= 1 for all points and volume
        within a (1 + tol) factor of optimal.

    Khachiyan coordinate ascent (with Wolfe-Atwood drop steps) on the dual
    log-det problem, finished when necessary by a primal log-barrier Newton
    refinement; first-order ascent alone stalls on smooth surface samples
    where nearly every point is active.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] < X.shape[1]:
        raise ValueError("need at least d points of dimension d")
    npts, d = X.shape
    scatter = X.T @ X
    eigs = np.linalg.eigvalsh(scatter)
    if eigs[0] <= 1e-12 * max(eigs[-1], 1e-300):
        raise ValueError("points do not span the space (degenerate ellipsoid)")

    if weights is None:
        u = np.full(npts, 1.0 / npts)
    else:
        u = np.asarray(weights, dtype=float)
        if u.shape != (npts,) or np.any(u < 0) or u.sum() <= 0:
            raise ValueError("invalid warm-start weights")
        u = u / u.sum()

    # Certificate tolerance giving a (1 + tol) volume factor.
    eps_tol = 2.0 * tol / d

    def refresh():
        s_inv = np.linalg.inv(X.T @ (u[:, None] * X))
        g = np.einsum("nd,de,ne->n", X, s_inv, X)
        return s_inv, g

    s_inv, g = refresh()
    converged = False
    ascent_budget = min(max_iterations, 3000)
    for iterations in range(1, ascent_budget + 1):
        j_add = int(np.argmax(g))
        eps_add = g[j_add] / d - 1.0
        g_active = np.where(u > 1e-16, g, np.inf)
        j_drop = int(np.argmin(g_active))
        eps_drop = 1.0 - g[j_drop] / d
        if eps_add <= eps_tol and eps_drop <= eps_tol:
            converged = True
            break
        if eps_add >= eps_drop:
            j = j_add
            beta = (g[j] - d) / (d * (g[j] - 1.0))
        else:
            j = j_drop
            if g[j] <= 1.0 + 1e-15 or u[j] >= 1.0 - 1e-15:
                beta = -u[j] / (1.0 - u[j]) if u[j] < 1.0 else 0.0
            else:
                beta = max((g[j] - d) / (d * (g[j] - 1.0)),
                           -u[j] / (1.0 - u[j]))
        u *= 1.0 - beta
        u[j] += beta
        if iterations % 64 == 0:
            s_inv, g = refresh()
        else:
            v = s_inv @ X[j]
            denom = (1.0 - beta) + beta * g[j]
            s_inv = (s_inv - (beta / denom) * np.outer(v, v)) / (1.0 - beta)
            xv = X @ v
            g = (g - (beta / denom) * xv**2) / (1.0 - beta)

    s_inv, g = refresh()
    q_form = s_inv / float(np.max(g))
    if converged:
        return q_form
    return _barrier_refine(X, q_form, tol)


def _barrier_refine(X: np.ndarray, q_start: np.ndarray, tol: float,
                    max_newton: int = 400) -> np.ndarray:
    """Primal log-barrier Newton for the centered MVEE.

    Minimizes -log det Q + mu * sum(-log(1 - x^T Q x)) over symmetric Q,
    following the barrier path down to a duality gap below the volume
    tolerance.  The unknown is the packed upper triangle of Q (3 or 6
    entries), so each Newton step is cheap.
    """
    npts, d = X.shape
    pairs = [(i, i) for i in range(d)] + [
        (i, j) for i in range(d) for j in range(i + 1, d)
    ]
    nb = len(pairs)
    phi = np.empty((npts, nb))
    for a, (i, j) in enumerate(pairs):
        phi[:, a] = X[:, i] ** 2 if i == j else 2.0 * X[:, i] * X[:, j]

    def unpack(q):
        Q = np.zeros((d, d))
        for a, (i, j) in enumerate(pairs):
            Q[i, j] = Q[j, i] = q[a]
        return Q

    def pack(Q):
        return np.array([Q[i, j] for (i, j) in pairs])

    def basis(a):
        E = np.zeros((d, d))
        i, j = pairs[a]
        E[i, j] = E[j, i] = 1.0
        return E

    bases = [basis(a) for a in range(nb)]

    q = pack(q_start * (1.0 - 1e-6))
    mu_final = 0.5 * tol / npts
    mu = max(1.0 / npts, 4.0 * mu_final)
    newton_used = 0
    while True:
        for _ in range(50):
            newton_used += 1
            if newton_used > max_newton:
                raise RuntimeError(
                    "enclosing-ellipsoid fit did not converge: barrier "
                    f"refinement exceeded {max_newton} Newton steps at "
                    f"mu={mu:.3e}"
                )
            Q = unpack(q)
            W = np.linalg.inv(Q)
            r = 1.0 - phi @ q
            grad = np.array([-np.trace(W @ E) for E in bases]) + mu * (
                phi.T @ (1.0 / r)
            )
            WE = [W @ E for E in bases]
            hess = np.array(
                [[np.trace(WE[a] @ WE[b]) for b in range(nb)] for a in range(nb)]
            ) + mu * (phi.T * (1.0 / r**2)) @ phi
            step = np.linalg.solve(hess, -grad)
            decrement = float(-grad @ step)
            # backtrack to stay strictly feasible and positive definite
            tstep = 1.0
            for _ in range(60):
                q_new = q + tstep * step
                r_new = 1.0 - phi @ q_new
                if np.min(r_new) > 0.0 and np.all(
                    np.linalg.eigvalsh(unpack(q_new)) > 0.0
                ):
                    break
                tstep *= 0.5
            else:
                raise RuntimeError(
                    "enclosing-ellipsoid fit: barrier line search failed"
                )
            q = q + tstep * step
            if decrement < 1e-13:
                break
        if mu <= mu_final:
            break
        mu = max(mu * 0.1, mu_final)

    Q = unpack(q)
    g_final = phi @ q
    return Q / float(np.max(g_final))


def boundary_points(body: Body) -> np.ndarray:
    """Boundary embedding through the support function: s z + tangential grad."""
    grid = body.grid
    grad = grid.gradient(body.s)
    frames = grid.frames()
    return body.s[:, None] * grid.nodes + np.einsum("qa,qad->qd", grad, frames)


def normalize_special_linear(body: Body, tol: float = MVEE_TOL) -> tuple[AffineFrame, Body]:
    """Normalize a body by its Loewner ellipsoid, det-1 frame.

    Returns the frame and the normalized body.  If the candidate frame
    fails to reduce the circumradius/inradius ratio (possible for bodies
    far from ellipsoidal), the identity frame is returned instead so the
    achieved ratio never exceeds the input ratio.
    """
    d = body.n + 1
    pts = boundary_points(body)
    q_form = mvee(pts, tol=tol, weights=body.grid.weights)
    evals, vecs = np.linalg.eigh(q_form)
    root = (vecs * np.sqrt(evals)) @ vecs.T
    matrix = root / np.linalg.det(root) ** (1.0 / d)

    r_lo, r_hi = body.radii_bounds()
    ratio_before = r_hi / r_lo
    candidate = body.linear_image(matrix)
    c_lo, c_hi = candidate.radii_bounds()
    ratio_after = c_hi / c_lo
    if ratio_after <= ratio_before * (1.0 + 1e-12):
        return AffineFrame(matrix, q_form, ratio_after), candidate
    return (
        AffineFrame(np.eye(d), q_form, ratio_before),
        Body(body.grid, body.s, symmetrize=False, band_limit=False),
    )


def banach_mazur_upper(body: Body) -> float:
    """Upper bound on the Banach-Mazur distance to the ball: log of the
    circumradius/inradius ratio in the normalizing frame."""
    _, normalized = normalize_special_linear(body)
    r_lo, r_hi = normalized.radii_bounds()
    return math.log(r_hi / r_lo)


def pinching_delta(epsilon: float, gamma: float, n: int) -> float:
    """Ratio bound exp(gamma eps^(2/(3(n+2))) |log eps|^(4/(3(n+2))))."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    a = 2.0 / (3.0 * (n + 2.0))
    b = 4.0 / (3.0 * (n + 2.0))
    return math.exp(gamma * epsilon**a * abs(math.log(epsilon)) ** b)


def max_admissible_epsilon(gamma: float, n: int, alpha: float,
                           tol: float = 1e-12) -> float:
    """Largest epsilon on the increasing branch with delta^(1+alpha) < 1.5.

    delta is monotone in epsilon only while |log eps| > b/a, so bisection
    is restricted to (0, exp(-b/a)].
    """
    a = 2.0 / (3.0 * (n + 2.0))
    b = 4.0 / (3.0 * (n + 2.0))
    target = math.log(1.5) / (1.0 + alpha)

    def excess(eps):
        return gamma * eps**a * abs(math.log(eps)) ** b - target

    hi = math.exp(-b / a)
    if excess(hi) < 0.0:
        return hi
    lo = 1e-300
    while hi - lo > tol * hi:
        mid = math.sqrt(lo * hi)  # geometric bisection over many decades
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def mahler_pinched(body: Body, epsilon: float) -> bool:
    """Whether V(K) V(K*) exceeds omega^2 / (1 + epsilon)."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    ceiling = unit_ball_volume(body.n + 1) ** 2
    return mahler_volume(body) > ceiling / (1.0 + epsilon)
