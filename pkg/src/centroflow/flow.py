"""Time integration of the contracting flow and its dual expanding flow.

The contracting flow moves the support function by
``ds/dt = -s * (centro-affine curvature)^beta`` with ``beta = p/(p+n+1)``;
the dual flow on polar bodies expands with the reciprocal power.  Stepping
uses an explicit midpoint scheme with a CFL-limited adaptive step; the
module also provides the exact shrinking-ball solution, extinction-time
brackets from the containment principle, the self-similar rescaling, and
the Harnack and displacement monitors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .body import Body, ConvexityError

__all__ = [
    "FlowParams",
    "FlowState",
    "FlowStepError",
    "TerminalEstimate",
    "contraction_speed",
    "expansion_speed",
    "step",
    "cfl_timestep",
    "run_to_time",
    "ball_extinction_time",
    "shrinking_ball_radius",
    "extinction_bracket",
    "rescale_to_unit",
    "harnack_monitor",
    "displacement_monitor",
]


@dataclass(frozen=True)
class FlowParams:
    """Flow power, sphere dimension, and direction, with derived exponents."""

    p: float
    n: int
    direction: str = "contracting"

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"flow power must exceed 1, got {self.p}")
        if self.n not in (1, 2):
            raise ValueError(f"sphere dimension must be 1 or 2, got {self.n}")
        if self.direction not in ("contracting", "dual"):
            raise ValueError(f"unknown direction {self.direction!r}")

    @property
    def beta(self) -> float:
        """Exponent of the centro-affine curvature in the speed."""
        return self.p / (self.p + self.n + 1.0)

    @property
    def alpha(self) -> float:
        """Homogeneity degree of the speed: -1 + 2(n+1)p/(p+n+1) > 0."""
        return -1.0 + 2.0 * (self.n + 1.0) * self.p / (self.p + self.n + 1.0)

    @property
    def harnack_exponent(self) -> float:
        return self.n * self.p / ((self.p + 1.0) * (self.n + 1.0))

    @property
    def in_theorem_regime(self) -> bool:
        """Whether p falls in the pinched-convergence regime for this n."""
        if self.n == 1:
            return True
        return self.p >= (self.n + 1.0) / (self.n - 1.0)


@dataclass(frozen=True)
class FlowState:
    body: Body
    t: float
    params: FlowParams
    dt_last: float = 0.0
    step_index: int = 0


class FlowStepError(RuntimeError):
    """A step failed (convexity or positivity loss); no state was produced."""

    def __init__(self, message, node_index=None, node=None, suggested_dt=None):
        super().__init__(message)
        self.node_index = node_index
        self.node = node
        self.suggested_dt = suggested_dt


def contraction_speed(body: Body, params: FlowParams) -> np.ndarray:
    """Pointwise contraction speed s * (centro-affine curvature)^beta.

    On a ball of radius R this is identically R^(-alpha).
    """
    return body.s * body.centro_affine_curvature() ** params.beta


def expansion_speed(body: Body, params: FlowParams) -> np.ndarray:
    """Pointwise speed of the dual (expanding) flow on a polar body."""
    return body.s * body.centro_affine_curvature() ** (-params.beta)


def _rhs(body: Body, params: FlowParams) -> np.ndarray:
    if params.direction == "contracting":
        return -contraction_speed(body, params)
    return expansion_speed(body, params)


def step(state: FlowState, dt: float) -> FlowState:
    """One explicit midpoint step; returns a new state, never mutates.

    Raises :class:`FlowStepError` (carrying the offending node and a
    suggested smaller step) if convexity or positivity is lost.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    body = state.body
    try:
        k1 = _rhs(body, state.params)
        mid = Body(body.grid, body.s + (0.5 * dt) * k1)
        k2 = _rhs(mid, state.params)
        new_body = Body(body.grid, body.s + dt * k2)
    except ConvexityError as err:
        raise FlowStepError(
            f"step of dt={dt:.3e} lost strict convexity at node "
            f"{err.node_index}; retry with dt={0.5 * dt:.3e}",
            node_index=err.node_index,
            node=err.node,
            suggested_dt=0.5 * dt,
        ) from err
    except ValueError as err:
        raise FlowStepError(
            f"step of dt={dt:.3e} produced an invalid support function "
            f"({err}); retry with dt={0.5 * dt:.3e}",
            suggested_dt=0.5 * dt,
        ) from err
    return FlowState(
        body=new_body,
        t=state.t + dt,
        params=state.params,
        dt_last=dt,
        step_index=state.step_index + 1,
    )


def cfl_timestep(state: FlowState, safety: float = 0.8) -> float:
    """Stable explicit step from the linearized diffusion coefficient.

    The principal symbol of the linearized speed has per-node matrix
    beta * s^(1 -+ (n+2) beta) * det(r)^(-+beta) * cof(r); its largest
    eigenvalue combines with the grid's spectral scale to bound dt.
    """
    if not 0.0 < safety <= 1.0:
        raise ValueError("safety factor must be in (0, 1]")
    body = state.body
    params = state.params
    lam_min = body.principal_radii().min(axis=1)
    sn = body.reciprocal_gauss_curvature()
    b = params.beta
    if params.direction == "contracting":
        coef = b * body.s ** (1.0 - (params.n + 2.0) * b) * sn ** (-b) / lam_min
    else:
        coef = b * body.s ** (1.0 + (params.n + 2.0) * b) * sn**b / lam_min
    dmax = float(np.max(coef))
    return safety * 2.0 / (dmax * body.grid.spectral_scale)


def run_to_time(state: FlowState, t_end: float, safety: float = 0.8,
                dt_max: float | None = None, on_step=None) -> FlowState:
    """Advance with CFL-adaptive steps until t_end (exact landing)."""
    while state.t < t_end * (1.0 - 1e-14):
        dt = cfl_timestep(state, safety)
        if dt_max is not None:
            dt = min(dt, dt_max)
        dt = min(dt, t_end - state.t)
        state = step(state, dt)
        if on_step is not None:
            on_step(state)
    return state


def ball_extinction_time(radius: float, params: FlowParams) -> float:
    """Extinction time of a centered ball: R^(1+alpha) / (1+alpha)."""
    a1 = 1.0 + params.alpha
    return radius**a1 / a1


def shrinking_ball_radius(radius0: float, t: float, params: FlowParams) -> float:
    """Exact contracting-ball radius [R0^(1+a) - (1+a) t]^(1/(1+a))."""
    a1 = 1.0 + params.alpha
    core = radius0**a1 - a1 * t
    if core <= 0.0:
        raise ValueError(
            f"t={t} is at or past the extinction time {radius0**a1 / a1}"
        )
    return core ** (1.0 / a1)


@dataclass(frozen=True)
class TerminalEstimate:
    """Extinction-time bracket from the containment principle."""

    t_lo: float
    t_hi: float
    method: str

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)

    @property
    def width(self) -> float:
        return self.t_hi - self.t_lo


def extinction_bracket(state: FlowState, use_normalization: bool = True) -> TerminalEstimate:
    """Bracket the extinction time via inradius/circumradius containment.

    The bracket holds in every special-linear frame, so the identity frame
    and the enclosing-ellipsoid frame are intersected when normalization is
    requested (the normalized frame is tighter for eccentric bodies).
    """
    if state.params.direction != "contracting":
        raise ValueError("extinction bracket applies to the contracting flow")
    a1 = 1.0 + state.params.alpha

    def bracket(body):
        r_lo, r_hi = body.radii_bounds()
        return state.t + r_lo**a1 / a1, state.t + r_hi**a1 / a1

    lo, hi = bracket(state.body)
    method = "containment"
    if use_normalization:
        from .affine import normalize_special_linear

        _, normalized = normalize_special_linear(state.body)
        lo2, hi2 = bracket(normalized)
        lo, hi = max(lo, lo2), min(hi, hi2)
        hi = max(hi, lo)
        method = "containment+sl-normalized"
    return TerminalEstimate(t_lo=lo, t_hi=hi, method=method)


def rescale_to_unit(state: FlowState, t_end: float | None = None, *,
                    remaining: float | None = None) -> Body:
    """Self-similar rescaling by ((1+alpha)(T - t))^(-1/(1+alpha)).

    A shrinking ball rescales exactly to the unit ball when T is exact.
    Near extinction T - t underflows relative precision when formed by
    subtraction, so callers that know the remaining time directly (e.g.
    from a containment bracket) should pass ``remaining`` instead.
    """
    if remaining is None:
        if t_end is None:
            raise ValueError("pass either t_end or remaining")
        remaining = t_end - state.t
    if remaining <= 0.0:
        raise ValueError("rescaling requires T > current time")
    a1 = 1.0 + state.params.alpha
    factor = (a1 * remaining) ** (-1.0 / a1)
    return state.body.scaled(factor)


def harnack_monitor(state: FlowState) -> float:
    """min_z speed(z) * t^(np/((p+1)(n+1))); zero at t = 0 by convention."""
    if state.t <= 0.0:
        return 0.0
    speed = contraction_speed(state.body, state.params)
    return float(np.min(speed)) * state.t**state.params.harnack_exponent


def displacement_monitor(state_from: FlowState, state_to: FlowState) -> np.ndarray:
    """Per-node field (1 - q)(s(t) - s(t0)) + (t - t0) speed(t), q the
    Harnack exponent; nonnegative along the contracting flow for t0 > 0."""
    if state_from.body.grid is not state_to.body.grid:
        if state_from.body.grid.resolution_descriptor != state_to.body.grid.resolution_descriptor:
            raise ValueError("states live on different grids")
    if state_from.params != state_to.params:
        raise ValueError("states have different flow parameters")
    if not 0.0 < state_from.t <= state_to.t:
        raise ValueError("need 0 < t0 <= t")
    q = state_to.params.harnack_exponent
    ds = state_to.body.s - state_from.body.s
    speed = contraction_speed(state_to.body, state_to.params)
    return (1.0 - q) * ds + (state_to.t - state_from.t) * speed
