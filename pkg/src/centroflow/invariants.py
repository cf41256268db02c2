"""Affine functionals of convex bodies and monotonicity audits.

Computes the volume product (Mahler volume), the p-affine surface area
and isoperimetric ratio, and packages per-time snapshots of all audited
quantities into records whose series are checked for the monotonicity
and ceiling properties the flow is expected to satisfy.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .affine import normalize_special_linear
from .body import Body, unit_ball_volume
from .flow import FlowState, contraction_speed, harnack_monitor

__all__ = [
    "InvariantRecord",
    "MonotonicityReport",
    "p_affine_surface_area",
    "isoperimetric_ratio",
    "isoperimetric_ceiling",
    "mahler_ceiling",
    "make_record",
    "audit_monotone",
]


def p_affine_surface_area(body: Body, p: float) -> float:
    """Equi-affine surface area: integral of (s/K) (K/s^(n+2))^(p/(n+1+p)).

    The integrand is evaluated as s * det(r) * cac^(p/(n+1+p)) to avoid
    forming the reciprocal curvature explicitly at high-curvature nodes.
    Equals the sphere measure (n+1) omega_{n+1} on the unit ball.
    """
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    expo = p / (body.n + 1.0 + p)
    integrand = body.s * body.reciprocal_gauss_curvature() * (
        body.centro_affine_curvature() ** expo
    )
    return body.grid.integrate(integrand)


def isoperimetric_ratio(body: Body, p: float) -> float:
    """The ratio area^(n+p+1) / volume^(n+1-p).

    For p > n+1 the volume exponent is negative; the displayed form is
    used verbatim, so the ratio remains well defined and equals the
    ceiling exactly on centered ellipsoids.
    """
    n = body.n
    return p_affine_surface_area(body, p) ** (n + p + 1) / body.volume() ** (n + 1 - p)


def isoperimetric_ceiling(n: int, p: float) -> float:
    """(n+1)^(n+p+1) omega_{n+1}^(2p): the ellipsoid value of the ratio."""
    return (n + 1.0) ** (n + p + 1) * unit_ball_volume(n + 1) ** (2 * p)


def mahler_ceiling(n: int) -> float:
    """omega_{n+1}^2: the ellipsoid value of the volume product."""
    return unit_ball_volume(n + 1) ** 2


@dataclass(frozen=True)
class InvariantRecord:
    """Per-time snapshot of the audited quantities (CSV row contract)."""

    t: float
    volume: float
    polar_volume: float
    mahler: float
    p_affine_area: float
    iso_ratio: float
    centro_affine_min: float
    centro_affine_max: float
    min_speed: float
    harnack: float
    r_minus: float
    r_plus: float
    banach_mazur_upper: float

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_row(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in self.field_names())


def make_record(state: FlowState, frame_body: Body | None = None,
                polar_body: Body | None = None) -> InvariantRecord:
    """Assemble the invariant snapshot for a flow state.

    Parameters
    ----------
    frame_body : optional
        The SL-normalized body; computed via the enclosing-ellipsoid frame
        when omitted.  Radii bounds and the Banach-Mazur upper bound are
        read from it; centro-affine extremes are read from the original
        body (they agree under special-linear maps).
    polar_body : optional
        Precomputed polar body, to avoid recomputing it.
    """
    body = state.body
    params = state.params
    if polar_body is None:
        polar_body = body.polar()
    if frame_body is None:
        _, frame_body = normalize_special_linear(body)
    vol = body.volume()
    pvol = polar_body.volume()
    cac_lo, cac_hi = body.centro_affine_extremes()
    speed = contraction_speed(body, params)
    r_lo, r_hi = frame_body.radii_bounds()
    return InvariantRecord(
        t=state.t,
        volume=vol,
        polar_volume=pvol,
        mahler=vol * pvol,
        p_affine_area=p_affine_surface_area(body, params.p),
        iso_ratio=isoperimetric_ratio(body, params.p),
        centro_affine_min=cac_lo,
        centro_affine_max=cac_hi,
        min_speed=float(speed.min()),
        harnack=harnack_monitor(state),
        r_minus=r_lo,
        r_plus=r_hi,
        banach_mazur_upper=float(np.log(r_hi / r_lo)),
    )


@dataclass(frozen=True)
class MonotonicityReport:
    """Outcome of a non-decrease audit over a time series."""

    series: str
    worst_decrement: float
    worst_index: int
    slack: float
    passed: bool
    total_increase: float

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"{self.series}: {verdict} (worst per-step decrement "
            f"{self.worst_decrement:.3e} at step {self.worst_index}, "
            f"slack {self.slack:.1e}, total increase {self.total_increase:.3e})"
        )


def audit_monotone(series, field: str, slack: float) -> MonotonicityReport:
    """Check that a recorded series is non-decreasing within a relative slack.

    ``series`` is a sequence of :class:`InvariantRecord` (or any objects
    with the named attribute) or a plain array of values.  Decrements are
    measured relative to the local scale of the series.
    """
    if hasattr(series, "__len__") and len(series) == 0:
        raise ValueError("cannot audit an empty series")
    first = series[0]
    if hasattr(first, field):
        values = np.array([getattr(rec, field) for rec in series], dtype=float)
    else:
        values = np.asarray(series, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("cannot audit an empty series")
    if values.size == 1:
        return MonotonicityReport(field, 0.0, 0, slack, True, 0.0)
    scale = np.maximum(np.abs(values[:-1]), 1e-300)
    rel_steps = np.diff(values) / scale
    worst = float(rel_steps.min())
    worst_index = int(rel_steps.argmin())
    total = float((values[-1] - values[0]) / max(abs(values[0]), 1e-300))
    return MonotonicityReport(
        series=field,
        worst_decrement=worst,
        worst_index=worst_index,
        slack=slack,
        passed=worst >= -slack,
        total_increase=total,
    )
