"""Physics-based speed cap from pavement grip and visibility, and interval fusion."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .core import (
    PhysicsParams,
    SpeedInterval,
    ValidationError,
    fps_to_mph,
    m_to_ft,
    mph_to_fps,
)


class Binding(str, enum.Enum):
    VISIBILITY = "VISIBILITY"
    SSD_CAP = "SSD_CAP"


@dataclass(frozen=True)
class EnvelopeResult:
    v_phys_mph: float
    d_visible_ft: float
    binding_constraint: Binding


def stopping_distance_ft(v: float, p: PhysicsParams) -> float:
    """Braking + reaction + headway distance (ft) when travelling at ``v`` mph."""
    u = mph_to_fps(v)
    if u == 0:
        return 0.0
    if p.mu <= 0:
        raise ValidationError("mu must be > 0 to stop from a non-zero speed")
    return u * u / (2.0 * p.mu * p.g_ft_s2) + u * p.t_reaction_s + u * p.k_gap_s


def visible_distance_ft(visibility_m: float, p: PhysicsParams) -> float:
    return min(m_to_ft(visibility_m), p.ssd_cap_ft)


def solve_v_phys(mu: float, visibility_m: float, p: PhysicsParams | None = None) -> EnvelopeResult:
    """Largest speed whose stopping distance fits inside the visible distance.

    The stopping distance is quadratic in speed, so the root is taken in
    closed form. Zero grip or zero sight distance gives a cap of 0 mph.
    """
    p = replace(p or PhysicsParams(), mu=mu)
    if not 0.0 <= mu <= 1.0:
        raise ValidationError(f"mu must lie in [0, 1], got {mu}")
    d = visible_distance_ft(visibility_m, p)
    binding = Binding.VISIBILITY if m_to_ft(visibility_m) < p.ssd_cap_ft else Binding.SSD_CAP
    if mu == 0 or d == 0:
        return EnvelopeResult(0.0, d, binding)
    a = 1.0 / (2.0 * mu * p.g_ft_s2)
    b = p.t_reaction_s + p.k_gap_s
    # Numerically stable form of (-b + sqrt(b^2 + 4ad)) / (2a).
    u = 2.0 * d / (b + math.sqrt(b * b + 4.0 * a * d))
    v = fps_to_mph(u)
    # Guard the invariant d_total(v) <= d against last-bit rounding.
    while stopping_distance_ft(v, p) > d and v > 0:
        v = math.nextafter(v, 0.0)
    return EnvelopeResult(v, d, binding)


def fuse(q25: float, q75: float, v_phys: float, v_law: float) -> SpeedInterval:
    """Cap the model's inter-quartile range by the physical and legal limits.

    When ``q25`` already exceeds the cap the interval collapses to the cap.
    """
    if q25 > q75:
        raise ValidationError(f"q25 ({q25}) > q75 ({q75})")
    for name, value in (("q25", q25), ("q75", q75), ("v_phys", v_phys), ("v_law", v_law)):
        if not value >= 0:
            raise ValidationError(f"{name} must be >= 0, got {value}")
    v_high = min(q75, v_phys, v_law)
    v_low = min(q25, v_high)
    return SpeedInterval(v_low=v_low, v_high=v_high, q25=q25, q75=q75, v_phys=v_phys, v_law=v_law)
