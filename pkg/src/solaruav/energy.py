"""UAV power draw, solar harvest and slot-level battery accounting.

All powers are in watts, all energies in watt-hours, all times in seconds
except the hour-of-day argument of the solar model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import Altitudes, Level, PhysicsParams, SolarParams

__all__ = [
    "InfeasibleActionError",
    "SlotEnergyResult",
    "EnergyModel",
    "kinematic_power",
    "total_power",
    "grounded_power",
    "solar_intensity",
    "harvest_power",
    "min_energy",
    "slot_transition",
]


class InfeasibleActionError(ValueError):
    """Vertical transit does not fit inside one slot."""


def _finite(*xs):
    for x in xs:
        if not np.all(np.isfinite(x)):
            raise ValueError(f"non-finite input: {x!r}")


def kinematic_power(v_lv, v_vt, p: PhysicsParams):
    """Level-flight induced power + climb power + blade profile power.

    Works on scalars or numpy arrays. Clamped at zero, which only matters for
    descent speeds far beyond the defaults.
    """
    _finite(v_lv, v_vt)
    v_lv = np.asarray(v_lv, dtype=float)
    v_vt = np.asarray(v_vt, dtype=float)
    if np.any(np.abs(v_lv) > p.max_level_speed_v_lv):
        raise ValueError(f"level speed exceeds {p.max_level_speed_v_lv} m/s")
    if np.any(v_vt > p.climb_speed_v_up) or np.any(v_vt < -p.descent_speed_v_dn):
        raise ValueError("vertical speed outside [-v_dn, v_up]")

    W, rho, A = p.weight_W, p.air_density_rho, p.disk_area
    vh = math.sqrt(W / (2 * rho * A))
    p_lv = W ** 2 / (math.sqrt(2) * rho * A) / np.sqrt(v_lv ** 2 + np.sqrt(v_lv ** 4 + 4 * vh ** 4))
    p_vt = W * v_vt
    p_drag = p.profile_drag_C_D0 * rho * p.blade_area * abs(p.tip_speed_v_T) ** 3 / 8
    out = np.maximum(p_lv + p_vt + p_drag, 0.0)
    return float(out) if out.ndim == 0 else out


def total_power(v_lv, v_vt, p: PhysicsParams):
    """Airborne power: kinematic + transmit + static."""
    return kinematic_power(v_lv, v_vt, p) + p.tx_power_P_tx + p.static_power_P_static


def grounded_power(p: PhysicsParams) -> float:
    # landed UAVs only keep the messaging link alive
    return p.static_power_P_static


def solar_intensity(t, s: SolarParams):
    """Average radiation above the clouds at hour-of-day ``t`` (W/m^2)."""
    _finite(t)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= 24):
        raise ValueError(f"hour of day must lie in [0, 24): {t}")
    out = np.maximum(0.0, s.I_max * (-(t ** 2) / 36 + 2 * t / 3 - 3))
    return float(out) if out.ndim == 0 else out


def harvest_power(I_rad, s: SolarParams):
    """Panel output for a given radiation intensity; quadratic below K_c."""
    _finite(I_rad)
    I_rad = np.asarray(I_rad, dtype=float)
    if np.any(I_rad < 0):
        raise ValueError("radiation intensity must be >= 0")
    low = s.panel_area_A_c * s.efficiency_eta_c / s.K_c * I_rad ** 2
    high = s.panel_area_A_c * s.efficiency_eta_c * I_rad
    out = np.where(I_rad < s.K_c, low, high)
    return float(out) if out.ndim == 0 else out


def min_energy(action, p: PhysicsParams, altitudes: Altitudes = Altitudes()) -> float:
    """Energy (Wh) needed to climb from the action's level to the charging level."""
    a = Level(int(action))
    dh = altitudes.charge - altitudes.height(a)
    if dh <= 0:
        return 0.0
    climb = total_power(0.0, p.climb_speed_v_up, p)
    return dh / p.climb_speed_v_up * climb / 3600.0


@dataclass(frozen=True)
class SlotEnergyResult:
    harvested_E_h: float      # harvest available during the dwell phase
    stored_E_h: float         # part of it that fit in the battery
    discarded_E_h: float      # harvest lost because the battery was full
    consumed_E_c: float       # transit + dwell consumption
    shortfall_E: float        # consumption the battery could not cover
    new_residue: float
    new_altitude: Level
    transit_seconds: float


def _integrate(residue, transit_E, dwell_E_h, dwell_E_c, cap):
    """Two-phase closed form: transit drain, then constant-rate dwell.

    Net dwell rate has a constant sign, so the battery can saturate (or empty)
    at most once and the exact outcome is a clip of the unconstrained level.
    """
    level = residue - transit_E
    short_transit = np.maximum(0.0, -level)
    level = np.maximum(level, 0.0)
    x = level + dwell_E_h - dwell_E_c
    discarded = np.maximum(0.0, x - cap)
    short_dwell = np.maximum(0.0, -x)
    new = np.clip(x, 0.0, cap)
    return new, discarded, short_transit + short_dwell


_CHARGE = int(Level.CHARGE)


class EnergyModel:
    """Per-scenario power tables with a vectorised slot transition."""

    def __init__(self, physics: PhysicsParams, solar: SolarParams,
                 altitudes: Altitudes = Altitudes(), slot_seconds: float = 3600.0):
        self.physics = physics
        self.solar = solar
        self.altitudes = altitudes
        self.slot_seconds = float(slot_seconds)
        self.capacity = physics.battery_capacity_E_cap

        heights = np.array(altitudes.as_tuple())
        climb_W = total_power(0.0, physics.climb_speed_v_up, physics)
        descend_W = total_power(0.0, -physics.descent_speed_v_dn, physics)
        self.hover_W = total_power(0.0, 0.0, physics)

        dh = heights[None, :] - heights[:, None]        # [prev, action]
        self.transit_s = np.where(dh >= 0, dh / physics.climb_speed_v_up,
                                  -dh / physics.descent_speed_v_dn)
        self.transit_W = np.where(dh > 0, climb_W, np.where(dh < 0, descend_W, 0.0))
        self.transit_E = self.transit_s * self.transit_W / 3600.0
        self.dwell_W = np.array([grounded_power(physics), self.hover_W, self.hover_W])
        self.e_min = np.array([min_energy(a, physics, altitudes) for a in Level])
        self.feasible = self.transit_s <= self.slot_seconds
        self._harvest_cache = {}

    def harvest_W(self, hour):
        if np.ndim(hour):
            return harvest_power(solar_intensity(hour, self.solar), self.solar)
        hour = float(hour)
        w = self._harvest_cache.get(hour)
        if w is None:
            w = self._harvest_cache[hour] = harvest_power(solar_intensity(hour, self.solar), self.solar)
        return w

    def charging_net_W(self, hour) -> float:
        """Net dwell power at the charging level (positive means the battery gains)."""
        return self.harvest_W(hour) - self.hover_W

    def transition(self, prev, action, residue, hour):
        """Vectorised slot transition; returns a dict of arrays."""
        prev = np.asarray(prev, dtype=int)
        action = np.asarray(action, dtype=int)
        residue = np.asarray(residue, dtype=float)
        if not np.all(self.feasible[prev, action]):
            raise InfeasibleActionError("vertical transit longer than the slot")
        transit_s = self.transit_s[prev, action]
        dwell_h = (self.slot_seconds - transit_s) / 3600.0
        harvest = np.where(action == _CHARGE, self.harvest_W(hour), 0.0) * dwell_h
        consumed_dwell = self.dwell_W[action] * dwell_h
        transit_E = self.transit_E[prev, action]
        new, discarded, shortfall = _integrate(residue, transit_E, harvest, consumed_dwell, self.capacity)
        return {
            "harvested": harvest,
            "stored": harvest - discarded,
            "discarded": discarded,
            "consumed": transit_E + consumed_dwell,
            "shortfall": shortfall,
            "residue": new,
            "transit_s": transit_s,
        }


def slot_transition(prev_altitude, action, residue: float, t: float, slot_seconds: float,
                    p: PhysicsParams, s: SolarParams,
                    altitudes: Altitudes = Altitudes()) -> SlotEnergyResult:
    """One UAV, one slot: move from ``prev_altitude`` to ``action`` then dwell."""
    if not 0 <= residue <= p.battery_capacity_E_cap:
        raise ValueError(f"residue {residue} outside [0, {p.battery_capacity_E_cap}]")
    model = EnergyModel(p, s, altitudes, slot_seconds)
    out = model.transition(int(prev_altitude), int(action), residue, t)
    return SlotEnergyResult(
        harvested_E_h=float(out["harvested"]),
        stored_E_h=float(out["stored"]),
        discarded_E_h=float(out["discarded"]),
        consumed_E_c=float(out["consumed"]),
        shortfall_E=float(out["shortfall"]),
        new_residue=float(out["residue"]),
        new_altitude=Level(int(action)),
        transit_seconds=float(out["transit_s"]),
    )
