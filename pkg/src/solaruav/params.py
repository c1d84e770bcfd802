"""Parameter blocks shared by the scenario, energy, radio and environment modules.

Defaults follow the environment table of the charging-profile study
(Table I values for the UAV and solar models). Radio defaults are
LTE-like values; they are configurable and nothing downstream depends
on their exact magnitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

SPEED_OF_LIGHT = 299_792_458.0


class Level(IntEnum):
    """Altitude level; the same integer is used as the per-UAV action code."""

    GROUND = 0
    SERVE = 1
    CHARGE = 2


@dataclass(frozen=True)
class Altitudes:
    ground: float = 0.0
    serve: float = 300.0
    charge: float = 1400.0

    def height(self, level) -> float:
        return (self.ground, self.serve, self.charge)[int(level)]

    def as_tuple(self):
        return (self.ground, self.serve, self.charge)


@dataclass(frozen=True)
class PhysicsParams:
    weight_W: float = 5 * 9.8
    air_density_rho: float = 1.225
    rotor_count: int = 4
    rotor_radius: float = 0.3
    profile_drag_C_D0: float = 5e-4
    solidity_sigma: float = 0.056
    tip_speed_v_T: float = 150.0
    max_level_speed_v_lv: float = 6.0
    climb_speed_v_up: float = 4.0
    descent_speed_v_dn: float = 4.0
    tx_power_P_tx: float = 0.0
    static_power_P_static: float = 5.0
    battery_capacity_E_cap: float = 600.0

    @property
    def disk_area(self) -> float:
        return self.rotor_count * math.pi * self.rotor_radius ** 2

    @property
    def blade_area(self) -> float:
        return self.solidity_sigma * self.disk_area

    @property
    def hover_induced_speed(self) -> float:
        return math.sqrt(self.weight_W / (2 * self.air_density_rho * self.disk_area))


@dataclass(frozen=True)
class SolarParams:
    I_max: float = 2000.0
    K_c: float = 150.0
    panel_area_A_c: float = 1.0
    efficiency_eta_c: float = 0.25


@dataclass(frozen=True)
class RadioParams:
    carrier_f_c: float = 2e9
    tx_psd_P_t: float = 1e-7          # 1 W spread over 10 MHz
    noise_psd_n0: float = 10 ** (-174 / 10) * 1e-3
    rb_bandwidth_W_RB: float = 180e3
    rbs_per_uav: int = 50
    los_excess_eta: float = 1.0
    coverage_radius_R_cov: float = 500.0
    serve_altitude_H_srv: float = 300.0
    max_step_d_max: float = 50.0


@dataclass(frozen=True)
class RewardParams:
    penalty_p_C1: float = -200.0
    penalty_p_C2: float = -100.0
    coeff_c1: float = 1.0
    coeff_c2: float = 2.0


def _positive(obj, names):
    bad = [n for n in names if not getattr(obj, n) > 0]
    return [f"{type(obj).__name__}.{n} must be > 0" for n in bad]


def check_physics(p: PhysicsParams):
    names = [n for n in PhysicsParams.__dataclass_fields__ if n != "tx_power_P_tx"]
    errs = _positive(p, names)
    if not p.tx_power_P_tx >= 0:
        errs.append("PhysicsParams.tx_power_P_tx must be >= 0")
    return errs


def check_solar(s: SolarParams):
    errs = _positive(s, ["I_max", "K_c", "panel_area_A_c", "efficiency_eta_c"])
    if s.efficiency_eta_c > 1:
        errs.append("SolarParams.efficiency_eta_c must be <= 1")
    return errs


def check_radio(r: RadioParams):
    names = [n for n in RadioParams.__dataclass_fields__ if n != "los_excess_eta"]
    errs = _positive(r, names)
    if not r.los_excess_eta >= 0:
        errs.append("RadioParams.los_excess_eta must be >= 0")
    return errs


def check_reward(r: RewardParams):
    errs = []
    if not r.penalty_p_C1 < r.penalty_p_C2 < 0:
        errs.append("RewardParams requires penalty_p_C1 < penalty_p_C2 < 0")
    if r.coeff_c1 < 0 or r.coeff_c2 < 0:
        errs.append("RewardParams coefficients must be >= 0")
    return errs
