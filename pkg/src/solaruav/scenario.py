"""World description: area, fleet, hourly user demand and parameter blocks.

Scenarios are stored as TOML.  Top-level keys::

    horizon_T, slot_seconds, start_hour, fleet_size_N, p_min, rng_seed

and the tables ``[area]`` (width, height), ``[altitudes]`` (ground, serve,
charge), ``[physics]``, ``[solar]``, ``[radio]``, ``[reward]`` whose keys are
the field names of the matching parameter classes, plus an array of tables
``[[demand]]`` with ``n_users``, ``hotspot_fraction_p``, ``per_user_rate_r_u``
and ``hotspots = [[x, y, sigma], ...]``.  Every table is optional; missing
entries take the documented defaults.  Units are SI, hours for start_hour.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .params import (Altitudes, PhysicsParams, RadioParams, RewardParams, SolarParams,
                     check_physics, check_radio, check_reward, check_solar)

__all__ = [
    "ScenarioError",
    "ScenarioValidationError",
    "HourlyDemand",
    "UserField",
    "Scenario",
    "DEFAULT_DEMAND_V1",
    "DESK_DEMAND_V1",
    "default_demand_profile",
    "generate_users",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "paper_scenario",
    "desk_scenario",
]


class ScenarioError(ValueError):
    """Scenario file could not be parsed."""


class ScenarioValidationError(ScenarioError):
    """Scenario parsed but violates an invariant."""


@dataclass(frozen=True)
class HourlyDemand:
    n_users: int
    hotspot_fraction_p: float = 0.6
    hotspots: tuple = ()            # (center_x, center_y, spread_sigma) in meters
    per_user_rate_r_u: float = 2e6

    def __post_init__(self):
        object.__setattr__(self, "hotspots", tuple(tuple(float(v) for v in h) for h in self.hotspots))

    def problems(self):
        errs = []
        if self.n_users < 0:
            errs.append("n_users must be >= 0")
        if not 0 <= self.hotspot_fraction_p <= 1:
            errs.append("hotspot_fraction_p out of [0,1]")
        if self.per_user_rate_r_u < 0:
            errs.append("per_user_rate_r_u must be >= 0")
        for h in self.hotspots:
            if len(h) != 3:
                errs.append("hotspot entries are (x, y, sigma)")
            elif not h[2] > 0:
                errs.append("hotspot spread_sigma must be > 0")
        return errs


@dataclass
class UserField:
    positions: np.ndarray                     # (n, 2) ground coordinates in meters
    rate_requirement: float
    from_hotspot: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if self.from_hotspot is None:
            self.from_hotspot = np.zeros(len(self.positions), dtype=bool)

    def __len__(self):
        return len(self.positions)


# Synthetic weekday profile (users per hour); version 1 of the shipped table.
DEFAULT_DEMAND_V1 = (
    14, 10, 8, 6, 6, 10, 24, 48, 80, 112, 136, 148,
    128, 132, 146, 156, 138, 104, 74, 52, 40, 32, 24, 18,
)

# Desk-scale profile for 3 UAVs: nobody in the deep night, busy office hours.
DESK_DEMAND_V1 = (
    0, 0, 0, 0, 0, 0, 10, 20, 30, 40, 50, 60,
    56, 60, 64, 50, 40, 30, 20, 10, 0, 0, 0, 0,
)

_HOTSPOT_FRACTIONS = ((0.25, 0.30), (0.72, 0.28), (0.55, 0.75))


def _hotspots_for(area):
    w, h = area
    sigma = 0.06 * min(w, h)
    return tuple((fx * w, fy * h, sigma) for fx, fy in _HOTSPOT_FRACTIONS)


def _profile(table, T, area, rate):
    hotspots = _hotspots_for(area)
    out = []
    for t in range(T):
        hour = int((t + 0.5) * 24 / T) % 24
        out.append(HourlyDemand(n_users=table[hour], hotspot_fraction_p=0.6,
                                hotspots=hotspots, per_user_rate_r_u=rate))
    return out


def default_demand_profile(T: int = 24, area=(2000.0, 2000.0), rate: float = 2e6):
    """Hourly demand sampled from ``DEFAULT_DEMAND_V1``.

    Slot t of a T-slot day reads the table at hour floor((t + 1/2) * 24 / T), so
    T=24 is the table itself and T=1 is its midday entry.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    return _profile(DEFAULT_DEMAND_V1, T, area, rate)


def generate_users(demand: HourlyDemand, area, seed) -> UserField:
    """Draw one slot's user positions.

    Each user is hotspot-bound with probability ``hotspot_fraction_p``: it picks
    a center uniformly and gets an isotropic Gaussian offset, resampled until it
    lands inside the area.  Everyone else is uniform over the area.
    """
    w, h = area
    n = int(demand.n_users)
    rng = np.random.default_rng(seed)
    if n == 0:
        return UserField(np.zeros((0, 2)), demand.per_user_rate_r_u, np.zeros(0, dtype=bool))

    hot = rng.random(n) < demand.hotspot_fraction_p
    if not demand.hotspots:
        hot[:] = False
    pos = np.column_stack([rng.uniform(0, w, n), rng.uniform(0, h, n)])

    idx = np.flatnonzero(hot)
    if len(idx):
        centers = np.array(demand.hotspots)
        which = rng.integers(len(centers), size=len(idx))
        pending = np.arange(len(idx))
        while len(pending):
            c = centers[which[pending]]
            draw = c[:, :2] + rng.normal(size=(len(pending), 2)) * c[:, 2:3]
            inside = (draw[:, 0] >= 0) & (draw[:, 0] <= w) & (draw[:, 1] >= 0) & (draw[:, 1] <= h)
            pos[idx[pending[inside]]] = draw[inside]
            pending = pending[~inside]
    return UserField(pos, demand.per_user_rate_r_u, hot)


@dataclass(frozen=True)
class Scenario:
    area_width: float = 2000.0
    area_height: float = 2000.0
    horizon_T: int = 24
    slot_seconds: float = 3600.0
    start_hour: float = 0.0
    fleet_size_N: int = 15
    altitudes: Altitudes = Altitudes()
    demand: tuple = ()
    physics: PhysicsParams = PhysicsParams()
    radio: RadioParams = RadioParams()
    solar: SolarParams = SolarParams()
    reward: RewardParams = RewardParams()
    p_min: float = 0.85
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "demand", tuple(self.demand))

    @property
    def area(self):
        return (self.area_width, self.area_height)

    def hour_of_day(self, t: int) -> float:
        return (self.start_hour + t * self.slot_seconds / 3600.0) % 24.0

    def n_users(self, t: int) -> int:
        return int(self.demand[t].n_users)

    def user_seed(self, t: int, seed=None) -> int:
        base = self.rng_seed if seed is None else seed
        return int(np.random.SeedSequence([int(base), int(t)]).generate_state(1)[0])

    def users(self, t: int, seed=None) -> UserField:
        """Users present in slot t; regenerated per slot from (seed, t)."""
        return generate_users(self.demand[t], self.area, self.user_seed(t, seed))

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def problems(self):
        errs = []
        if self.horizon_T < 1:
            errs.append("horizon_T must be >= 1")
        if self.fleet_size_N < 1:
            errs.append("fleet_size_N must be >= 1")
        if not self.area_width > 0 or not self.area_height > 0:
            errs.append("area dimensions must be > 0")
        if not self.slot_seconds > 0:
            errs.append("slot_seconds must be > 0")
        a = self.altitudes
        if not 0 <= a.serve < a.charge:
            errs.append("altitudes require 0 <= serve < charge")
        if a.ground != 0:
            errs.append("ground altitude must be 0")
        if len(self.demand) != self.horizon_T:
            errs.append(f"demand has {len(self.demand)} entries, expected horizon_T={self.horizon_T}")
        if not 0 <= self.p_min <= 1:
            errs.append("p_min out of [0,1]")
        if self.radio.serve_altitude_H_srv != a.serve:
            errs.append("radio.serve_altitude_H_srv must equal altitudes.serve")
        errs += check_physics(self.physics) + check_solar(self.solar)
        errs += check_radio(self.radio) + check_reward(self.reward)
        for t, d in enumerate(self.demand):
            errs += [f"demand[{t}]: {e}" for e in d.problems()]
        return errs

    def validate(self) -> "Scenario":
        errs = self.problems()
        if errs:
            raise ScenarioValidationError("; ".join(errs))
        return self


# -- serialization -----------------------------------------------------------

_SECTIONS = {
    "altitudes": Altitudes,
    "physics": PhysicsParams,
    "solar": SolarParams,
    "radio": RadioParams,
    "reward": RewardParams,
}
_TOP = {
    "horizon_T": int,
    "slot_seconds": float,
    "start_hour": float,
    "fleet_size_N": int,
    "p_min": float,
    "rng_seed": int,
}
_DEMAND = {"n_users": int, "hotspot_fraction_p": float, "per_user_rate_r_u": float, "hotspots": list}


def _line_of(text, section, key):
    """Best-effort line number of ``key`` inside ``[section]`` (1-based)."""
    if text is None:
        return None
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[\[?\s*([\w.]+)\s*\]\]?", line)
        if m:
            current = m.group(1)
            continue
        if current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return i
    return None


def _coerce(value, kind, where, text, section, key):
    ok = (isinstance(value, bool) is False) and (
        isinstance(value, int) if kind is int else
        isinstance(value, (int, float)) if kind is float else
        isinstance(value, kind))
    if not ok:
        line = _line_of(text, section, key)
        at = f" (line {line})" if line else ""
        raise ScenarioError(f"field '{where}': expected {kind.__name__}, got {type(value).__name__}{at}")
    return float(value) if kind is float else value


def _build(cls, raw, name, text):
    if not isinstance(raw, dict):
        raise ScenarioError(f"'{name}' must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            line = _line_of(text, name, key)
            at = f" (line {line})" if line else ""
            raise ScenarioError(f"unknown field '{name}.{key}'{at}")
        kind = int if fields[key].type in ("int", int) else float
        kwargs[key] = _coerce(value, kind, f"{name}.{key}", text, name, key)
    return cls(**kwargs)


def scenario_from_dict(raw: dict, text: str | None = None) -> Scenario:
    """Build and validate a Scenario from parsed TOML."""
    kwargs = {}
    for key, value in raw.items():
        if key in _TOP:
            kwargs[key] = _coerce(value, _TOP[key], key, text, None, key)
        elif key == "area":
            area = dict(value)
            for k in area:
                if k not in ("width", "height"):
                    raise ScenarioError(f"unknown field 'area.{k}'")
            if "width" in area:
                kwargs["area_width"] = _coerce(area["width"], float, "area.width", text, "area", "width")
            if "height" in area:
                kwargs["area_height"] = _coerce(area["height"], float, "area.height", text, "area", "height")
        elif key in _SECTIONS:
            kwargs[key] = value
        elif key == "demand":
            continue
        else:
            line = _line_of(text, None, key)
            at = f" (line {line})" if line else ""
            raise ScenarioError(f"unknown field '{key}'{at}")

    altitudes = _build(Altitudes, kwargs.pop("altitudes", {}), "altitudes", text)
    radio_raw = dict(kwargs.pop("radio", {}))
    radio_raw.setdefault("serve_altitude_H_srv", altitudes.serve)
    sections = {
        "altitudes": altitudes,
        "physics": _build(PhysicsParams, kwargs.pop("physics", {}), "physics", text),
        "solar": _build(SolarParams, kwargs.pop("solar", {}), "solar", text),
        "radio": _build(RadioParams, radio_raw, "radio", text),
        "reward": _build(RewardParams, kwargs.pop("reward", {}), "reward", text),
    }
    base = Scenario(**kwargs, **sections)

    if "demand" in raw:
        demand = []
        if not isinstance(raw["demand"], list):
            raise ScenarioError("'demand' must be an array of tables ([[demand]])")
        for i, entry in enumerate(raw["demand"]):
            d = {}
            for k, v in entry.items():
                if k not in _DEMAND:
                    raise ScenarioError(f"unknown field 'demand[{i}].{k}'")
                d[k] = _coerce(v, _DEMAND[k], f"demand[{i}].{k}", text, "demand", k)
            if "n_users" not in d:
                raise ScenarioError(f"field 'demand[{i}].n_users' is required")
            demand.append(HourlyDemand(**d))
    else:
        demand = default_demand_profile(base.horizon_T, base.area)
    return base.replace(demand=tuple(demand)).validate()


def scenario_to_dict(sc: Scenario) -> dict:
    out = {k: getattr(sc, k) for k in _TOP}
    out["area"] = {"width": sc.area_width, "height": sc.area_height}
    for name in _SECTIONS:
        out[name] = dataclasses.asdict(getattr(sc, name))
    out["demand"] = [
        {
            "n_users": d.n_users,
            "hotspot_fraction_p": d.hotspot_fraction_p,
            "per_user_rate_r_u": d.per_user_rate_r_u,
            "hotspots": [list(h) for h in d.hotspots],
        }
        for d in sc.demand
    ]
    return out


def load_scenario(path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(raw, text)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(tomli_w.dumps(scenario_to_dict(sc)))


def paper_scenario(fleet_size_N: int = 15, rng_seed: int = 0) -> Scenario:
    """Table-I physics with the synthetic weekday demand over a 2 km square."""
    area = (2000.0, 2000.0)
    return Scenario(area_width=area[0], area_height=area[1], fleet_size_N=fleet_size_N,
                    demand=default_demand_profile(24, area), rng_seed=rng_seed).validate()


def desk_scenario(fleet_size_N: int = 3, rng_seed: int = 0, reward: RewardParams = RewardParams()) -> Scenario:
    """Small instance (3 UAVs, 1 km square) used for oracle comparisons."""
    area = (1000.0, 1000.0)
    radio = RadioParams(coverage_radius_R_cov=500.0, rbs_per_uav=50)
    demand = _profile(DESK_DEMAND_V1, 24, area, 2e6)
    return Scenario(area_width=area[0], area_height=area[1], fleet_size_N=fleet_size_N,
                    demand=demand, radio=radio, reward=reward, rng_seed=rng_seed).validate()
