"""Hourly charging-schedule decision process over a fixed coverage map."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .energy import EnergyModel
from .params import Level
from .radio import CoverageMap
from .scenario import Scenario

__all__ = [
    "Mode",
    "EnvState",
    "StepOutcome",
    "EpisodeTrace",
    "ChargingEnv",
    "beneficial_mode",
    "rollout",
]


_LEVELS = tuple(Level)
_GROUND, _SERVE, _CHARGE = (int(x) for x in Level)


class Mode(Enum):
    LANDING = "landing"
    CHARGING = "charging"


def beneficial_mode(t: int, scenario: Scenario, energy: EnergyModel | None = None) -> Mode:
    """Charging is beneficial when a full dwell hour at the charging level gains energy."""
    if not 0 <= t < scenario.horizon_T:
        raise ValueError(f"slot {t} outside [0, {scenario.horizon_T})")
    energy = energy or EnergyModel(scenario.physics, scenario.solar, scenario.altitudes, scenario.slot_seconds)
    return Mode.CHARGING if energy.charging_net_W(scenario.hour_of_day(t)) > 0 else Mode.LANDING


@dataclass(frozen=True)
class EnvState:
    residues: tuple       # Wh per UAV
    altitudes: tuple      # Level per UAV
    t: int

    def features(self, capacity: float, horizon: int) -> np.ndarray:
        """Observation of length 4N + T + 1.

        Residues scaled by capacity, one-hot altitudes, one-hot slot index and
        t/T.  Everything is a function of (residues, altitudes, t).
        """
        n = len(self.residues)
        alt = np.zeros((n, 3))
        alt[np.arange(n), np.asarray(self.altitudes, dtype=int)] = 1.0
        slot = np.zeros(horizon)
        if self.t < horizon:
            slot[self.t] = 1.0
        return np.concatenate([np.asarray(self.residues) / capacity, alt.ravel(), slot,
                               [self.t / horizon]]).astype(np.float32)


@dataclass(frozen=True)
class StepOutcome:
    next: EnvState
    reward_total: float
    reward_parts: tuple          # (r1, r2, r3)
    served_users: int
    n_srv: int
    n_gnd: int
    n_chg: int
    harvested: float             # sum over UAVs of dwell harvest (Wh)
    consumed: float
    discarded: float
    shortfall: float
    sustain_violation: tuple     # per UAV: residue below E_min of its action
    service_violation: bool


@dataclass
class EpisodeTrace:
    actions: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    initial: EnvState | None = None

    def __len__(self):
        return len(self.outcomes)

    @property
    def total_return(self) -> float:
        return float(sum(o.reward_total for o in self.outcomes))

    @property
    def rewards(self):
        return np.array([o.reward_total for o in self.outcomes])

    def n_srv(self):
        return np.array([o.n_srv for o in self.outcomes])

    def served(self):
        return np.array([o.served_users for o in self.outcomes])

    def profile(self):
        return [tuple(int(a) for a in act) for act in self.actions]

    def to_csv(self, path):
        n = len(self.actions[0]) if self.actions else 0
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [f"a{i}" for i in range(n)] + [f"res{i}" for i in range(n)]
                        + ["n_srv", "served_users", "r1", "r2", "r3", "E_h", "E_c"])
            for t, (a, o) in enumerate(zip(self.actions, self.outcomes)):
                wr.writerow([t, *map(int, a), *(f"{x:.6f}" for x in o.next.residues),
                             o.n_srv, o.served_users, *o.reward_parts,
                             f"{o.harvested:.6f}", f"{o.consumed:.6f}"])


class ChargingEnv:
    """Deterministic environment: the state is (residues, altitudes, hour).

    ``transition`` is pure; ``reset``/``step`` keep a current state for
    agent-style use.
    """

    def __init__(self, scenario: Scenario, coverage_map: CoverageMap):
        coverage_map.check_against(scenario)
        self.scenario = scenario
        self.cmap = coverage_map
        self.N = scenario.fleet_size_N
        self.T = scenario.horizon_T
        self.energy = EnergyModel(scenario.physics, scenario.solar, scenario.altitudes, scenario.slot_seconds)
        self.capacity = self.energy.capacity
        self.modes = [beneficial_mode(t, scenario, self.energy) for t in range(self.T)]
        self.state: EnvState | None = None
        # hourly reward of the serving count, with the over-provisioning cap applied
        self.service_reward = np.zeros((self.T, self.N + 1))
        self.service_short = np.zeros((self.T, self.N + 1), dtype=bool)
        for t in range(self.T):
            row = coverage_map.served[t].astype(float)
            full = coverage_map.min_serving_for(t, 1.0)
            if full is not None:
                row[full:] = row[full]
            self.service_reward[t] = row
            self.service_short[t] = coverage_map.served[t] < scenario.p_min * coverage_map.n_users[t]

    @property
    def state_dim(self) -> int:
        return 4 * self.N + self.T + 1

    def initial_state(self, initial_residues=None) -> EnvState:
        if initial_residues is None:
            initial_residues = [self.capacity] * self.N
        res = tuple(float(x) for x in initial_residues)
        if len(res) != self.N:
            raise ValueError(f"expected {self.N} residues, got {len(res)}")
        if any(not 0 <= x <= self.capacity for x in res):
            raise ValueError(f"initial residues must lie in [0, {self.capacity}]")
        return EnvState(res, (Level.GROUND,) * self.N, 0)

    def reset(self, initial_residues=None) -> EnvState:
        self.state = self.initial_state(initial_residues)
        return self.state

    def _check_action(self, action):
        a = np.asarray(action, dtype=int).reshape(-1)
        if len(a) != self.N:
            raise ValueError(f"joint action must have length {self.N}, got {len(a)}")
        if np.any((a < 0) | (a > 2)):
            raise ValueError("action codes must be 0 (ground), 1 (serve) or 2 (charge)")
        return a

    def sustain_flags(self, action, new_residues, shortfall=0.0):
        """Per-UAV C3.1 check on the unclamped residue.

        A slot that drained the battery below zero counts as a violation even at
        the charging level, where the climb reserve itself is zero.
        """
        return np.asarray(new_residues) - np.asarray(shortfall) < self.energy.e_min[action]

    def slot_reward(self, t: int, action, new_residues, shortfall=0.0):
        """(r1, r2, r3, served, sustain flags, service flag) for one slot."""
        sc = self.scenario
        counts = np.bincount(action, minlength=3)
        n_srv = int(counts[_SERVE])
        served = self.cmap.value(t, n_srv)
        sustain = self.sustain_flags(action, new_residues, shortfall)
        service = bool(self.service_short[t, n_srv])
        r1 = sc.reward.penalty_p_C1 * int(sustain.sum()) + (sc.reward.penalty_p_C2 if service else 0.0)
        r2 = float(self.service_reward[t, n_srv])
        if self.modes[t] is Mode.LANDING:
            r3 = sc.reward.coeff_c1 * int(counts[_GROUND])
        else:
            r3 = sc.reward.coeff_c2 * int(counts[_CHARGE])
        return float(r1), r2, float(r3), served, sustain, service

    def transition(self, state: EnvState, action) -> StepOutcome:
        if state.t >= self.T:
            raise ValueError("episode already finished")
        a = self._check_action(action)
        t = state.t
        out = self.energy.transition(np.array(state.altitudes, dtype=int), a,
                                     np.array(state.residues), self.scenario.hour_of_day(t))
        r1, r2, r3, served, sustain, service = self.slot_reward(t, a, out["residue"], out["shortfall"])
        nxt = EnvState(tuple(out["residue"].tolist()), tuple(_LEVELS[x] for x in a.tolist()), t + 1)
        counts = np.bincount(a, minlength=3).tolist()
        return StepOutcome(
            next=nxt,
            reward_total=r1 + r2 + r3,
            reward_parts=(r1, r2, r3),
            served_users=served,
            n_srv=counts[_SERVE],
            n_gnd=counts[_GROUND],
            n_chg=counts[_CHARGE],
            harvested=float(out["harvested"].sum()),
            consumed=float(out["consumed"].sum()),
            discarded=float(out["discarded"].sum()),
            shortfall=float(out["shortfall"].sum()),
            sustain_violation=tuple(bool(x) for x in sustain),
            service_violation=service,
        )

    def step(self, action) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("call reset() first")
        outcome = self.transition(self.state, action)
        self.state = outcome.next
        return outcome

    def play(self, profile, initial_residues=None) -> EpisodeTrace:
        """Run a fixed action sequence from the initial state."""
        return rollout(lambda s: profile[s.t], self, initial_residues=initial_residues)


def rollout(policy, env: ChargingEnv, seed=None, initial_residues=None) -> EpisodeTrace:
    """Run ``policy`` (EnvState -> joint action) for a full horizon.

    ``seed`` is forwarded to policies exposing a ``seed`` method; the
    environment itself is deterministic.
    """
    if seed is not None and hasattr(policy, "seed"):
        policy.seed(seed)
    state = env.reset(initial_residues)
    trace = EpisodeTrace(initial=state)
    for _ in range(env.T):
        action = tuple(int(x) for x in np.asarray(policy(state)).reshape(-1))
        outcome = env.step(action)
        trace.actions.append(action)
        trace.outcomes.append(outcome)
        state = outcome.next
    return trace
