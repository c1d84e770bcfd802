"""Minimum-service greedy schedule used as the comparison baseline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import ChargingEnv, EpisodeTrace, EnvState, Mode, rollout
from ..params import Level
from ..radio import CoverageMap
from ..scenario import Scenario


class GreedyPolicy:
    """Each hour, serve with the fewest UAVs that reach p_min.

    The serving UAVs are the highest-residue ones that would still hold
    E_min(serve) after the slot.  Everyone else charges when charging is
    beneficial (and the battery survives the climb), otherwise lands.
    Hours where not enough UAVs are eligible are recorded in ``infeasible``.
    """

    def __init__(self, env: ChargingEnv):
        self.env = env
        self.infeasible: dict[int, bool] = {}

    def __call__(self, state: EnvState):
        env, sc = self.env, self.env.scenario
        t = state.t
        hour = sc.hour_of_day(t)
        res = np.asarray(state.residues)
        alt = np.asarray(state.altitudes, dtype=int)
        N = env.N

        need = env.cmap.min_serving_for(t, sc.p_min)
        short = need is None
        if short:
            row = env.cmap.served[t]
            need = int(np.flatnonzero(row == row.max())[0])

        after_serve = env.energy.transition(alt, np.full(N, Level.SERVE), res, hour)["residue"]
        eligible = [i for i in range(N) if after_serve[i] >= env.energy.e_min[Level.SERVE]]
        eligible.sort(key=lambda i: (-res[i], i))
        chosen = eligible[:need]
        self.infeasible[t] = short or len(chosen) < need

        action = np.full(N, int(Level.GROUND))
        action[chosen] = Level.SERVE
        if env.modes[t] is Mode.CHARGING:
            charge = env.energy.transition(alt, np.full(N, Level.CHARGE), res, hour)
            for i in range(N):
                if i not in chosen and charge["shortfall"][i] == 0:
                    action[i] = Level.CHARGE
        return tuple(int(a) for a in action)


@dataclass
class GreedyResult:
    profile: list
    trace: EpisodeTrace
    infeasible_hours: list = field(default_factory=list)

    @property
    def total_return(self) -> float:
        return self.trace.total_return


def greedy_baseline(scenario: Scenario, coverage_map: CoverageMap, initial_residues=None) -> GreedyResult:
    env = ChargingEnv(scenario, coverage_map)
    policy = GreedyPolicy(env)
    trace = rollout(policy, env, initial_residues=initial_residues)
    bad = [t for t, flag in sorted(policy.infeasible.items()) if flag]
    return GreedyResult(trace.profile(), trace, bad)
