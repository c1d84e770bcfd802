"""Exact reference solvers for small fleets.

``dp_oracle`` runs backward induction on a quantised battery grid;
``exhaustive_oracle`` enumerates every joint action sequence on the true
continuous dynamics.  Both maximise the undiscounted sum of slot rewards.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..env import ChargingEnv, EpisodeTrace, Mode
from ..params import Level
from ..radio import CoverageMap, SizeError
from ..scenario import Scenario

DP_BUDGET = 2_000_000_000         # (3 * bins)^N * 3^N * T joint state-action evaluations
EXHAUSTIVE_BUDGET = 2_000_000     # 3^(N * T) action sequences

__all__ = ["DP_BUDGET", "EXHAUSTIVE_BUDGET", "OracleResult", "dp_oracle", "exhaustive_oracle",
           "joint_actions"]


@dataclass
class OracleResult:
    value: float               # optimum as computed by the oracle itself
    profile: list              # joint action per slot
    trace: EpisodeTrace        # the profile replayed on the true dynamics

    @property
    def true_return(self) -> float:
        return self.trace.total_return


def joint_actions(N: int) -> np.ndarray:
    """All 3^N joint actions in lexicographic order, shape (3^N, N)."""
    return np.array(list(itertools.product(range(3), repeat=N)), dtype=int).reshape(-1, N)


def _service_term(env: ChargingEnv, t: int) -> np.ndarray:
    """Reward depending only on the serving count: r2 and the service-rate penalty."""
    pen = env.scenario.reward.penalty_p_C2
    return env.service_reward[t] + np.where(env.service_short[t], pen, 0.0)


def _uav_term(env: ChargingEnv, t: int, action, new_residue, shortfall) -> np.ndarray:
    """Per-UAV reward: sustainability penalty and the landing/charging bonus."""
    rw = env.scenario.reward
    out = np.where(env.sustain_flags(action, new_residue, shortfall), rw.penalty_p_C1, 0.0)
    if env.modes[t] is Mode.LANDING:
        out = out + np.where(action == Level.GROUND, rw.coeff_c1, 0.0)
    else:
        out = out + np.where(action == Level.CHARGE, rw.coeff_c2, 0.0)
    return out


def dp_oracle(scenario: Scenario, coverage_map: CoverageMap, battery_bins: int,
              initial_residues=None, budget: int = DP_BUDGET, rounding: str = "floor") -> OracleResult:
    """Backward induction over (per-UAV residue level, altitude, hour).

    Residue levels are ``k * E_cap / (bins - 1)``.  Each transition is computed
    with the true slot model from the level value and mapped back onto the
    grid.  With ``rounding="floor"`` the DP value never overstates what the
    fleet can achieve, but the pessimism compounds over the day on coarse
    grids.  ``rounding="nearest"`` has no such bias and usually yields a much
    better profile, at the price of a value that is no longer a lower bound.

    Either way the returned profile is extracted closed-loop on the true
    dynamics: at every slot each joint action is simulated exactly and scored
    by its reward plus the value table at its rounded successor.  Its
    ``true_return`` is always achievable.
    """
    env = ChargingEnv(scenario, coverage_map)
    N, T, B = env.N, env.T, int(battery_bins)
    if N > 3:
        raise SizeError("dp_oracle supports at most 3 UAVs")
    if B < 2:
        raise ValueError("battery_bins must be >= 2")
    if rounding not in ("floor", "nearest"):
        raise ValueError("rounding must be 'floor' or 'nearest'")
    offset = 1e-9 if rounding == "floor" else 0.5
    work = (3 * B) ** N * 3 ** N * T
    if work > budget:
        raise SizeError(f"DP work {work:.3g} exceeds budget {budget:.3g}")

    cap = env.capacity
    step = cap / (B - 1)
    levels = np.arange(B) * step
    acts = joint_actions(N)
    n_srv = (acts == Level.SERVE).sum(axis=1)
    S = 3 * B
    # local state s = altitude * B + level index
    alt_of = np.repeat(np.arange(3), B)
    res_of = np.tile(levels, 3)

    nxt = np.zeros((T, S, 3), dtype=np.int64)
    gain = np.zeros((T, S, 3))
    for t in range(T):
        hour = scenario.hour_of_day(t)
        for a in range(3):
            feasible = env.energy.feasible[alt_of, a]
            out = env.energy.transition(np.where(feasible, alt_of, a), np.full(S, a), res_of, hour)
            k = np.clip(np.floor(out["residue"] / step + offset).astype(np.int64), 0, B - 1)
            nxt[t, :, a] = a * B + k
            g = _uav_term(env, t, np.full(S, a), out["residue"], out["shortfall"])
            gain[t, :, a] = np.where(feasible, g, -np.inf)

    V = np.zeros((S,) * N)
    values = [V]                      # values[k] is the value table at slot T - k
    for t in range(T - 1, -1, -1):
        service = _service_term(env, t)
        best = np.full((S,) * N, -np.inf)
        for j, a in enumerate(acts):
            q = V[np.ix_(*[nxt[t, :, a[i]] for i in range(N)])] + service[n_srv[j]]
            for i in range(N):
                shape = [1] * N
                shape[i] = S
                q = q + gain[t, :, a[i]].reshape(shape)
            np.maximum(best, q, out=best)
        V = best
        values.append(V)
    values.reverse()

    def local_index(residues, altitudes):
        k = np.clip(np.floor(np.asarray(residues) / step + offset).astype(int), 0, B - 1)
        return tuple(np.asarray(altitudes) * B + k)

    init = env.initial_state(initial_residues)
    value = float(values[0][local_index(init.residues, init.altitudes)])

    # one-step lookahead on the true state against the stored value tables
    state = env.reset(initial_residues)
    trace = EpisodeTrace(initial=state)
    prev = np.tile(np.array(state.altitudes, dtype=int), (len(acts), 1))
    for t in range(T):
        res = np.tile(np.array(state.residues), (len(acts), 1))
        prev[:] = np.array(state.altitudes, dtype=int)
        feasible = env.energy.feasible[prev, acts].all(axis=1)
        out = env.energy.transition(np.where(env.energy.feasible[prev, acts], prev, acts), acts, res,
                                    scenario.hour_of_day(t))
        q = _uav_term(env, t, acts, out["residue"], out["shortfall"]).sum(axis=1)
        q = q + _service_term(env, t)[n_srv]
        q = q + values[t + 1][local_index(out["residue"].T, acts.T)]
        q = np.where(feasible, q, -np.inf)
        a = tuple(int(x) for x in acts[int(np.argmax(q))])
        o = env.step(a)
        trace.actions.append(a)
        trace.outcomes.append(o)
        state = o.next
    return OracleResult(value, trace.profile(), trace)


def exhaustive_oracle(scenario: Scenario, coverage_map: CoverageMap, initial_residues=None,
                      budget: int = EXHAUSTIVE_BUDGET) -> OracleResult:
    """Enumerate all 3^(N*T) profiles on the continuous dynamics, layer by layer."""
    env = ChargingEnv(scenario, coverage_map)
    N, T = env.N, env.T
    if 3 ** (N * T) > budget:
        raise SizeError(f"3^(N*T) = {3 ** (N * T)} sequences exceed budget {budget}")
    acts = joint_actions(N)
    J = len(acts)
    n_srv = (acts == Level.SERVE).sum(axis=1)

    init = env.initial_state(initial_residues)
    res = np.array([init.residues], dtype=float)
    alt = np.array([init.altitudes], dtype=int)
    total = np.zeros(1)
    for t in range(T):
        M = len(res)
        a = np.tile(acts, (M, 1))                      # row m*J + j
        r = np.repeat(res, J, axis=0)
        p = np.repeat(alt, J, axis=0)
        feasible = env.energy.feasible[p, a].all(axis=1)
        out = env.energy.transition(np.where(env.energy.feasible[p, a], p, a), a, r, scenario.hour_of_day(t))
        gain = _uav_term(env, t, a, out["residue"], out["shortfall"]).sum(axis=1)
        gain += _service_term(env, t)[np.tile(n_srv, M)]
        total = np.repeat(total, J) + np.where(feasible, gain, -np.inf)
        res, alt = out["residue"], a

    best = int(np.argmax(total))
    digits = []
    for _ in range(T):
        best, j = divmod(best, J)
        digits.append(j)
    profile = [tuple(int(x) for x in acts[j]) for j in reversed(digits)]
    trace = env.play(profile, initial_residues)
    return OracleResult(float(total.max()), profile, trace)
