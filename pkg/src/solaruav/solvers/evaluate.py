"""Episode metrics for any policy (trained actor, greedy rule, fixed profile)."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..env import ChargingEnv, EpisodeTrace, rollout
from ..radio import CoverageMap
from ..scenario import Scenario


@dataclass
class Metrics:
    returns: np.ndarray
    hourly_n_srv: np.ndarray          # mean over episodes, per slot
    hourly_served: np.ndarray
    cumulative_served: np.ndarray
    n_srv_histogram: np.ndarray       # count of slots by serving-UAV number
    sustain_violations: int
    service_violations: int
    harvested: float
    consumed: float
    discarded: float
    shortfall: float
    traces: list = field(default_factory=list)

    @property
    def mean_return(self) -> float:
        return float(self.returns.mean())

    @property
    def min_return(self) -> float:
        return float(self.returns.min())

    @property
    def net_energy_loss(self) -> float:
        """Consumption minus harvest, per episode on average."""
        return (self.consumed - self.harvested) / len(self.returns)

    def episodes_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["episode", "return", "served_users", "sustain_violations",
                         "service_violations", "E_h", "E_c"])
            for i, tr in enumerate(self.traces):
                wr.writerow([i, tr.total_return, int(tr.served().sum()),
                             sum(sum(o.sustain_violation) for o in tr.outcomes),
                             sum(o.service_violation for o in tr.outcomes),
                             f"{sum(o.harvested for o in tr.outcomes):.6f}",
                             f"{sum(o.consumed for o in tr.outcomes):.6f}"])

    def hourly_to_csv(self, path):
        """One row per slot, from the first episode's trace."""
        tr = self.traces[0]
        cum = np.cumsum(tr.served())
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "n_srv", "served_users", "cumulative_served", "E_h", "E_c",
                         "cumulative_E_h", "cumulative_E_c"])
            eh = ec = 0.0
            for t, o in enumerate(tr.outcomes):
                eh += o.harvested
                ec += o.consumed
                wr.writerow([t, o.n_srv, o.served_users, int(cum[t]), f"{o.harvested:.6f}",
                             f"{o.consumed:.6f}", f"{eh:.6f}", f"{ec:.6f}"])


def summarize(traces: list[EpisodeTrace], fleet_size: int) -> Metrics:
    n_srv = np.array([tr.n_srv() for tr in traces])
    served = np.array([tr.served() for tr in traces])
    outcomes = [o for tr in traces for o in tr.outcomes]
    return Metrics(
        returns=np.array([tr.total_return for tr in traces]),
        hourly_n_srv=n_srv.mean(axis=0),
        hourly_served=served.mean(axis=0),
        cumulative_served=np.cumsum(served.mean(axis=0)),
        n_srv_histogram=np.bincount(n_srv.ravel(), minlength=fleet_size + 1),
        sustain_violations=sum(sum(o.sustain_violation) for o in outcomes),
        service_violations=sum(o.service_violation for o in outcomes),
        harvested=sum(o.harvested for o in outcomes),
        consumed=sum(o.consumed for o in outcomes),
        discarded=sum(o.discarded for o in outcomes),
        shortfall=sum(o.shortfall for o in outcomes),
        traces=traces,
    )


def evaluate(policy, scenario: Scenario, coverage_map: CoverageMap, episodes: int = 1,
             seed: int = 0) -> Metrics:
    env = ChargingEnv(scenario, coverage_map)
    traces = [rollout(policy, env, seed=seed + k) for k in range(episodes)]
    return summarize(traces, env.N)
