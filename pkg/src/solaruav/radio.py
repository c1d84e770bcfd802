"""OFDMA admission, two-stage user association and serving-UAV placement.

The placement search produces, per hour, the table "number of serving UAVs
-> users that can be served" (:class:`CoverageMap`) which the charging
scheduler consumes.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import SPEED_OF_LIGHT, RadioParams
from .scenario import Scenario, UserField

__all__ = [
    "NotCoveredError",
    "SizeError",
    "Placement",
    "Association",
    "CoverageMap",
    "path_loss_db",
    "channel_gain",
    "link_table",
    "required_rbs",
    "associate_users",
    "served_users",
    "optimize_placement",
    "brute_force_placement",
    "build_coverage_map",
]


class NotCoveredError(ValueError):
    pass


class SizeError(ValueError):
    """Requested instance exceeds the enumeration budget."""


def path_loss_db(d, r: RadioParams):
    """Free-space loss at carrier f_c plus the LoS excess eta (dB)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    out = 20 * np.log10(4 * math.pi * r.carrier_f_c * d / SPEED_OF_LIGHT) + r.los_excess_eta
    return float(out) if out.ndim == 0 else out


def channel_gain(d, r: RadioParams):
    # amplitude convention 10^(-PL/20), as in the admission model
    return 10 ** (-path_loss_db(d, r) / 20)


@dataclass
class Placement:
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.positions)


@dataclass
class Association:
    uav_of: np.ndarray      # per user: serving UAV index or -1
    n_rbs: np.ndarray       # per user: RBs granted (0 when unassigned)
    rb_used: np.ndarray     # per UAV

    @property
    def served(self) -> int:
        return int(np.count_nonzero(self.uav_of >= 0))


def link_table(positions, users_xy, r: RadioParams, rate: float):
    """Coverage mask, SINR and RB demand for every (user, UAV) pair.

    Interference at user u for server i is the full-band signal of every other
    UAV whose disk covers u.  Returns ``covered`` (K, M) bool, ``sinr`` (K, M)
    and ``need`` (K, M) int with a sentinel above the RB budget where the user
    is not covered.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    users_xy = np.asarray(users_xy, dtype=float).reshape(-1, 2)
    ground = np.sqrt(((users_xy[:, None, :] - positions[None, :, :]) ** 2).sum(-1))
    covered = ground <= r.coverage_radius_R_cov
    d3 = np.sqrt(ground ** 2 + r.serve_altitude_H_srv ** 2)
    sig = r.tx_psd_P_t * channel_gain(d3, r)
    sig_cov = np.where(covered, sig, 0.0)
    interf = np.maximum(sig_cov.sum(axis=1, keepdims=True) - sig_cov, 0.0)
    sinr = sig / (r.noise_psd_n0 + interf)
    need = _rbs_for(sinr, r, rate)
    need = np.where(covered, need, r.rbs_per_uav + 1)
    return covered, sinr, need


def _rbs_for(sinr, r: RadioParams, rate: float):
    per_rb = r.rb_bandwidth_W_RB * np.log2(1.0 + sinr)
    if rate <= 0:
        return np.zeros(np.shape(sinr), dtype=int)
    n = np.ceil(rate / per_rb)
    n = np.where(n * per_rb < rate, n + 1, n)       # guard against rounding in the division
    return np.minimum(n, r.rbs_per_uav + 1).astype(int)


def required_rbs(user_xy, uav_index: int, placement: Placement, r: RadioParams, rate: float) -> int:
    """Smallest RB count meeting ``rate`` for one user at one UAV.

    Values above ``rbs_per_uav`` mean the UAV can never admit the user.
    """
    pos = placement.positions
    ground = math.dist(tuple(user_xy), tuple(pos[uav_index]))
    if ground > r.coverage_radius_R_cov:
        raise NotCoveredError(f"user at {tuple(user_xy)} outside disk of UAV {uav_index}")
    _, _, need = link_table(pos, [user_xy], r, rate)
    return int(need[0, uav_index])


def associate_users(placement: Placement, users: UserField, r: RadioParams) -> Association:
    """Two-stage admission.

    Round 1: every covered user asks its best-SINR UAV.  Each UAV takes its
    requests in descending SINR (ties: lower user index first) and admits a user
    when the remaining RB budget covers its demand.  Later rounds: each rejected
    user asks its next-best covering UAV, until everyone is admitted or has run
    out of UAVs.
    """
    K, M = len(users), len(placement)
    uav_of = np.full(K, -1, dtype=int)
    n_rbs = np.zeros(K, dtype=int)
    left = np.full(M, r.rbs_per_uav, dtype=int)
    if K == 0 or M == 0:
        return Association(uav_of, n_rbs, np.zeros(M, dtype=int))

    covered, sinr, need = link_table(placement.positions, users.positions, r, users.rate_requirement)
    key = np.where(covered, sinr, -np.inf)
    order = np.argsort(-key, axis=1, kind="stable")
    ncov = covered.sum(axis=1)
    ptr = np.zeros(K, dtype=int)
    pending = np.flatnonzero(ncov > 0)

    while len(pending):
        target = order[pending, ptr[pending]]
        ptr[pending] += 1
        s = sinr[pending, target]
        rejected = []
        for j in np.lexsort((pending, -s, target)):
            u, i = pending[j], target[j]
            n = need[u, i]
            if n <= left[i]:
                left[i] -= n
                uav_of[u] = i
                n_rbs[u] = n
            elif ptr[u] < ncov[u]:
                rejected.append(u)
        pending = np.array(sorted(rejected), dtype=int)

    rb_used = r.rbs_per_uav - left
    assert np.all(rb_used <= r.rbs_per_uav)
    return Association(uav_of, n_rbs, rb_used)


def served_users(positions, users: UserField, r: RadioParams) -> int:
    return associate_users(Placement(positions), users, r).served


# -- placement search ---------------------------------------------------------

_DIRECTIONS = np.array([(math.cos(a), math.sin(a)) for a in np.arange(8) * math.pi / 4])


def _score(positions, users: UserField, r: RadioParams, diag: float) -> float:
    """Served count, with coverage and proximity of unserved users as tie-breakers.

    The fractional part stays below 1, so the served count always dominates.
    """
    assoc = associate_users(Placement(positions), users, r)
    K = len(users)
    covered, _, _ = link_table(positions, users.positions, r, users.rate_requirement)
    n_cov = int(covered.any(axis=1).sum())
    unserved = users.positions[assoc.uav_of < 0]
    if len(unserved):
        d = np.sqrt(((unserved[:, None, :] - positions[None, :, :]) ** 2).sum(-1)).min(axis=1)
        closeness = 1.0 - min(d.mean() / diag, 1.0)
    else:
        closeness = 1.0
    return assoc.served + (n_cov + closeness) / (K + 2)


def _kmeans_centers(xy, k, rng, iters=25):
    """k-means++ seeding followed by a few Lloyd iterations."""
    n = len(xy)
    centers = [xy[rng.integers(n)]]
    for _ in range(1, k):
        d2 = ((xy[:, None, :] - np.array(centers)[None]) ** 2).sum(-1).min(axis=1)
        if d2.sum() <= 0:
            centers.append(xy[rng.integers(n)])
        else:
            centers.append(xy[rng.choice(n, p=d2 / d2.sum())])
    centers = np.array(centers, dtype=float)
    for _ in range(iters):
        lab = ((xy[:, None, :] - centers[None]) ** 2).sum(-1).argmin(axis=1)
        new = np.array([xy[lab == j].mean(axis=0) if np.any(lab == j) else centers[j] for j in range(k)])
        if np.allclose(new, centers):
            break
        centers = new
    # largest clusters first
    lab = ((xy[:, None, :] - centers[None]) ** 2).sum(-1).argmin(axis=1)
    sizes = np.bincount(lab, minlength=k)
    return centers[np.argsort(-sizes, kind="stable")]


def _grid_extend(base, users, r, area, diag, per_side):
    """Append the coarse-grid point that scores best next to ``base``."""
    w, h = area
    best, best_pos = -math.inf, None
    for x in np.linspace(0.0, w, per_side):
        for y in np.linspace(0.0, h, per_side):
            trial = np.vstack([base, [[x, y]]])
            s = _score(trial, users, r, diag)
            if s > best:
                best, best_pos = s, trial
    return best_pos


def _hill_climb(pos, users, r, area, diag, max_sweeps):
    w, h = area
    pos = pos.copy()
    best = _score(pos, users, r, diag)
    step = r.max_step_d_max
    sweeps = 0
    while step >= r.max_step_d_max / 8 and sweeps < max_sweeps:
        sweeps += 1
        improved = False
        for i in range(len(pos)):
            cands = np.clip(pos[i] + step * _DIRECTIONS, [0, 0], [w, h])
            scores = []
            for c in cands:
                trial = pos.copy()
                trial[i] = c
                scores.append(_score(trial, users, r, diag))
            j = int(np.argmax(scores))
            if scores[j] > best + 1e-12:
                pos[i] = cands[j]
                best = scores[j]
                improved = True
        if not improved:
            step /= 2
    return pos, best


def optimize_placement(users: UserField, n_srv: int, r: RadioParams, seed=0, area=None,
                       warm_start: Placement | None = None, restarts: int = 3, max_sweeps: int = 60,
                       grid_side: int = 21):
    """Local search for ``n_srv`` serving positions maximising admitted users.

    Starts from k-means centers of the user field (plus ``restarts - 1``
    reseeded variants), from the warm start extended with new UAVs at the
    biggest unserved cluster, and from a greedy scan of a ``grid_side`` x
    ``grid_side`` grid that adds one UAV at a time (on top of the warm start
    when given).  Each start then moves one UAV at a time by at most
    ``d_max`` in one of 8 directions while the objective improves, halving
    the step when stuck.  Returns ``(Placement, served_count)``.
    """
    if n_srv < 0:
        raise ValueError("n_srv must be >= 0")
    K = len(users)
    if n_srv == 0 or K == 0:
        pos = np.zeros((0, 2)) if n_srv == 0 else np.tile([[0.0, 0.0]], (n_srv, 1))
        return Placement(pos), 0
    xy = users.positions
    if area is None:
        area = (float(xy[:, 0].max()), float(xy[:, 1].max()))
    diag = math.hypot(*area)
    rng = np.random.default_rng(seed)

    starts = []
    if warm_start is not None and 0 < len(warm_start) < n_srv:
        base = warm_start.positions
        assoc = associate_users(warm_start, users, r)
        rest = xy[assoc.uav_of < 0]
        k_new = n_srv - len(base)
        if len(rest) >= k_new:
            extra = _kmeans_centers(rest, k_new, rng)
        else:
            extra = _kmeans_centers(xy, k_new, rng)
        starts.append(np.vstack([base, extra]))
    elif warm_start is not None and len(warm_start) == n_srv:
        starts.append(warm_start.positions.copy())
    k = min(n_srv, K)
    for _ in range(max(restarts, 1)):
        c = _kmeans_centers(xy, k, rng)
        if k < n_srv:
            c = np.vstack([c, rng.uniform([0, 0], area, size=(n_srv - k, 2))])
        starts.append(c)
    # last, so that ties go to the cluster-centred starts
    if grid_side >= 2:
        g = warm_start.positions if warm_start is not None and len(warm_start) < n_srv else np.zeros((0, 2))
        while len(g) < n_srv:
            g = _grid_extend(g, users, r, area, diag, grid_side)
        starts.append(g)

    best_pos, best_score = None, -math.inf
    for s in starts:
        pos, score = _hill_climb(np.clip(s, [0, 0], area), users, r, area, diag, max_sweeps)
        if score > best_score:
            best_pos, best_score = pos, score
    return Placement(best_pos), int(math.floor(best_score))


def brute_force_placement(users: UserField, n_srv: int, grid_step: float, r: RadioParams, area,
                          max_evals: int = 200_000):
    """Exact maximum of the admission count over grid placements (n_srv <= 2).

    Returns ``(served_count, Placement)``.
    """
    if n_srv == 0 or len(users) == 0:
        return 0, Placement(np.zeros((n_srv, 2)))
    if n_srv > 2:
        raise SizeError("brute force supports at most 2 serving UAVs")
    w, h = area
    xs = np.arange(0.0, w + 1e-9, grid_step)
    ys = np.arange(0.0, h + 1e-9, grid_step)
    grid = np.array([(x, y) for x in xs for y in ys])
    n_evals = math.comb(len(grid), n_srv) if n_srv == 2 else len(grid)
    if n_evals > max_evals:
        raise SizeError(f"{n_evals} grid placements exceed budget {max_evals}")
    best, best_pos = -1, None
    for combo in itertools.combinations(range(len(grid)), n_srv):
        pos = grid[list(combo)]
        s = served_users(pos, users, r)
        if s > best:
            best, best_pos = s, pos
    return best, Placement(best_pos)


# -- coverage map -------------------------------------------------------------

@dataclass
class CoverageMap:
    """Per hour, max users served as a function of the number of serving UAVs."""

    served: np.ndarray                 # (T, N + 1) int, column n = n serving UAVs
    n_users: np.ndarray                # (T,)
    placements: dict = field(default_factory=dict)   # (t, n) -> (n, 2) array

    def __post_init__(self):
        self.served = np.asarray(self.served, dtype=int)
        self.n_users = np.asarray(self.n_users, dtype=int)

    @property
    def horizon(self) -> int:
        return self.served.shape[0]

    @property
    def fleet_size(self) -> int:
        return self.served.shape[1] - 1

    def value(self, t: int, n_srv: int) -> int:
        return int(self.served[t, n_srv])

    def min_serving_for(self, t: int, fraction: float):
        """Smallest n_srv whose row entry reaches ``fraction`` of the hour's users."""
        ok = np.flatnonzero(self.served[t] >= fraction * self.n_users[t])
        return int(ok[0]) if len(ok) else None

    def problems(self):
        errs = []
        if self.served.ndim != 2 or self.served.shape[0] != len(self.n_users):
            errs.append("served table must be (T, N+1) with one user count per hour")
            return errs
        if np.any(self.served[:, 0] != 0):
            errs.append("entry at n_srv=0 must be 0")
        if np.any(np.diff(self.served, axis=1) < 0):
            errs.append("rows must be nondecreasing in n_srv")
        if np.any(self.served > self.n_users[:, None]) or np.any(self.served < 0):
            errs.append("entries must lie in [0, n_users]")
        return errs

    def check_against(self, scenario: Scenario):
        if self.horizon != scenario.horizon_T or self.fleet_size != scenario.fleet_size_N:
            raise ValueError(
                f"coverage map is {self.horizon}x{self.fleet_size + 1} but scenario has "
                f"T={scenario.horizon_T}, N={scenario.fleet_size_N} (fleet-size mismatch)")
        expected = [scenario.n_users(t) for t in range(scenario.horizon_T)]
        if list(self.n_users) != expected:
            raise ValueError("coverage map user counts differ from the scenario demand")
        return self

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["hour", "n_srv", "served_users"])
            for t in range(self.horizon):
                for n in range(self.fleet_size + 1):
                    wr.writerow([t, n, int(self.served[t, n])])

    @classmethod
    def from_csv(cls, path, scenario: Scenario) -> "CoverageMap":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append((int(row["hour"]), int(row["n_srv"]), int(row["served_users"])))
        if not rows:
            raise ValueError(f"{path}: empty coverage map")
        T = max(r[0] for r in rows) + 1
        N = max(r[1] for r in rows)
        served = np.full((T, N + 1), -1, dtype=int)
        for t, n, s in rows:
            served[t, n] = s
        if np.any(served < 0):
            raise ValueError(f"{path}: coverage map has missing (hour, n_srv) entries")
        n_users = [scenario.n_users(t) for t in range(min(T, scenario.horizon_T))]
        cmap = cls(served, n_users + [0] * (T - len(n_users)))
        cmap.check_against(scenario)
        errs = cmap.problems()
        if errs:
            raise ValueError(f"{path}: " + "; ".join(errs))
        return cmap

    def placements_to_json(self, path):
        data = {f"{t}:{n}": np.asarray(p).tolist() for (t, n), p in sorted(self.placements.items())}
        Path(path).write_text(json.dumps(data, indent=1))

    def load_placements(self, path):
        data = json.loads(Path(path).read_text())
        self.placements = {tuple(int(x) for x in k.split(":")): np.array(v).reshape(-1, 2)
                           for k, v in data.items()}
        return self


def _hour_row(args):
    scenario, t, seed = args
    users = scenario.users(t, seed)
    N = scenario.fleet_size_N
    row = np.zeros(N + 1, dtype=int)
    placements = {(t, 0): np.zeros((0, 2))}
    prev = None
    for n in range(1, N + 1):
        pl, served = optimize_placement(users, n, scenario.radio, seed=scenario.user_seed(t, seed) + n,
                                        area=scenario.area, warm_start=prev)
        row[n] = served
        placements[(t, n)] = pl.positions
        prev = pl
    return np.maximum.accumulate(row), placements


def build_coverage_map(scenario: Scenario, seed=None, n_jobs: int = 1) -> CoverageMap:
    """Run the placement search for every hour and every fleet share 0..N.

    Rows are made monotone with a running max; the stored placement for an
    entry is the one the search found for that n_srv.
    """
    T = scenario.horizon_T
    jobs = [(scenario, t, seed) for t in range(T)]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            results = list(ex.map(_hour_row, jobs))
    else:
        results = [_hour_row(j) for j in jobs]
    served = np.array([row for row, _ in results])
    placements = {}
    for _, p in results:
        placements.update(p)
    cmap = CoverageMap(served, [scenario.n_users(t) for t in range(T)], placements)
    assert not cmap.problems(), cmap.problems()
    return cmap
