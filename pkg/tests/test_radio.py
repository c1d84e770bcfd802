import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solaruav.params import SPEED_OF_LIGHT, RadioParams
from solaruav.radio import (CoverageMap, NotCoveredError, Placement, SizeError, associate_users,
                            brute_force_placement, build_coverage_map, optimize_placement, path_loss_db,
                            required_rbs, served_users)
from solaruav.scenario import HourlyDemand, UserField, generate_users

R = RadioParams()


def oracle_sinr(user, server, positions, r=R):
    """Reference SINR at ``user`` from UAV ``server`` with every other covering UAV interfering."""
    def gain(p):
        d = math.sqrt((user[0] - p[0]) ** 2 + (user[1] - p[1]) ** 2 + r.serve_altitude_H_srv ** 2)
        pl = 20 * math.log10(4 * math.pi * r.carrier_f_c * d / SPEED_OF_LIGHT) + r.los_excess_eta
        return 10 ** (-pl / 20)

    interf = sum(r.tx_psd_P_t * gain(p) for j, p in enumerate(positions)
                 if j != server and math.dist(user, p) <= r.coverage_radius_R_cov)
    return r.tx_psd_P_t * gain(positions[server]) / (r.noise_psd_n0 + interf)


def test_path_loss_examples():
    assert path_loss_db(300.0, R) == pytest.approx(89.01080822955625, abs=1e-9)
    d0 = SPEED_OF_LIGHT / (4 * math.pi * R.carrier_f_c)
    assert path_loss_db(d0, R) == pytest.approx(R.los_excess_eta, abs=1e-9)
    assert path_loss_db(600.0, R) - path_loss_db(300.0, R) == pytest.approx(20 * math.log10(2), abs=1e-9)


@pytest.mark.parametrize("d", [0.0, -3.0])
def test_path_loss_domain(d):
    with pytest.raises(ValueError):
        path_loss_db(d, R)


@given(st.floats(1.0, 1e5))
def test_path_loss_matches_closed_form(d):
    ref = 20 * math.log10(4 * math.pi * R.carrier_f_c * d / SPEED_OF_LIGHT) + R.los_excess_eta
    assert abs(path_loss_db(d, R) - ref) <= 1e-9


def test_required_rbs_single_uav_overhead():
    pl = Placement([[500.0, 500.0]])
    rate = 2e6
    snr = oracle_sinr((500.0, 500.0), 0, pl.positions)
    expected = math.ceil(rate / (R.rb_bandwidth_W_RB * math.log2(1 + snr)))
    assert required_rbs((500.0, 500.0), 0, pl, R, rate) == expected
    assert required_rbs((500.0, 500.0), 0, pl, R, 0.0) == 0


def test_required_rbs_interference_never_helps():
    user = (500.0, 500.0)
    alone = required_rbs(user, 0, Placement([[400.0, 500.0]]), R, 2e6)
    shared = required_rbs(user, 0, Placement([[400.0, 500.0], [600.0, 500.0]]), R, 2e6)
    assert shared >= alone
    assert shared > alone


def test_required_rbs_not_covered():
    with pytest.raises(NotCoveredError):
        required_rbs((0.0, 0.0), 0, Placement([[900.0, 900.0]]), R, 2e6)


def test_single_user_admitted():
    users = UserField([[510.0, 480.0]], 2e6)
    a = associate_users(Placement([[500.0, 500.0]]), users, R)
    assert a.uav_of.tolist() == [0] and a.served == 1


def test_no_uavs_no_service():
    users = UserField(np.random.default_rng(0).uniform(0, 1000, (20, 2)), 2e6)
    a = associate_users(Placement(np.zeros((0, 2))), users, R)
    assert a.served == 0 and np.all(a.uav_of == -1)


def test_budget_admits_k_best():
    rng = np.random.default_rng(11)
    k = 5
    r = RadioParams(rbs_per_uav=k)
    users = UserField(rng.uniform(300, 700, (k + 5, 2)), 1e3)    # 1 RB each
    pl = Placement([[500.0, 500.0]])
    a = associate_users(pl, users, r)
    sinr = [oracle_sinr(tuple(u), 0, pl.positions, r) for u in users.positions]
    assert all(a.n_rbs[a.uav_of >= 0] == 1)
    assert a.served == k
    assert set(np.flatnonzero(a.uav_of == 0)) == set(np.argsort(sinr)[::-1][:k])


def test_second_stage_uses_next_best_uav():
    # both users prefer UAV 0 but it only has room for one of them
    r = RadioParams(rbs_per_uav=1)
    users = UserField([[100.0, 100.0], [120.0, 100.0]], 1e3)
    pl = Placement([[110.0, 100.0], [400.0, 100.0]])
    a = associate_users(pl, users, r)
    assert sorted(a.uav_of.tolist()) == [0, 1]


def verify_association(pl, users, r, a):
    for u in np.flatnonzero(a.uav_of >= 0):
        i = a.uav_of[u]
        assert math.dist(users.positions[u], pl.positions[i]) <= r.coverage_radius_R_cov
        sinr = oracle_sinr(tuple(users.positions[u]), i, pl.positions, r)
        assert a.n_rbs[u] * r.rb_bandwidth_W_RB * math.log2(1 + sinr) >= users.rate_requirement
    for i in range(len(pl)):
        assert a.n_rbs[a.uav_of == i].sum() == a.rb_used[i] <= r.rbs_per_uav


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 4), rate=st.sampled_from([5e5, 2e6, 8e6]))
def test_association_sound(seed, m, rate):
    rng = np.random.default_rng(seed)
    users = UserField(rng.uniform(0, 1000, (50, 2)), rate)
    pl = Placement(rng.uniform(0, 1000, (m, 2)))
    verify_association(pl, users, R, associate_users(pl, users, R))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_association_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 1000, (40, 2))
    pl = Placement(rng.uniform(0, 1000, (3, 2)))
    r = RadioParams(rbs_per_uav=15)
    perm = rng.permutation(40)
    a = associate_users(pl, UserField(xy, 2e6), r)
    b = associate_users(pl, UserField(xy[perm], 2e6), r)
    np.testing.assert_array_equal(a.uav_of[perm], b.uav_of)
    np.testing.assert_array_equal(a.n_rbs[perm], b.n_rbs)


def test_optimize_zero_uavs():
    users = UserField(np.random.default_rng(0).uniform(0, 1000, (10, 2)), 2e6)
    assert optimize_placement(users, 0, R)[1] == 0


def test_optimize_tight_cluster():
    rng = np.random.default_rng(4)
    center = np.array([300.0, 700.0])
    xy = center + rng.normal(scale=20.0, size=(20, 2))
    users = UserField(xy, 1e6)
    pl, served = optimize_placement(users, 1, R, area=(1000.0, 1000.0))
    best, _ = brute_force_placement(users, 1, 50.0, R, (1000.0, 1000.0))
    assert served == best == 20
    radius = np.max(np.linalg.norm(xy - xy.mean(axis=0), axis=1))
    assert np.linalg.norm(pl.positions[0] - xy.mean(axis=0)) <= radius


def test_optimize_warm_start_monotone():
    d = HourlyDemand(60, 0.6, ((250, 300, 60), (720, 280, 60), (550, 750, 60)))
    users = generate_users(d, (1000.0, 1000.0), 9)
    p1, s1 = optimize_placement(users, 1, R, area=(1000.0, 1000.0))
    p2, s2 = optimize_placement(users, 2, R, area=(1000.0, 1000.0), warm_start=p1)
    assert s2 >= s1
    assert s1 == served_users(p1.positions, users, R)


def test_optimize_deterministic():
    users = UserField(np.random.default_rng(2).uniform(0, 1000, (40, 2)), 2e6)
    a = optimize_placement(users, 2, R, seed=5, area=(1000.0, 1000.0))
    b = optimize_placement(users, 2, R, seed=5, area=(1000.0, 1000.0))
    np.testing.assert_array_equal(a[0].positions, b[0].positions)
    assert a[1] == b[1]


def test_brute_force_small_cases():
    users = UserField(np.random.default_rng(3).uniform(0, 400, (5, 2)), 2e6)
    assert brute_force_placement(users, 0, 100.0, R, (400.0, 400.0))[0] == 0
    best, pl = brute_force_placement(users, 1, 100.0, R, (400.0, 400.0))
    grid = [(x, y) for x in range(0, 401, 100) for y in range(0, 401, 100)]
    assert best == max(served_users([g], users, R) for g in grid)
    assert served_users(pl.positions, users, R) == best


def test_brute_force_size_limits():
    users = UserField(np.zeros((3, 2)), 2e6)
    with pytest.raises(SizeError):
        brute_force_placement(users, 3, 100.0, R, (1000.0, 1000.0))
    with pytest.raises(SizeError):
        brute_force_placement(users, 2, 1.0, R, (1000.0, 1000.0))


def test_coverage_map_properties(desk, desk_map):
    assert desk_map.problems() == []
    assert desk_map.served.shape == (24, 4)
    for t in range(24):
        row = desk_map.served[t]
        assert row[0] == 0
        assert np.all(np.diff(row) >= 0)
        assert row[-1] <= desk.n_users(t)
        if desk.n_users(t) == 0:
            assert np.all(row == 0)


def test_coverage_map_csv_round_trip(tmp_path, desk, desk_map):
    p = tmp_path / "map.csv"
    desk_map.to_csv(p)
    back = CoverageMap.from_csv(p, desk)
    np.testing.assert_array_equal(back.served, desk_map.served)
    assert len(p.read_text().strip().splitlines()) == 1 + 24 * 4
    desk_map.placements_to_json(tmp_path / "pl.json")
    back.load_placements(tmp_path / "pl.json")
    np.testing.assert_allclose(back.placements[(12, 2)], desk_map.placements[(12, 2)])


def test_coverage_map_fleet_mismatch(tmp_path, desk, desk_map):
    p = tmp_path / "map.csv"
    desk_map.to_csv(p)
    with pytest.raises(ValueError, match="fleet-size mismatch"):
        CoverageMap.from_csv(p, desk.replace(fleet_size_N=2))


def test_coverage_map_rejects_nonmonotone(tmp_path, desk):
    p = tmp_path / "map.csv"
    lines = ["hour,n_srv,served_users"]
    for t in range(24):
        n = desk.n_users(t)
        lines += [f"{t},0,0", f"{t},1,{n}", f"{t},2,{max(n - 1, 0)}", f"{t},3,{n}"]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="nondecreasing"):
        CoverageMap.from_csv(p, desk)


def test_coverage_map_deterministic(desk):
    small = desk.replace(horizon_T=2, demand=desk.demand[11:13])
    a = build_coverage_map(small, seed=1)
    b = build_coverage_map(small, seed=1)
    np.testing.assert_array_equal(a.served, b.served)
