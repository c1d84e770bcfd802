import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solaruav.energy import (EnergyModel, InfeasibleActionError, grounded_power, harvest_power,
                             kinematic_power, min_energy, slot_transition, solar_intensity, total_power)
from solaruav.params import Altitudes, Level, PhysicsParams, SolarParams

P = PhysicsParams()
S = SolarParams()

# Frozen from a hand-coded evaluation of the rotor power formula:
# W=49 N, rho=1.225, A=4*pi*0.3^2, sigma*A=0.056*A, C_D0=5e-4, v_T=150.
HOVER_KIN = 222.42136051189988
CLIMB_KIN = 418.42136051189988
LEVEL6_KIN = 148.1500829605551
DESCENT_TOTAL = 31.421360511899888
EMIN_GROUND = 41.1659656053236
EMIN_SERVE = 32.34468726132568


def test_disk_area_uses_four_rotors():
    assert P.disk_area == pytest.approx(4 * math.pi * 0.09)
    assert P.hover_induced_speed == pytest.approx(4.205, abs=1e-3)


@pytest.mark.parametrize("v_lv,v_vt,expected", [(0, 0, HOVER_KIN), (0, 4, CLIMB_KIN), (6, 0, LEVEL6_KIN)])
def test_kinematic_power_reference_values(v_lv, v_vt, expected):
    assert kinematic_power(v_lv, v_vt, P) == pytest.approx(expected, rel=1e-12)


def test_hover_power_split():
    W = P.weight_W
    assert W * P.hover_induced_speed == pytest.approx(206.1, abs=0.05)
    drag = HOVER_KIN - W * P.hover_induced_speed
    assert drag == pytest.approx(16.4, abs=0.05)


def test_total_power_adds_static_and_tx():
    assert total_power(0, 0, P) == pytest.approx(HOVER_KIN + 5)
    assert total_power(0, -4, P) == pytest.approx(DESCENT_TOTAL, rel=1e-12)
    assert total_power(0, 0, PhysicsParams(tx_power_P_tx=2.0)) == pytest.approx(HOVER_KIN + 7)
    assert grounded_power(P) == 5.0


def test_level_flight_cheaper_than_hover():
    assert kinematic_power(6, 0, P) < kinematic_power(0, 0, P)


def test_kinematic_power_array_input():
    out = kinematic_power(np.array([0.0, 6.0]), np.zeros(2), P)
    assert out.shape == (2,)
    assert out[1] == pytest.approx(LEVEL6_KIN)


@pytest.mark.parametrize("args", [(math.nan, 0), (0, math.inf), (7, 0), (0, 4.5), (0, -5)])
def test_kinematic_power_domain(args):
    with pytest.raises(ValueError):
        kinematic_power(*args, P)


def test_solar_examples():
    assert solar_intensity(12, S) == 2000.0
    assert solar_intensity(3, S) == 0.0
    assert solar_intensity(9, S) == pytest.approx(1500.0)


@pytest.mark.parametrize("t", [-0.1, 24, 30, math.nan])
def test_solar_domain(t):
    with pytest.raises(ValueError):
        solar_intensity(t, S)


def test_solar_shape():
    assert np.all(solar_intensity(np.linspace(0, 6, 61), S) == 0)
    assert np.all(solar_intensity(np.linspace(18, 23.99, 61), S) == 0)
    inside = np.linspace(6.01, 17.99, 500)
    assert np.all(solar_intensity(inside, S) > 0)
    assert np.all(solar_intensity(inside, S) <= solar_intensity(12, S))


def test_harvest_examples():
    assert harvest_power(0, S) == 0.0
    assert harvest_power(2000, S) == pytest.approx(500.0)
    assert harvest_power(100, S) == pytest.approx(0.25 / 150 * 100 ** 2)
    with pytest.raises(ValueError):
        harvest_power(-1, S)


@given(st.floats(0, 5000))
def test_harvest_monotone(x):
    assert harvest_power(x + 1.0, S) >= harvest_power(x, S)


def test_min_energy():
    assert min_energy(Level.CHARGE, P) == 0.0
    assert min_energy(Level.GROUND, P) == pytest.approx(EMIN_GROUND, rel=1e-12)
    assert min_energy(Level.SERVE, P) == pytest.approx(EMIN_SERVE, rel=1e-12)
    assert min_energy(0, P, Altitudes(serve=300, charge=1400)) == pytest.approx(350 * 423.42136 / 3600, rel=1e-6)


def test_slot_charge_at_noon():
    r = slot_transition(Level.CHARGE, Level.CHARGE, 100.0, 12, 3600, P, S)
    assert r.harvested_E_h == pytest.approx(500.0)
    assert r.consumed_E_c == pytest.approx(HOVER_KIN + 5)
    assert r.new_residue - 100.0 == pytest.approx(500.0 - HOVER_KIN - 5)
    assert r.transit_seconds == 0


def test_slot_ground_idle():
    r = slot_transition(Level.GROUND, Level.GROUND, 300.0, 12, 3600, P, S)
    assert (r.harvested_E_h, r.consumed_E_c, r.transit_seconds) == (0.0, 5.0, 0.0)
    assert r.new_residue == pytest.approx(295.0)


def test_slot_climb_then_charge():
    r = slot_transition(Level.GROUND, Level.CHARGE, 200.0, 12, 3600, P, S)
    assert r.transit_seconds == pytest.approx(350.0)
    dwell = 3250 / 3600
    assert r.harvested_E_h == pytest.approx(500.0 * dwell)
    assert r.consumed_E_c == pytest.approx(EMIN_GROUND + (HOVER_KIN + 5) * dwell)
    assert r.new_altitude == Level.CHARGE


def test_slot_saturation_discards_excess():
    r = slot_transition(Level.CHARGE, Level.CHARGE, 590.0, 12, 3600, P, S)
    assert r.new_residue == 600.0
    assert r.discarded_E_h == pytest.approx(590 + 500 - HOVER_KIN - 5 - 600)
    assert r.stored_E_h + r.discarded_E_h == pytest.approx(r.harvested_E_h)


def test_slot_shortfall_reported():
    r = slot_transition(Level.SERVE, Level.SERVE, 10.0, 12, 3600, P, S)
    assert r.new_residue == 0.0
    assert r.shortfall_E == pytest.approx(HOVER_KIN + 5 - 10)


def test_slot_residue_domain():
    with pytest.raises(ValueError):
        slot_transition(0, 0, 700.0, 12, 3600, P, S)


def test_transit_longer_than_slot():
    with pytest.raises(InfeasibleActionError):
        slot_transition(Level.GROUND, Level.CHARGE, 300.0, 12, 300, P, S)


def test_energy_model_tables():
    m = EnergyModel(P, S)
    assert m.e_min == pytest.approx([EMIN_GROUND, EMIN_SERVE, 0.0])
    assert m.transit_s[Level.CHARGE, Level.GROUND] == pytest.approx(350.0)
    assert m.charging_net_W(12) == pytest.approx(500 - HOVER_KIN - 5)
    assert m.charging_net_W(3) < 0


@settings(max_examples=300, deadline=None)
@given(prev=st.sampled_from(list(Level)), action=st.sampled_from(list(Level)),
       residue=st.floats(0, 600), hour=st.integers(0, 23))
def test_slot_bounds_and_ledger(prev, action, residue, hour):
    r = slot_transition(prev, action, residue, hour, 3600, P, S)
    assert 0 <= r.new_residue <= P.battery_capacity_E_cap
    assert r.harvested_E_h >= 0 and r.consumed_E_c >= 0
    assert 0 <= r.stored_E_h <= r.harvested_E_h + 1e-12
    lhs = r.new_residue - residue
    rhs = r.stored_E_h - r.consumed_E_c + r.shortfall_E
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
    if prev == action == Level.GROUND:
        assert r.harvested_E_h == 0
