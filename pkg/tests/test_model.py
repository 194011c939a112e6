import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plantflex.model import (Battery, FeasibilityWarning, GridContract, Horizon, Machine, MachineHistory,
                             PlantConfig, Schedule, schedule_cost, validate_config, validate_schedule)
from plantflex.scenario import case_study_plant


def plant(n=6, battery=None, demand=240.0, silo=None, machine=None, pv=0.0, history=None):
    return PlantConfig(
        horizon=Horizon(n),
        machines=(machine or Machine("mill", 6.0, 360.0, 6, 3),),
        silos=(silo or Silo_(),),
        battery=battery or Battery(),
        grid=GridContract(21.0),
        pv_power_mw=pv,
        demand_tph=demand,
        history=history,
    )


def Silo_(mx=15000.0, mn=9000.0, init=12000.0):
    from plantflex.model import Silo
    return Silo("silo", mx, mn, init)


def schedule_for(cfg, on, charge=None, discharge=None):
    """Consistent schedule for an on/off pattern: grid covers the rest."""
    n = cfg.n_slots
    on = np.asarray(on, dtype=float).reshape(1, n)
    ch = np.zeros(n) if charge is None else np.asarray(charge, float)
    dis = np.zeros(n) if discharge is None else np.asarray(discharge, float)
    load = cfg.machine_power() @ on
    net = load + ch - dis - cfg.pv_power_mw
    buy, sell = np.maximum(net, 0), np.maximum(-net, 0)
    prod = cfg.production_matrix() * on
    lv = cfg.silos[0].initial_t + np.cumsum((prod.sum(axis=0) - cfg.demand_tph) * cfg.dt)
    return Schedule(buy, sell, ch, dis, on, lv.reshape(1, n), 0.0)


def fields(violations):
    return {v.field for v in violations}


def test_case_study_plant_is_valid():
    assert validate_config(case_study_plant(3, 3)) == []


def test_initial_below_minimum():
    bad = validate_config(plant(silo=Silo_(init=8000.0)))
    assert any(v.message == "initial below minimum" for v in bad)


def test_battery_at_minimum_charge_admitted():
    # C=6, DoD 0.8 -> minimum 1.2 MWh
    b = Battery(6.0, 0.8, 1.2, 6.0, 6.0, 1.0)
    assert validate_config(plant(battery=b)) == []
    assert validate_config(plant(battery=Battery(6.0, 0.8, 1.0, 6.0, 6.0))) != []


def test_config_violations_are_collected():
    cfg = plant(n=4, machine=Machine("mill", -1.0, 360.0, 6, 3), battery=Battery(2.0, 1.5, 0.1, 2, 2))
    f = fields(validate_config(cfg))
    assert {"machines[mill].power_mw", "machines[mill].min_on_slots", "battery.dod"} <= f


def test_zero_battery_needs_zero_rates():
    assert "battery.p_charge_max_mw" in fields(validate_config(plant(battery=Battery(0.0, 0.8, 0.0, 1.0, 0.0))))


def test_history_length_checked():
    cfg = plant(history=(MachineHistory(True, 2), MachineHistory(False, 1)))
    assert "history" in fields(validate_config(cfg))


def test_low_capacity_warns():
    with pytest.warns(FeasibilityWarning):
        assert validate_config(plant(demand=400.0)) == []


def test_horizon_rejects_nonsense():
    with pytest.raises(ValueError):
        Horizon(0)
    with pytest.raises(ValueError):
        Horizon(4, 0.0)


def test_battery_sized():
    b = Battery.sized(3.0)
    assert (b.soc0_mwh, b.soc_min, b.soc_max, b.p_charge_max_mw) == pytest.approx((0.6, 0.6, 2.4, 3.0))


def test_short_on_run_is_flagged():
    # on for 5 slots with a 6-slot minimum, then off
    cfg = plant(n=8, silo=Silo_(mx=20000.0))
    s = schedule_for(cfg, [1, 1, 1, 1, 1, 0, 0, 0])
    bad = [v for v in validate_schedule(cfg, s) if v.field.endswith("min_on")]
    assert bad and bad[0].slot == 6


def test_full_length_run_passes():
    cfg = plant(n=9, silo=Silo_(mx=20000.0))
    assert validate_schedule(cfg, schedule_for(cfg, [1, 1, 1, 1, 1, 1, 0, 0, 0])) == []


def test_soc_above_maximum():
    # C=6 starts at 1.2; charging 4.0 MWh reaches 5.2 > 4.8
    b = Battery(6.0, 0.8, 1.2, 6.0, 6.0)
    cfg = plant(n=6, battery=b)
    s = schedule_for(cfg, [0] * 6, charge=[2.0, 2.0, 0, 0, 0, 0])
    v = [x for x in validate_schedule(cfg, s) if x.field == "soc"]
    assert v and v[0].slot == 2 and "4.8" in v[0].message
    ok = schedule_for(cfg, [0] * 6, charge=[2.0, 1.6, 0, 0, 0, 0])
    assert validate_schedule(cfg, ok) == []


def test_mass_and_power_balance_flagged():
    cfg = plant(n=4)
    s = schedule_for(cfg, [0, 0, 0, 0])
    broken = Schedule(s.buy_mw + 1.0, s.sell_mw, s.charge_mw, s.discharge_mw, s.machine_on,
                      s.silo_level_t + np.array([[0, 5.0, 0, 0]]), 0.0)
    f = fields(validate_schedule(cfg, broken))
    assert {"power_balance", "mass_balance"} <= f


def test_export_limited_to_pv():
    cfg = plant(n=3, pv=np.array([0.0, 2.0, 0.0]))
    s = schedule_for(cfg, [0, 0, 0])
    assert validate_schedule(cfg, s) == []
    more = Schedule(s.buy_mw + 1.0, s.sell_mw + 1.0, s.charge_mw, s.discharge_mw, s.machine_on, s.silo_level_t, 0.0)
    assert "sell_mw" in fields(validate_schedule(cfg, more))


def test_carried_obligation():
    cfg = plant(n=6, history=(MachineHistory(True, 2),), silo=Silo_(mx=20000.0))
    s = schedule_for(cfg, [1, 1, 0, 0, 0, 0])
    assert any(v.field.endswith("carried_min_on") for v in validate_schedule(cfg, s))
    assert validate_schedule(cfg, schedule_for(cfg, [1, 1, 1, 1, 0, 0])) == []


def test_shape_mismatch_raises():
    cfg = plant(n=4)
    s = schedule_for(plant(n=5), [0] * 5)
    with pytest.raises(ValueError, match="shape"):
        validate_schedule(cfg, s)


def test_schedule_cost():
    cfg = plant(n=3)
    s = schedule_for(cfg, [1, 0, 0])
    assert schedule_cost(cfg, [10.0, 20.0, 30.0], s) == pytest.approx(60.0)


def test_window_keeps_series_aligned():
    cfg = case_study_plant(2.0, 0.0, n_slots=48)
    w = cfg.window(24, 24)
    assert w.n_slots == 24 and np.array_equal(w.pv_power_mw, cfg.pv_power_mw[24:])
    with pytest.raises(ValueError):
        cfg.window(30, 24)


def test_series_are_read_only():
    cfg = case_study_plant(1.0, 0.0, n_slots=24)
    with pytest.raises(ValueError):
        cfg.pv_power_mw[0] = 5.0


@settings(max_examples=80, deadline=None)
@given(
    on=st.lists(st.integers(0, 1), min_size=4, max_size=16),
    m_on=st.integers(0, 5),
    m_off=st.integers(0, 4),
)
def test_run_lengths_flagged_exactly_when_a_run_is_short(on, m_on, m_off):
    from _oracles import run_lengths_ok

    n = len(on)
    cfg = plant(n=n, machine=Machine("mill", 6.0, 240.0, m_on, m_off), silo=Silo_(mx=1e6, mn=0.0, init=1e5))
    s = schedule_for(cfg, on)
    flagged = any(v.field.endswith(("min_on", "min_off")) for v in validate_schedule(cfg, s))
    assert flagged == (not run_lengths_ok(np.array(on), m_on, m_off))


@settings(max_examples=60, deadline=None)
@given(flows=st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=3, max_size=10))
def test_soc_checks_every_prefix(flows):
    b = Battery.sized(3.0)
    n = len(flows)
    cfg = plant(n=n, battery=b)
    f = np.array(flows)
    s = schedule_for(cfg, [0] * n, charge=np.maximum(f, 0), discharge=np.maximum(-f, 0))
    soc = b.soc0_mwh + np.cumsum(f)
    expect = bool(np.any(soc > b.soc_max + 1e-6) or np.any(soc < b.soc_min - 1e-6))
    got = any(v.field == "soc" for v in validate_schedule(cfg, s))
    assert got == expect
