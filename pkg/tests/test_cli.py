import json

import numpy as np
import pytest

from plantflex.cli import main
from plantflex.market import PriceSet, write_prices
from plantflex.model import FeasibilityWarning
from plantflex.reports import (TRANSACTION_COLUMNS, read_schedule_csv, read_schedule_json, read_study_csv,
                               read_transactions_csv)

PLANT = """\
horizon: {{n_slots: {n}, slot_hours: 1}}
machines:
  - {{id: raw_mill, power_mw: 6, production_tph: 360, min_on_slots: {m_on}, min_off_slots: {m_off}}}
silos:
  - {{id: raw_silo, capacity_max_t: 15000, capacity_min_t: 9000, initial_t: 12000}}
battery: {{capacity_mwh: {bat}}}
grid: {{p_buy_max_mw: 21}}
pv: {{capacity_mw: {pv}}}
demand_tph: {demand}
study:
  slots_per_day: {spd}
  weeks: 1
  pv_capacities_mw: {pvs}
  battery_capacities_mwh: {bats}
"""


def plant(tmp_path, n=24, m_on=6, m_off=3, bat=0, pv=0, demand=240, spd=24, pvs="[]", bats="[]"):
    p = tmp_path / "plant.yaml"
    p.write_text(PLANT.format(n=n, m_on=m_on, m_off=m_off, bat=bat, pv=pv, demand=demand, spd=spd,
                              pvs=pvs, bats=bats))
    return str(p)


def prices(tmp_path, da, up=None, down=None, name="prices.csv"):
    da = np.asarray(da, float)
    up = da + 20 if up is None else up
    down = da - 20 if down is None else down
    p = tmp_path / name
    write_prices(PriceSet(da, up, down), p)
    return str(p)


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_flat_price_baseline(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["baseline", "--config", plant(tmp_path), "--prices", prices(tmp_path, np.full(24, 50.0)),
                 "--out", str(out)])
    text = capsys.readouterr().out
    assert code == 0
    # 5760 t demand, 3000 t of slack: 8 slots on at 6 MW and 50 EUR/MWh
    assert "baseline cost: 2400.00 EUR" in text and "raw_mill=8" in text
    js = read_schedule_json(out / "baseline.json")
    cs = read_schedule_csv(out / "baseline.csv")
    assert js.cost_eur == pytest.approx(2400.0)
    assert np.array_equal(js.machine_on, cs.machine_on)
    assert np.allclose(js.buy_mw, cs.buy_mw, atol=5e-4)
    assert (out / "summary.txt").read_text() == text


def test_infeasible_plan_exit_code(tmp_path, capsys):
    with pytest.warns(FeasibilityWarning):
        code = main(["baseline", "--config", plant(tmp_path, demand=500), "--prices",
                     prices(tmp_path, np.full(24, 50.0))])
    assert code == 2
    err = error_of(capsys)
    assert err["exit_code"] == 2 and "no feasible production plan" in err["message"]


def test_usage_errors(tmp_path, capsys):
    assert main(["baseline"]) == 1
    assert error_of(capsys)["error"] == "usage"
    assert main(["baseline", "--config", plant(tmp_path)]) == 1
    assert main(["flex", "--config", plant(tmp_path), "--prices", prices(tmp_path, np.full(24, 50.0)),
                 "--h-mw", "4"]) == 1
    assert "not a sum of machine ratings" in error_of(capsys)["message"]


def test_bad_price_file(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("timestamp,dayahead_eur_mwh,tertiary_up_eur_mwh,tertiary_down_eur_mwh\n2023-01-01T00:00,,1,1\n")
    assert main(["baseline", "--config", plant(tmp_path), "--prices", str(p)]) == 3
    assert "bad.csv:2" in error_of(capsys)["message"]
    assert main(["baseline", "--config", plant(tmp_path), "--prices", str(tmp_path / "none.csv")]) == 3


def test_horizon_mismatch(tmp_path, capsys):
    assert main(["baseline", "--config", plant(tmp_path), "--prices", prices(tmp_path, np.full(20, 50.0))]) == 2


def test_flex_reports(tmp_path, capsys):
    rng = np.random.default_rng(0)
    da = np.round(rng.uniform(30, 120, 24), 2)
    out = tmp_path / "out"
    cmd = ["flex", "--config", plant(tmp_path, m_on=2, m_off=1), "--prices", prices(tmp_path, da, da + 40, da - 40),
           "--direction", "buy", "--out", str(out), "--backend", "highs"]
    assert main(cmd) == 0
    rows = read_transactions_csv(out / "flex_sweep.csv")
    assert tuple(rows[0]) == TRANSACTION_COLUMNS
    assert [r["tau"] for r in rows] == list(range(1, 25))
    doc = json.loads((out / "flex.json").read_text())
    accepted = read_transactions_csv(out / "flex_accepted.csv")
    assert [a["tau"] for a in accepted] == [a["tau"] for a in doc["accepted"]]
    for a in doc["accepted"]:
        s = read_schedule_json(out / f"flex_schedule_tau{a['tau']}.json")
        assert s.n_slots == 24


def test_no_tertiary_market(tmp_path, capsys):
    out = tmp_path / "out"
    nan = np.full(24, np.nan)
    assert main(["flex", "--config", plant(tmp_path), "--prices", prices(tmp_path, np.full(24, 50.0), nan, nan),
                 "--out", str(out), "--backend", "highs"]) == 0
    rows = read_transactions_csv(out / "flex_sweep.csv")
    assert {r["status"] for r in rows} == {"not-available"}
    assert read_transactions_csv(out / "flex_accepted.csv") == []
    assert "accepted: none" in capsys.readouterr().out


def test_sweep_bare_plant_only(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = plant(tmp_path, n=28, m_on=2, m_off=1, spd=4)
    assert main(["sweep", "--config", cfg, "--prices", prices(tmp_path, np.tile([80.0, 40, 30, 70], 7)),
                 "--out", str(out), "--backend", "highs"]) == 0
    rows = read_study_csv(out / "study.csv")
    assert [r["config"] for r in rows] == ["M00"]
    assert rows[0]["production_savings_eur"] == 0.0 and rows[0]["payback_years"] is None
    assert "not amortizable" in capsys.readouterr().out


def test_sweep_full_grid(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = plant(tmp_path, n=14, m_on=2, m_off=1, spd=2, pvs="[1, 2, 3, 4, 5, 6]", bats="[1, 2, 3, 4, 5, 6]")
    rng = np.random.default_rng(2)
    da = np.round(rng.uniform(20, 140, 14), 2)
    assert main(["sweep", "--config", cfg, "--prices", prices(tmp_path, da), "--out", str(out),
                 "--backend", "highs"]) == 0
    rows = read_study_csv(out / "study.csv")
    assert len(rows) == 19 and rows[0]["config"] == "M00" and rows[-1]["config"] == "M66"
    for name in ("fig_revenue_savings.csv", "fig_flexible_hours.csv", "fig_transactions.csv",
                 "fig_payback.csv", "accepted.csv", "study.json"):
        assert (out / name).exists()
    assert len(json.loads((out / "study.json").read_text())["results"]) == 19


def test_sweep_needs_every_week(tmp_path, capsys):
    cfg = plant(tmp_path, n=28, m_on=2, m_off=1, spd=4)
    with open(cfg) as fh:
        text = fh.read()
    with open(cfg, "w") as fh:
        fh.write(text.replace("weeks: 1", "weeks: 2"))
    assert main(["sweep", "--config", cfg, "--prices", prices(tmp_path, np.full(28, 50.0))]) == 2
    assert "needs 2 weeks" in error_of(capsys)["message"]


def test_validate(tmp_path, capsys):
    cfg = plant(tmp_path)
    out = tmp_path / "out"
    assert main(["baseline", "--config", cfg, "--prices", prices(tmp_path, np.full(24, 50.0)), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["validate", "--config", cfg, "--schedule", str(out / "baseline.json")]) == 0
    assert json.loads(capsys.readouterr().out) == {"config": [], "schedule": []}
    doc = json.loads((out / "baseline.json").read_text())
    doc["buy_mw"][0] += 1.0
    (out / "broken.json").write_text(json.dumps(doc))
    assert main(["validate", "--config", cfg, "--schedule", str(out / "broken.json")]) == 2
    report = json.loads(capsys.readouterr().out)
    assert any(v["field"] == "power_balance" for v in report["schedule"])
