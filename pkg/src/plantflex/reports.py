"""Writers and readers for schedules, transaction reports and study tables.

JSON keeps full float precision; CSV files are for people and spreadsheets
and round money to cents and power/energy/mass to three decimals.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .model import PlantConfig, Schedule

TRANSACTION_COLUMNS = ("tau", "pi_b", "pi_s", "spread", "h", "gross", "flex_cost", "profit", "status")
_MONEY = {"pi_b", "pi_s", "spread", "gross", "flex_cost", "profit"}


def eur(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2f}"


def mw(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.3f}"


def _clean(v):
    """JSON-safe value: NaN becomes null, numpy scalars become Python ones."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else v
    if isinstance(v, np.integer):
        return int(v)
    return v


def dump_json(obj, path) -> None:
    text = json.dumps(_clean(obj), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def schedule_to_dict(cfg: PlantConfig, s: Schedule) -> dict:
    return {
        "n_slots": s.n_slots,
        "slot_hours": float(cfg.dt),
        "cost_eur": float(s.cost_eur),
        "buy_mw": s.buy_mw,
        "sell_mw": s.sell_mw,
        "charge_mw": s.charge_mw,
        "discharge_mw": s.discharge_mw,
        "soc_mwh": s.soc(cfg.battery, cfg.dt),
        "pv_mw": cfg.pv_power_mw,
        "machines": [{"id": m.id, "on": s.machine_on[k].astype(int)} for k, m in enumerate(cfg.machines)],
        "silos": [{"id": si.id, "level_t": s.silo_level_t[i]} for i, si in enumerate(cfg.silos)],
    }


def schedule_from_dict(d: dict) -> Schedule:
    try:
        n = int(d["n_slots"])
        machines = d.get("machines", [])
        silos = d.get("silos", [])
        on = np.array([m["on"] for m in machines], dtype=np.int8).reshape(len(machines), n)
        lv = np.array([s["level_t"] for s in silos], dtype=float).reshape(len(silos), n)
        cost = d.get("cost_eur")
        return Schedule(
            buy_mw=np.array(d["buy_mw"], dtype=float),
            sell_mw=np.array(d["sell_mw"], dtype=float),
            charge_mw=np.array(d["charge_mw"], dtype=float),
            discharge_mw=np.array(d["discharge_mw"], dtype=float),
            machine_on=on,
            silo_level_t=lv,
            cost_eur=float("nan") if cost is None else float(cost),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"not a schedule document: {exc}") from None


def write_schedule_json(cfg: PlantConfig, s: Schedule, path) -> None:
    dump_json(schedule_to_dict(cfg, s), path)


def read_schedule_json(path) -> Schedule:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    return schedule_from_dict(d)


def write_schedule_csv(cfg: PlantConfig, s: Schedule, path) -> None:
    soc = s.soc(cfg.battery, cfg.dt)
    header = ["slot", "buy_mw", "sell_mw", "charge_mw", "discharge_mw", "soc_mwh", "pv_mw"]
    header += [f"on_{m.id}" for m in cfg.machines] + [f"level_t_{si.id}" for si in cfg.silos]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(s.n_slots):
            row = [t + 1, mw(s.buy_mw[t]), mw(s.sell_mw[t]), mw(s.charge_mw[t]), mw(s.discharge_mw[t]),
                   mw(soc[t]), mw(cfg.pv_power_mw[t])]
            row += [int(s.machine_on[k, t]) for k in range(len(cfg.machines))]
            row += [mw(s.silo_level_t[i, t]) for i in range(len(cfg.silos))]
            w.writerow(row)


def read_schedule_csv(path) -> Schedule:
    """Schedule from the CSV layout (values as rounded in the file; no cost)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    cols = list(rows[0])
    on_cols = [c for c in cols if c.startswith("on_")]
    lv_cols = [c for c in cols if c.startswith("level_t_")]

    def col(name):
        return np.array([float(r[name]) for r in rows])

    return Schedule(
        buy_mw=col("buy_mw"),
        sell_mw=col("sell_mw"),
        charge_mw=col("charge_mw"),
        discharge_mw=col("discharge_mw"),
        machine_on=np.array([[int(r[c]) for r in rows] for c in on_cols], dtype=np.int8).reshape(len(on_cols), -1),
        silo_level_t=np.array([col(c) for c in lv_cols]).reshape(len(lv_cols), -1),
        cost_eur=float("nan"),
    )


def write_transactions_csv(rows, path) -> None:
    """Rows as returned by ``FlexTransaction.as_row`` (extra keys go first)."""
    rows = list(rows)
    extra = [k for k in (rows[0] if rows else {}) if k not in TRANSACTION_COLUMNS]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(extra + list(TRANSACTION_COLUMNS))
        for r in rows:
            out = [r[k] for k in extra]
            for k in TRANSACTION_COLUMNS:
                v = r[k]
                if k in _MONEY:
                    out.append(eur(v))
                elif k == "h":
                    out.append(mw(v))
                else:
                    out.append(v)
            w.writerow(out)


def read_transactions_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        d = {}
        for k, v in r.items():
            if k in _MONEY or k == "h":
                d[k] = float(v) if v != "" else float("nan")
            elif k in ("tau", "week", "day"):
                d[k] = int(v)
            else:
                d[k] = v
        out.append(d)
    return out


STUDY_COLUMNS = ("config", "pv_mw", "battery_mwh", "flex_revenue_eur", "production_savings_eur",
                 "committed_cost_eur", "capital_eur", "payback_years", "transactions", "flexible_hours_avg")


def study_rows(results) -> list[dict]:
    return [
        {
            "config": r.config_id,
            "pv_mw": r.pv_mw,
            "battery_mwh": r.battery_mwh,
            "flex_revenue_eur": r.flex_revenue_eur,
            "production_savings_eur": r.production_savings_eur,
            "committed_cost_eur": r.committed_cost_eur,
            "capital_eur": r.capital_eur,
            "payback_years": r.payback_years,
            "transactions": r.n_transactions,
            "flexible_hours_avg": r.flexible_hours_avg,
        }
        for r in results
    ]


def _study_cell(k, v):
    if k == "payback_years":
        return "not amortizable" if v is None else f"{v:.2f}"
    if k.endswith("_eur"):
        return eur(v)
    if k in ("pv_mw", "battery_mwh", "flexible_hours_avg"):
        return mw(v)
    return v


def write_table(rows, columns, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_study_cell(k, r[k]) for k in columns])


def read_study_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        d = dict(r)
        for k in STUDY_COLUMNS[1:]:
            if k == "payback_years":
                d[k] = None if r[k] == "not amortizable" else float(r[k])
            elif k == "transactions":
                d[k] = int(r[k])
            else:
                d[k] = float(r[k])
        out.append(d)
    return out
