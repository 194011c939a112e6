"""Command line entry point: ``plantflex {baseline,flex,sweep,validate}``.

Exit codes: 0 success, 1 usage error, 2 infeasible plan or model error,
3 input/output error.  Errors are also printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import InfeasiblePlanError, solve_baseline
from .config import ConfigError, load_plant_spec
from .flex import BUY, DEFAULT_EPS, SELL, FlexRequestError, greedy_select
from .market import PriceFileError, load_prices
from .mip import DEFAULT_GAP_TOL, SearchLimitReached
from .model import validate_config, validate_schedule
from .reports import (STUDY_COLUMNS, TRANSACTION_COLUMNS, dump_json, eur, read_schedule_json, study_rows,
                      write_schedule_csv, write_schedule_json, write_table, write_transactions_csv)
from .scenario import RollingPlanError, accepted_rows, run_study

logger = logging.getLogger("plantflex")

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ModelError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, prices_many=False):
    p.add_argument("--config", required=True, help="plant YAML file")
    if prices_many:
        p.add_argument("--prices", nargs="+", required=True, help="one price CSV per week")
    else:
        p.add_argument("--prices", help="price CSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--gap-tol", type=float, default=DEFAULT_GAP_TOL)
    p.add_argument("--backend", default="internal", help="MILP backend: internal or highs")


def _flex_flags(p: argparse.ArgumentParser):
    p.add_argument("--direction", choices=(SELL, BUY), default=SELL)
    p.add_argument("--h-mw", type=float, help="traded power, a sum of machine ratings (default: first machine)")
    p.add_argument("--eps-min", type=float, default=DEFAULT_EPS)
    p.add_argument("--eps-max", type=float, default=DEFAULT_EPS)
    p.add_argument("--equal-run-hours", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="plantflex", description="Production scheduling and balancing-market flexibility.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("baseline", help="cost-minimal schedule")
    _common(p)
    p = sub.add_parser("flex", help="balancing-market sweep of the first day")
    _common(p)
    _flex_flags(p)
    p.add_argument("--flex-slots", type=int, default=24, help="slots open to trading (default 24)")
    p = sub.add_parser("sweep", help="PV/battery sizing study")
    _common(p, prices_many=True)
    _flex_flags(p)
    p = sub.add_parser("validate", help="check a plant file and optionally a schedule")
    p.add_argument("--config", required=True)
    p.add_argument("--prices")
    p.add_argument("--schedule", help="schedule JSON to check against the plant")
    p.add_argument("--out")
    return ap


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def _load(args, n_slots):
    if not args.prices:
        raise UsageError("--prices is required for this command")
    ps = load_prices(args.prices)
    if len(ps) != n_slots:
        raise ModelError(f"{args.prices} has {len(ps)} slots, plant horizon has {n_slots}")
    return ps


def _plant(args):
    spec = load_plant_spec(args.config)
    cfg = spec.build()
    bad = validate_config(cfg)
    if bad:
        raise ModelError("invalid plant: " + "; ".join(f"{v.field}: {v.message}" for v in bad))
    return spec, cfg


def _h_magnitude(args, cfg) -> float:
    powers = [m.power_mw for m in cfg.machines]
    if not powers:
        raise ModelError("plant has no machines to shift")
    if args.h_mw is None:
        return float(powers[0])
    h = abs(args.h_mw)
    sums = {round(sum(c), 9) for r in range(1, len(powers) + 1) for c in itertools.combinations(powers, r)}
    if round(h, 9) not in sums:
        raise UsageError(f"--h-mw {args.h_mw:g} is not a sum of machine ratings {sorted(sums)}")
    return h


def _solve_kw(args):
    if args.gap_tol < 0:
        raise UsageError("--gap-tol must be >= 0")
    return {"gap_tol": args.gap_tol, "backend": args.backend}


def cmd_baseline(args) -> int:
    _, cfg = _plant(args)
    ps = _load(args, cfg.n_slots)
    base = solve_baseline(cfg, ps.dayahead, **_solve_kw(args))
    out = _out_dir(args)
    if out:
        write_schedule_json(cfg, base, out / "baseline.json")
        write_schedule_csv(cfg, base, out / "baseline.csv")
    energy = float(base.buy_mw.sum() * cfg.dt)
    lines = [
        f"baseline cost: {eur(base.cost_eur)} EUR",
        f"energy bought: {energy:.3f} MWh",
        f"machine hours on: " + ", ".join(f"{m.id}={int(base.machine_on[k].sum())}" for k, m in enumerate(cfg.machines)),
    ]
    text = "\n".join(lines) + "\n"
    if out:
        (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _format_table(rows) -> str:
    head = " ".join(f"{c:>10}" for c in TRANSACTION_COLUMNS)
    body = []
    for r in rows:
        cells = []
        for c in TRANSACTION_COLUMNS:
            v = r[c]
            if c == "tau" or c == "status":
                cells.append(f"{v:>10}")
            elif c == "h":
                cells.append(f"{v:>10.3f}")
            else:
                cells.append(f"{eur(v) or '-':>10}")
        body.append(" ".join(cells))
    return "\n".join([head] + body) + "\n"


def cmd_flex(args) -> int:
    _, cfg = _plant(args)
    ps = _load(args, cfg.n_slots)
    h = _h_magnitude(args, cfg)
    kw = _solve_kw(args)
    base = solve_baseline(cfg, ps.dayahead, **kw)
    sweeps: list = []
    accepted = greedy_select(cfg, ps.dayahead, ps.tertiary_up, ps.tertiary_down, base, args.direction, h,
                             n_flex_slots=args.flex_slots, eps_min=args.eps_min, eps_max=args.eps_max,
                             equal_run_hours=args.equal_run_hours, sweeps=sweeps, **kw)
    first = [tr.as_row() for tr in sweeps[0]] if sweeps else []
    chosen = [tr.as_row() for tr in accepted]
    out = _out_dir(args)
    if out:
        write_transactions_csv(first, out / "flex_sweep.csv")
        write_transactions_csv(chosen, out / "flex_accepted.csv")
        write_schedule_json(cfg, base, out / "baseline.json")
        doc = {
            "direction": args.direction,
            "h_mw": h,
            "eps_min": args.eps_min,
            "eps_max": args.eps_max,
            "equal_run_hours": args.equal_run_hours,
            "baseline_cost_eur": base.cost_eur,
            "sweeps": [[tr.as_row() for tr in rows] for rows in sweeps],
            "accepted": chosen,
        }
        dump_json(doc, out / "flex.json")
        for tr in accepted:
            write_schedule_json(cfg, tr.schedule, out / f"flex_schedule_tau{tr.tau}.json")
    sys.stdout.write(f"baseline cost: {eur(base.cost_eur)} EUR\n")
    sys.stdout.write(_format_table(first))
    total = sum(tr.profit_eur for tr in accepted)
    sys.stdout.write(f"accepted: {', '.join(str(tr.tau) for tr in accepted) or 'none'}; profit {eur(total)} EUR\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec, cfg = _plant(args)
    study = spec.study
    spd = int(study.get("slots_per_day", 24))
    need = int(study.get("weeks", len(args.prices)))
    if len(args.prices) < need:
        raise ModelError(f"study needs {need} weeks of prices, {len(args.prices)} given")
    weeks = [load_prices(p) for p in args.prices[:need]]
    for p, w in zip(args.prices, weeks):
        if len(w) != cfg.n_slots:
            raise ModelError(f"{p} has {len(w)} slots, plant horizon has {cfg.n_slots}")
    h = _h_magnitude(args, cfg)
    results = run_study(spec.grid(), spec.build, weeks, args.direction, h, capital=spec.capital(),
                        slots_per_day=spd, reset_soc=bool(study.get("reset_soc", False)),
                        eps_min=args.eps_min, eps_max=args.eps_max, equal_run_hours=args.equal_run_hours,
                        **_solve_kw(args))
    rows = study_rows(results)
    out = _out_dir(args)
    if out:
        write_table(rows, STUDY_COLUMNS, out / "study.csv")
        write_table(rows, ("config", "flex_revenue_eur", "production_savings_eur"), out / "fig_revenue_savings.csv")
        write_table(rows, ("config", "flexible_hours_avg"), out / "fig_flexible_hours.csv")
        write_table(rows, ("config", "transactions"), out / "fig_transactions.csv")
        write_table(rows, ("config", "capital_eur", "payback_years"), out / "fig_payback.csv")
        write_transactions_csv([r for res in results for r in accepted_rows(res)], out / "accepted.csv")
        dump_json({"results": rows}, out / "study.json")
    for r in rows:
        pb = "not amortizable" if r["payback_years"] is None else f"{r['payback_years']:.2f} y"
        sys.stdout.write(f"{r['config']:>6}  FR {eur(r['flex_revenue_eur']):>10}  PS {eur(r['production_savings_eur']):>10}  "
                         f"payback {pb}\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = load_plant_spec(args.config)
    cfg = spec.build()
    report = {"config": [v.__dict__ for v in validate_config(cfg)]}
    if args.prices:
        ps = load_prices(args.prices)
        report["prices"] = [] if len(ps) == cfg.n_slots else [
            {"field": "prices", "message": f"{len(ps)} slots for horizon of {cfg.n_slots}", "slot": None}]
    if args.schedule:
        s = read_schedule_json(args.schedule)
        try:
            report["schedule"] = [v.__dict__ for v in validate_schedule(cfg, s)]
        except ValueError as exc:
            report["schedule"] = [{"field": "schedule", "message": str(exc), "slot": None}]
    text = json.dumps(report, indent=2) + "\n"
    out = _out_dir(args)
    if out:
        (out / "validation.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if not any(report.values()) else EXIT_MODEL


COMMANDS = {"baseline": cmd_baseline, "flex": cmd_flex, "sweep": cmd_sweep, "validate": cmd_validate}


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except (InfeasiblePlanError, RollingPlanError) as exc:
        return _fail(EXIT_MODEL, "infeasible", str(exc))
    except PriceFileError as exc:
        return _fail(EXIT_IO, "io", str(exc))
    except (ModelError, ConfigError, FlexRequestError, SearchLimitReached, ValueError) as exc:
        return _fail(EXIT_MODEL, "model", str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "io", str(exc))


if __name__ == "__main__":
    sys.exit(main())
