"""Rolling weekly planning and the PV/battery sizing study.

Each week is planned day by day: the plan for day ``d`` is the baseline over
the rest of the week, of which only day ``d`` is committed.  The silo level,
battery charge and machine run history at the end of the committed day seed
the next window.  The balancing-market trades found on the committed day of
each window add up to the flexibility revenue of a configuration, and the
drop in committed production cost against the plant without PV and battery
is its production saving.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .baseline import InfeasiblePlanError, solve_baseline
from .flex import DEFAULT_EPS, FlexTransaction, greedy_select
from .market import PriceSet
from .model import (Battery, GridContract, Horizon, Machine, MachineHistory, PlantConfig, Schedule, Silo,
                    schedule_cost)

logger = logging.getLogger(__name__)

DAYS_PER_WEEK = 7
_SERVED = 10**6
PV_EUR_PER_MW = 934_500.0
BATTERY_EUR_PER_MWH = 530_885.0


@dataclass(frozen=True)
class ConfigurationGrid:
    """PV-only, battery-only and equal-size combinations plus the bare plant."""

    pv_capacities_mw: tuple = (1, 2, 3, 4, 5, 6)
    battery_capacities_mwh: tuple = (1, 2, 3, 4, 5, 6)

    def __post_init__(self):
        for name in ("pv_capacities_mw", "battery_capacities_mwh"):
            vals = tuple(float(v) for v in getattr(self, name))
            if any(v < 0 or not np.isfinite(v) for v in vals):
                raise ValueError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, tuple(sorted(set(v for v in vals if v > 0))))

    def configurations(self) -> list[tuple[str, float, float]]:
        """``(id, pv_mw, battery_mwh)`` in the order M00, M0Y, MX0, MXX."""
        out = [(config_id(0, 0), 0.0, 0.0)]
        out += [(config_id(0, y), 0.0, y) for y in self.battery_capacities_mwh]
        out += [(config_id(x, 0), x, 0.0) for x in self.pv_capacities_mw]
        both = sorted(set(self.pv_capacities_mw) & set(self.battery_capacities_mwh))
        out += [(config_id(v, v), v, v) for v in both]
        return out


def config_id(pv_mw: float, battery_mwh: float) -> str:
    def part(v):
        return f"{v:g}"

    a, b = part(pv_mw), part(battery_mwh)
    if len(a) == 1 and len(b) == 1:
        return f"M{a}{b}"
    return f"M{a}_{b}"


@dataclass(frozen=True)
class CapitalCosts:
    pv_eur_per_mw: float = PV_EUR_PER_MW
    battery_eur_per_mwh: float = BATTERY_EUR_PER_MWH

    def __post_init__(self):
        if not (self.pv_eur_per_mw > 0 and self.battery_eur_per_mwh > 0):
            raise ValueError("capital costs must be positive")

    def capital(self, pv_mw: float, battery_mwh: float) -> float:
        return self.pv_eur_per_mw * pv_mw + self.battery_eur_per_mwh * battery_mwh


def payback_years(capital_eur: float, flex_revenue_eur: float, production_savings_eur: float) -> float | None:
    """Simple payback assuming every month of the year earns like this one.

    None means the investment never pays back (no monthly gain).
    """
    monthly = flex_revenue_eur + production_savings_eur
    if monthly <= 0:
        return None
    return capital_eur / (12.0 * monthly)


@dataclass
class ScenarioResult:
    config_id: str
    pv_mw: float
    battery_mwh: float
    flex_revenue_eur: float
    production_savings_eur: float
    committed_cost_eur: float
    capital_eur: float
    payback_years: float | None
    transactions: list = field(default_factory=list, repr=False)
    flexible_hours_avg: float = 0.0

    @property
    def n_transactions(self) -> int:
        return len(self.transactions)

    @property
    def amortizable(self) -> bool:
        return self.payback_years is not None


class RollingPlanError(RuntimeError):
    def __init__(self, day: int, state: str, reason: str):
        super().__init__(f"day {day + 1} of the week cannot be planned ({state}): {reason}")
        self.day = day
        self.state = state


@dataclass
class RollingPlan:
    days: list[Schedule]
    windows: list[Schedule]
    window_configs: list[PlantConfig]
    window_starts: list[int]
    committed: Schedule

    @property
    def committed_cost_eur(self) -> float:
        return self.committed.cost_eur


def synthetic_pv_profile(n_slots: int, slots_per_day: int = 24, sunrise=6.0, sunset=18.0) -> np.ndarray:
    """Clear-sky output per MW installed: a half sine between sunrise and sunset."""
    hour = (np.arange(n_slots) % slots_per_day) * (24.0 / slots_per_day)
    shape = np.sin((hour - sunrise) / (sunset - sunrise) * np.pi)
    return np.where((hour > sunrise) & (hour < sunset), np.clip(shape, 0.0, None), 0.0)


def case_study_plant(pv_mw: float = 0.0, battery_mwh: float = 0.0, n_slots: int = 168,
                     pv_profile_per_mw=None, slot_hours: float = 1.0) -> PlantConfig:
    """The single-mill, single-silo raw milling plant with optional PV and battery."""
    profile = synthetic_pv_profile(n_slots) if pv_profile_per_mw is None else np.asarray(pv_profile_per_mw, float)
    if profile.shape != (n_slots,):
        raise ValueError(f"PV profile has {profile.size} values for {n_slots} slots")
    return PlantConfig(
        horizon=Horizon(n_slots, slot_hours),
        machines=(Machine("raw_mill", 6.0, 360.0, 6, 3),),
        silos=(Silo("raw_silo", 15_000.0, 9_000.0, 12_000.0),),
        battery=Battery.sized(battery_mwh, dod=0.8, c_rate=1.0, wear_cost=1.0),
        grid=GridContract(21.0),
        pv_power_mw=pv_mw * profile,
        demand_tph=240.0,
    )


def _describe(cfg: PlantConfig) -> str:
    levels = ", ".join(f"{s.id}={s.initial_t:.1f} t" for s in cfg.silos)
    hist = cfg.history or ()
    hs = ", ".join(f"{m.id} {'on' if h and h.on else 'off'} for {h.run_slots if h else 0}"
                   for m, h in zip(cfg.machines, hist or (None,) * len(cfg.machines)))
    return f"silo {levels}; SoC {cfg.battery.soc0_mwh:.3f} MWh; {hs or 'no history'}"


def _carry_history(prev: MachineHistory | None, y: np.ndarray) -> MachineHistory:
    # no history means off with the minimum off-time long served
    prev = prev or MachineHistory(False, _SERVED)
    y = np.asarray(y).astype(int)
    last = bool(y[-1])
    change = np.flatnonzero(y != y[-1])
    run = len(y) - (int(change[-1]) + 1) if len(change) else len(y)
    if not len(change) and prev.on == last:
        run += prev.run_slots
    return MachineHistory(last, min(run, _SERVED))


def _concat(parts: list[Schedule], cost: float) -> Schedule:
    return Schedule(
        buy_mw=np.concatenate([p.buy_mw for p in parts]),
        sell_mw=np.concatenate([p.sell_mw for p in parts]),
        charge_mw=np.concatenate([p.charge_mw for p in parts]),
        discharge_mw=np.concatenate([p.discharge_mw for p in parts]),
        machine_on=np.concatenate([p.machine_on for p in parts], axis=1),
        silo_level_t=np.concatenate([p.silo_level_t for p in parts], axis=1),
        cost_eur=cost,
    )


def rolling_plan(cfg: PlantConfig, dayahead, *, slots_per_day: int = 24, days: int = DAYS_PER_WEEK,
                 reset_soc: bool = False, **solve_kw) -> RollingPlan:
    """Plan ``days`` shrinking windows (whole week, then from day 2, ...).

    ``cfg`` covers the whole week and carries the state before day 1.  With
    ``reset_soc`` every window starts the battery at the week's initial
    charge instead of carrying it.
    """
    n = slots_per_day * days
    if cfg.n_slots != n:
        raise ValueError(f"plant horizon has {cfg.n_slots} slots, {days} days of {slots_per_day} need {n}")
    price = np.asarray(dayahead, dtype=float)
    if price.shape != (n,):
        raise ValueError(f"{price.size} prices for {n} slots")
    state = cfg
    day_plans, windows, wcfgs, starts = [], [], [], []
    total = 0.0
    for d in range(days):
        start = d * slots_per_day
        wcfg = state.window(start, n - start)
        try:
            win = solve_baseline(wcfg, price[start:], **solve_kw)
        except InfeasiblePlanError as exc:
            raise RollingPlanError(d, _describe(wcfg), exc.reason) from exc
        day = win.slice(0, slots_per_day)
        day_cfg = wcfg.window(0, slots_per_day)
        cost = schedule_cost(day_cfg, price[start:start + slots_per_day], day)
        day = replace(day, cost_eur=cost)
        total += cost
        day_plans.append(day)
        windows.append(win)
        wcfgs.append(wcfg)
        starts.append(start)

        silos = tuple(replace(s, initial_t=float(day.silo_level_t[i, -1])) for i, s in enumerate(state.silos))
        bat = state.battery
        if bat.present and not reset_soc:
            soc = float(day.soc(wcfg.battery, cfg.dt)[-1])
            bat = replace(bat, soc0_mwh=float(np.clip(soc, bat.soc_min, bat.soc_max)))
        hist = state.history or (None,) * len(state.machines)
        hist = tuple(_carry_history(h, day.machine_on[k]) for k, h in enumerate(hist))
        state = replace(state, silos=silos, battery=bat, history=hist)
    return RollingPlan(day_plans, windows, wcfgs, starts, _concat(day_plans, total))


@dataclass
class _WeekOutcome:
    cost: float
    revenue: float
    transactions: list
    flexible_hours: list


def _evaluate_week(cfg: PlantConfig, prices: PriceSet, direction, h_mw, slots_per_day, reset_soc,
                   flex_kw, solve_kw, week_no) -> _WeekOutcome:
    plan = rolling_plan(cfg, prices.dayahead, slots_per_day=slots_per_day, reset_soc=reset_soc, **solve_kw)
    revenue, trades, hours = 0.0, [], []
    for d, (wcfg, win, start) in enumerate(zip(plan.window_configs, plan.windows, plan.window_starts)):
        wp = prices.slice(start, cfg.n_slots)
        sweeps: list = []
        acc = greedy_select(wcfg, wp.dayahead, wp.tertiary_up, wp.tertiary_down, win, direction, h_mw,
                            n_flex_slots=slots_per_day, sweeps=sweeps, **flex_kw, **solve_kw)
        hours.append(sum(1 for tr in sweeps[0] if tr.profitable) if sweeps else 0)
        for tr in acc:
            revenue += tr.profit_eur
            trades.append((week_no, d, tr))
    return _WeekOutcome(plan.committed_cost_eur, revenue, trades, hours)


def run_study(grid: ConfigurationGrid, plant_factory: Callable[[float, float], PlantConfig], weeks: list[PriceSet],
              direction: str, h_mw: float, *, capital: CapitalCosts | None = None, slots_per_day: int = 24,
              reset_soc: bool = False, eps_min=DEFAULT_EPS, eps_max=DEFAULT_EPS, equal_run_hours=False,
              **solve_kw) -> list[ScenarioResult]:
    """Evaluate every configuration of ``grid`` over the given weeks.

    ``plant_factory(pv_mw, battery_mwh)`` builds the week-long plant.  Weeks
    are independent; each is planned with the same initial plant state.
    """
    capital = capital or CapitalCosts()
    if not weeks:
        raise ValueError("at least one week of prices is required")
    flex_kw = dict(eps_min=eps_min, eps_max=eps_max, equal_run_hours=equal_run_hours)
    outcomes: dict[tuple[float, float], list[_WeekOutcome]] = {}

    def evaluate(pv, bat):
        key = (pv, bat)
        if key not in outcomes:
            cfg = plant_factory(pv, bat)
            res = []
            for w, ps in enumerate(weeks):
                if len(ps) != cfg.n_slots:
                    raise ValueError(f"week {w + 1} has {len(ps)} price slots, plant needs {cfg.n_slots}")
                try:
                    res.append(_evaluate_week(cfg, ps, direction, h_mw, slots_per_day, reset_soc,
                                              flex_kw, solve_kw, w))
                except RollingPlanError as exc:
                    raise RollingPlanError(exc.day, f"{config_id(pv, bat)}, week {w + 1}; {exc.state}",
                                           str(exc.__cause__ or exc)) from exc
            outcomes[key] = res
        return outcomes[key]

    ref_cost = sum(o.cost for o in evaluate(0.0, 0.0))
    results = []
    for cid, pv, bat in grid.configurations():
        weeks_out = evaluate(pv, bat)
        cost = sum(o.cost for o in weeks_out)
        fr = sum(o.revenue for o in weeks_out)
        ps = ref_cost - cost
        hours = [h for o in weeks_out for h in o.flexible_hours]
        cap = capital.capital(pv, bat)
        results.append(ScenarioResult(
            config_id=cid, pv_mw=pv, battery_mwh=bat, flex_revenue_eur=fr, production_savings_eur=ps,
            committed_cost_eur=cost, capital_eur=cap,
            payback_years=payback_years(cap, fr, ps) if cap > 0 else None,
            transactions=[t for o in weeks_out for t in o.transactions],
            flexible_hours_avg=float(np.mean(hours)) if hours else 0.0,
        ))
    return results


def accepted_rows(result: ScenarioResult) -> list[dict]:
    """Flat rows of a result's accepted transactions, for reporting."""
    out = []
    for week, day, tr in result.transactions:
        tr: FlexTransaction
        row = {"config": result.config_id, "week": week + 1, "day": day + 1}
        row.update(tr.as_row())
        out.append(row)
    return out
