"""Flexibility of a baseline schedule towards the balancing market.

A flexibility request forces the grid purchase at one slot ``tau`` away from
the baseline by ``h`` MW (negative sells power back by consuming less,
positive buys more).  Everything before ``tau`` stays as planned; the rest of
the horizon is re-optimised under the same plant constraints.  The extra
production cost of the re-optimised plan is the flexibility cost, which the
balancing-market spread at ``tau`` has to beat for the trade to pay off.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .baseline import VariableLayout, build_baseline_builder, decode
from .lp import EQ, GE, LE
from .mip import (DEFAULT_GAP_TOL, DEFAULT_NODE_LIMIT, INFEASIBLE, OPTIMAL, MixedIntegerProgram,
                  SearchLimitReached, solve_mip)
from .model import PlantConfig, Schedule

logger = logging.getLogger(__name__)

SELL, BUY = "sell", "buy"
FEASIBLE = "feasible"
NOT_AVAILABLE = "not-available"
DEFAULT_EPS = 0.05
FLEX_SLOTS = 24


class FlexRequestError(ValueError):
    """A perturbation that the grid connection cannot deliver at all."""


@dataclass(frozen=True)
class FlexRequest:
    """Perturbation ``h_mw`` of the purchase at slot ``tau`` (1-based).

    ``allow_zero`` admits ``h_mw == 0``, which reproduces the baseline and is
    only useful for checking the program itself.
    """

    tau: int
    h_mw: float
    eps_min: float = DEFAULT_EPS
    eps_max: float = DEFAULT_EPS
    equal_run_hours: bool = False
    allow_zero: bool = False

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError(f"tau must be a slot number >= 1, got {self.tau!r}")
        if not np.isfinite(self.h_mw):
            raise ValueError("h_mw must be finite")
        if self.h_mw == 0 and not self.allow_zero:
            raise ValueError("h_mw must be nonzero")
        for name in ("eps_min", "eps_max"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def direction(self) -> str:
        return SELL if self.h_mw < 0 else BUY


@dataclass(frozen=True)
class FlexOutcome:
    feasible: bool
    schedule: Schedule | None
    flex_cost_eur: float


@dataclass(frozen=True)
class FlexTransaction:
    tau: int
    h_mw: float
    direction: str
    price_b: float
    price_s: float
    spread: float
    flex_cost_eur: float
    gross_eur: float
    profit_eur: float
    feasible: bool
    status: str
    schedule: Schedule | None = field(default=None, repr=False, compare=False)

    @property
    def profitable(self) -> bool:
        return self.status == FEASIBLE and self.profit_eur > 0

    def as_row(self) -> dict:
        return {
            "tau": self.tau,
            "pi_b": self.price_b,
            "pi_s": self.price_s,
            "spread": self.spread,
            "h": self.h_mw,
            "gross": self.gross_eur,
            "flex_cost": self.flex_cost_eur,
            "profit": self.profit_eur,
            "status": self.status,
        }


def build_flex_program(cfg: PlantConfig, dayahead, base: Schedule, req: FlexRequest,
                       sell_prices=None) -> MixedIntegerProgram:
    """Baseline program plus the perturbation, history and band rows."""
    n = cfg.n_slots
    if req.tau > n:
        raise ValueError(f"tau={req.tau} outside horizon of {n} slots")
    if base.n_slots != n:
        raise ValueError(f"baseline has {base.n_slots} slots, plant has {n}")
    t0 = req.tau - 1
    target = base.buy_mw[t0] + req.h_mw
    if target < -1e-9:
        raise FlexRequestError(
            f"perturbation drives purchase negative at slot {req.tau} "
            f"({base.buy_mw[t0]:.3f} MW planned, h={req.h_mw:g} MW)")
    if target > cfg.grid.p_buy_max_mw + 1e-9:
        raise FlexRequestError(
            f"perturbation exceeds purchase cap at slot {req.tau} "
            f"({target:.3f} MW > {cfg.grid.p_buy_max_mw:g} MW)")
    b, lay = build_baseline_builder(cfg, dayahead, sell_prices)
    for t in range(t0):
        b.add_row([lay.buy(t)], [1.0], EQ, float(base.buy_mw[t]), f"hist_buy_{t + 1}")
    b.add_row([lay.buy(t0)], [1.0], EQ, float(max(target, 0.0)), f"perturb_{req.tau}")
    total = float(base.buy_mw.sum())
    every = [int(lay.buy(t)) for t in range(n)]
    ones = [1.0] * n
    b.add_row(every, ones, GE, (1.0 - req.eps_min) * total, "band_low")
    b.add_row(every, ones, LE, (1.0 + req.eps_max) * total, "band_high")
    for k in range(len(cfg.machines)):
        for t in range(t0):
            v = float(base.machine_on[k, t])
            b.set_bounds(int(lay.on(k, t)), v, v)
        if req.equal_run_hours:
            b.add_row([int(lay.on(k, t)) for t in range(n)], ones, EQ,
                      float(base.machine_on[k].sum()), f"run_hours_{k}")
    return MixedIntegerProgram(b.build(), tuple(lay.binaries()))


def flexibility_cost(cfg: PlantConfig, dayahead, base: Schedule, req: FlexRequest, *,
                     gap_tol=DEFAULT_GAP_TOL, node_limit=DEFAULT_NODE_LIMIT, backend="internal",
                     sell_prices=None, time_limit=None) -> FlexOutcome:
    """Re-optimise under ``req`` and return the plan and its extra cost.

    The extra cost is measured against ``base.cost_eur``.  An infeasible
    program is reported through ``FlexOutcome.feasible``.
    """
    mip = build_flex_program(cfg, dayahead, base, req, sell_prices)
    sol = solve_mip(mip, gap_tol=gap_tol, node_limit=node_limit, backend=backend, time_limit=time_limit)
    if sol.status == INFEASIBLE:
        return FlexOutcome(False, None, float("nan"))
    if sol.status != OPTIMAL:
        raise SearchLimitReached(sol, sol.lower_bound)
    lay = VariableLayout(cfg.n_slots, len(cfg.machines), len(cfg.silos))
    x = sol.x.copy()
    bins = list(mip.binary_vars)
    x[bins] = np.round(x[bins])
    cost = mip.lp.value(x)
    sched = decode(cfg, lay, x, cost, tau=req.tau, h_mw=req.h_mw, nodes=sol.nodes_explored)
    return FlexOutcome(True, sched, cost - base.cost_eur)


def evaluate_transaction(flex_cost_eur: float, h_mw: float, dt: float, price_b: float,
                         price_s: float | None, tau: int = 0, schedule=None) -> FlexTransaction:
    """Price a feasible perturbation against the balancing market.

    Selling (``h < 0``) earns the up-spread ``price_s - price_b`` on the shed
    energy; buying earns the down-spread ``price_b - price_s`` on the extra
    energy.  A missing ``price_s`` means the market did not trade that slot.
    """
    direction = SELL if h_mw < 0 else BUY
    if not np.isfinite(price_b):
        raise ValueError("day-ahead price must be finite")
    if price_s is None or not np.isfinite(price_s):
        return FlexTransaction(tau, h_mw, direction, price_b, float("nan"), float("nan"), flex_cost_eur,
                               float("nan"), float("nan"), True, NOT_AVAILABLE, schedule)
    spread = price_s - price_b if direction == SELL else price_b - price_s
    gross = abs(h_mw) * dt * spread
    return FlexTransaction(tau, h_mw, direction, price_b, price_s, spread, flex_cost_eur, gross,
                           gross - flex_cost_eur, True, FEASIBLE, schedule)


def _infeasible(tau, h_mw, price_b, price_s) -> FlexTransaction:
    nan = float("nan")
    direction = SELL if h_mw < 0 else BUY
    ps = nan if price_s is None else float(price_s)
    return FlexTransaction(tau, h_mw, direction, price_b, ps, nan, nan, nan, nan, False, INFEASIBLE)


Evaluator = Callable[[FlexRequest, Schedule], FlexOutcome]


def milp_evaluator(cfg: PlantConfig, dayahead, **solve_kw) -> Evaluator:
    """Evaluator that prices each request by solving the flexibility MILP."""

    def evaluate(req: FlexRequest, base: Schedule) -> FlexOutcome:
        return flexibility_cost(cfg, dayahead, base, req, **solve_kw)

    return evaluate


def _signed_h(direction: str, h_magnitude: float) -> float:
    if direction not in (SELL, BUY):
        raise ValueError(f"direction must be {SELL!r} or {BUY!r}, got {direction!r}")
    if not h_magnitude > 0:
        raise ValueError("h magnitude must be positive")
    return -abs(h_magnitude) if direction == SELL else abs(h_magnitude)


def sweep_day(cfg: PlantConfig, dayahead, tertiary_up, tertiary_down, base: Schedule, direction: str,
              h_magnitude: float, *, eps_min=DEFAULT_EPS, eps_max=DEFAULT_EPS, equal_run_hours=False,
              n_flex_slots=FLEX_SLOTS, first_tau=1, evaluator: Evaluator | None = None,
              **solve_kw) -> list[FlexTransaction]:
    """One transaction per slot ``first_tau..n_flex_slots``, in slot order.

    ``tertiary_up`` / ``tertiary_down`` hold NaN where the market had no
    activity.  Those slots come back as not-available whatever the program
    says; their flexibility cost is still computed and reported when the
    program is feasible.
    """
    h = _signed_h(direction, h_magnitude)
    n_flex = min(n_flex_slots, cfg.n_slots)
    if evaluator is None:
        evaluator = milp_evaluator(cfg, dayahead, **solve_kw)
    pb = np.asarray(dayahead, dtype=float)
    ps_all = np.asarray(tertiary_up if direction == SELL else tertiary_down, dtype=float)
    out = []
    for tau in range(first_tau, n_flex + 1):
        req = FlexRequest(tau, h, eps_min, eps_max, equal_run_hours)
        price_b, price_s = float(pb[tau - 1]), float(ps_all[tau - 1])
        try:
            res = evaluator(req, base)
        except FlexRequestError as exc:
            logger.debug("slot %d: %s", tau, exc)
            res = FlexOutcome(False, None, float("nan"))
        if not np.isfinite(price_s):
            # no market at this slot; the cost is still reported when known
            out.append(replace(_infeasible(tau, h, price_b, price_s), flex_cost_eur=res.flex_cost_eur,
                               feasible=res.feasible, status=NOT_AVAILABLE))
        elif not res.feasible:
            out.append(_infeasible(tau, h, price_b, price_s))
        else:
            out.append(evaluate_transaction(res.flex_cost_eur, h, cfg.dt, price_b, price_s, tau, res.schedule))
    return out


def best_transaction(transactions) -> FlexTransaction | None:
    """Highest strictly positive profit; the earliest slot wins a tie."""
    best = None
    for tr in transactions:
        if tr.profitable and (best is None or tr.profit_eur > best.profit_eur):
            best = tr
    return best


def greedy_select(cfg: PlantConfig, dayahead, tertiary_up, tertiary_down, base: Schedule, direction: str,
                  h_magnitude: float, *, n_flex_slots=FLEX_SLOTS, evaluator: Evaluator | None = None,
                  sweeps: list | None = None, **kw) -> list[FlexTransaction]:
    """Accept the best trade, adopt its plan as baseline, repeat on later slots.

    Each accepted transaction carries its flexible schedule.  When ``sweeps``
    is a list, every intermediate sweep is appended to it.
    """
    accepted: list[FlexTransaction] = []
    first = 1
    n_flex = min(n_flex_slots, cfg.n_slots)
    while first <= n_flex:
        rows = sweep_day(cfg, dayahead, tertiary_up, tertiary_down, base, direction, h_magnitude,
                         n_flex_slots=n_flex, first_tau=first, evaluator=evaluator, **kw)
        if sweeps is not None:
            sweeps.append(rows)
        tr = best_transaction(rows)
        if tr is None:
            break
        accepted.append(tr)
        if tr.schedule is not None:
            base = tr.schedule
        first = tr.tau + 1
    return accepted
