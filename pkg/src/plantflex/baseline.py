"""Compile a plant and day-ahead prices into the baseline production MILP."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .lp import EQ, GE, LE, LPBuilder
from .mip import (DEFAULT_GAP_TOL, DEFAULT_NODE_LIMIT, INFEASIBLE, OPTIMAL, MixedIntegerProgram,
                  SearchLimitReached, solve_mip)
from .model import PlantConfig, Schedule, _storage_cost, carried_obligation

logger = logging.getLogger(__name__)

FAMILIES = ("buy", "sell", "charge", "discharge")


class InfeasiblePlanError(RuntimeError):
    """No production plan satisfies the plant constraints."""

    def __init__(self, reason: str):
        super().__init__(f"no feasible production plan: {reason}")
        self.reason = reason


@dataclass(frozen=True)
class VariableLayout:
    """Flat column index of every decision variable.

    Columns are grouped by family (buy, sell, charge, discharge, then one
    block of slots per machine and per silo); inside a block they run over
    slots.
    """

    n_slots: int
    n_machines: int
    n_silos: int

    @property
    def n_cols(self) -> int:
        return self.n_slots * (4 + self.n_machines + self.n_silos)

    def _block(self, b: int, t):
        return b * self.n_slots + np.asarray(t)

    def buy(self, t):
        return self._block(0, t)

    def sell(self, t):
        return self._block(1, t)

    def charge(self, t):
        return self._block(2, t)

    def discharge(self, t):
        return self._block(3, t)

    def on(self, k, t):
        if not 0 <= k < self.n_machines:
            raise IndexError(k)
        return self._block(4 + k, t)

    def level(self, i, t):
        if not 0 <= i < self.n_silos:
            raise IndexError(i)
        return self._block(4 + self.n_machines + i, t)

    def binaries(self) -> np.ndarray:
        start = 4 * self.n_slots
        return np.arange(start, start + self.n_machines * self.n_slots)

    def locate(self, col: int) -> tuple[str, int | None, int]:
        """Inverse map: ``(family, machine_or_silo, slot)`` of a column."""
        if not 0 <= col < self.n_cols:
            raise IndexError(col)
        b, t = divmod(int(col), self.n_slots)
        if b < 4:
            return FAMILIES[b], None, t
        if b < 4 + self.n_machines:
            return "on", b - 4, t
        return "level", b - 4 - self.n_machines, t

    def names(self) -> list[str]:
        out = []
        for fam in FAMILIES:
            out += [f"{fam}_{t + 1}" for t in range(self.n_slots)]
        for k in range(self.n_machines):
            out += [f"on_{k}_{t + 1}" for t in range(self.n_slots)]
        for i in range(self.n_silos):
            out += [f"level_{i}_{t + 1}" for t in range(self.n_slots)]
        return out


def _prices(cfg: PlantConfig, values, name) -> np.ndarray:
    p = np.asarray(values, dtype=float)
    if p.shape != (cfg.n_slots,):
        raise ValueError(f"{name} has {p.size} values for {cfg.n_slots} slots")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} contains non-finite values")
    return p


def build_baseline_builder(cfg: PlantConfig, dayahead, sell_prices=None):
    """Same as :func:`build_baseline_program` but returns the open LPBuilder."""
    n, dt = cfg.n_slots, cfg.dt
    K, S = len(cfg.machines), len(cfg.silos)
    price = _prices(cfg, dayahead, "dayahead")
    if len(cfg.pv_power_mw) != n or len(cfg.demand_tph) != n:
        raise ValueError("pv_power_mw and demand_tph must have one value per slot")
    if cfg.history is not None and len(cfg.history) != K:
        raise ValueError("history needs one entry per machine")
    lay = VariableLayout(n, K, S)
    b = LPBuilder()
    names = lay.names()
    bat = cfg.battery
    pv = cfg.pv_power_mw
    sell_cost = -_prices(cfg, sell_prices, "sell prices") * dt if sell_prices is not None else np.zeros(n)
    for t in range(n):
        b.add_var(0.0, cfg.grid.p_buy_max_mw, price[t] * dt, names[b.n_vars])
    for t in range(n):
        cap = pv[t] if cfg.export_limited_to_pv else np.inf
        b.add_var(0.0, cap, sell_cost[t], names[b.n_vars])
    for cap in (bat.p_charge_max_mw, bat.p_discharge_max_mw):
        hi = cap if bat.present else 0.0
        for t in range(n):
            b.add_var(0.0, hi, bat.wear_cost * dt, names[b.n_vars])
    for k in range(K):
        for t in range(n):
            b.add_var(0.0, 1.0, 0.0, names[b.n_vars])
    demand_t = cfg.demand_tph * dt
    for i, si in enumerate(cfg.silos):
        sc = _storage_cost(si, n)
        for t in range(n):
            lo = si.capacity_min_t
            if S == 1:
                # single silo: demand cover is a plain lower bound
                lo = max(lo, demand_t[t])
            b.add_var(lo, si.capacity_max_t, sc[t] * dt, names[b.n_vars])
    assert b.n_vars == lay.n_cols

    prod = cfg.production_matrix()
    power = cfg.machine_power()
    I0 = sum(si.initial_t for si in cfg.silos)
    for t in range(n):
        cols, vals = [], []
        for i in range(S):
            cols.append(lay.level(i, t))
            vals.append(1.0)
            if t > 0:
                cols.append(lay.level(i, t - 1))
                vals.append(-1.0)
        for k in range(K):
            cols.append(lay.on(k, t))
            vals.append(-prod[k, t] * dt)
        rhs = -demand_t[t] + (I0 if t == 0 else 0.0)
        if S:
            b.add_row(cols, vals, EQ, rhs, f"mass_{t + 1}")
    for t in range(n):
        cols = [lay.buy(t), lay.sell(t), lay.charge(t), lay.discharge(t)]
        vals = [1.0, -1.0, -1.0, 1.0]
        for k in range(K):
            cols.append(lay.on(k, t))
            vals.append(-power[k])
        b.add_row(cols, vals, EQ, -pv[t], f"power_{t + 1}")
    if S > 1:
        for t in range(n):
            b.add_row([lay.level(i, t) for i in range(S)], [1.0] * S, GE, demand_t[t], f"demand_{t + 1}")

    hist = cfg.history or (None,) * K
    for k, m in enumerate(cfg.machines):
        prior = 1.0 if (hist[k] is not None and hist[k].on) else 0.0
        M = int(m.min_on_slots)
        if M > 1:
            for t in range(0, n - M + 1):
                # (Y[t+1] - Y[t]) * M - sum_{j=1..M} Y[t+j] <= 0, slot 0 is the prior state
                cols = [lay.on(k, t)] + [lay.on(k, t + j) for j in range(1, M)]
                vals = [M - 1.0] + [-1.0] * (M - 1)
                rhs = 0.0
                if t == 0:
                    rhs = M * prior
                else:
                    cols.append(lay.on(k, t - 1))
                    vals.append(-float(M))
                b.add_row(cols, vals, LE, rhs, f"minon_{k}_{t}")
        M = int(m.min_off_slots)
        if M > 1:
            for t in range(0, n - M + 1):
                # sum_{j=1..M} Y[t+j] - M * Y[t+1] + M * Y[t] <= M
                cols = [lay.on(k, t)] + [lay.on(k, t + j) for j in range(1, M)]
                vals = [1.0 - M] + [1.0] * (M - 1)
                rhs = float(M)
                if t == 0:
                    rhs -= M * prior
                else:
                    cols.append(lay.on(k, t - 1))
                    vals.append(float(M))
                b.add_row(cols, vals, LE, rhs, f"minoff_{k}_{t}")
        on_req, off_req = carried_obligation(m, hist[k])
        for t in range(min(on_req, n)):
            b.set_bounds(int(lay.on(k, t)), 1.0, 1.0)
        for t in range(min(off_req, n)):
            b.set_bounds(int(lay.on(k, t)), 0.0, 0.0)

    if bat.present:
        hi = bat.soc_max - bat.soc0_mwh
        lo = bat.soc_min - bat.soc0_mwh
        for j in range(n):
            cols = [lay.charge(t) for t in range(j + 1)] + [lay.discharge(t) for t in range(j + 1)]
            vals = [bat.efficiency * dt] * (j + 1) + [-dt] * (j + 1)
            b.add_row(cols, vals, LE, hi, f"socmax_{j + 1}")
            b.add_row(cols, vals, GE, lo, f"socmin_{j + 1}")
    return b, lay


def build_baseline_program(cfg: PlantConfig, dayahead, sell_prices=None) -> tuple[MixedIntegerProgram, VariableLayout]:
    """Baseline MILP: minimum production cost over the horizon.

    ``sell_prices`` switches on export revenue; by default exported power
    earns nothing.
    """
    b, lay = build_baseline_builder(cfg, dayahead, sell_prices)
    lp = b.build()
    return MixedIntegerProgram(lp, tuple(lay.binaries())), lay


def decode(cfg: PlantConfig, lay: VariableLayout, x: np.ndarray, cost: float, **meta) -> Schedule:
    n = lay.n_slots
    x = np.where(np.abs(x) < 1e-9, 0.0, x)
    t = np.arange(n)
    on = np.zeros((lay.n_machines, n), dtype=np.int8)
    for k in range(lay.n_machines):
        on[k] = np.round(x[lay.on(k, t)]).astype(np.int8)
    lv = np.vstack([x[lay.level(i, t)] for i in range(lay.n_silos)]) if lay.n_silos else np.zeros((0, n))
    return Schedule(
        buy_mw=np.maximum(x[lay.buy(t)], 0.0),
        sell_mw=np.maximum(x[lay.sell(t)], 0.0),
        charge_mw=np.maximum(x[lay.charge(t)], 0.0),
        discharge_mw=np.maximum(x[lay.discharge(t)], 0.0),
        machine_on=on,
        silo_level_t=lv,
        cost_eur=float(cost),
        meta=meta,
    )


def encode(lay: VariableLayout, s: Schedule) -> np.ndarray:
    """Flat column vector of a schedule (inverse of :func:`decode`)."""
    x = np.zeros(lay.n_cols)
    t = np.arange(lay.n_slots)
    x[lay.buy(t)] = s.buy_mw
    x[lay.sell(t)] = s.sell_mw
    x[lay.charge(t)] = s.charge_mw
    x[lay.discharge(t)] = s.discharge_mw
    for k in range(lay.n_machines):
        x[lay.on(k, t)] = s.machine_on[k]
    for i in range(lay.n_silos):
        x[lay.level(i, t)] = s.silo_level_t[i]
    return x


def diagnose_infeasibility(cfg: PlantConfig) -> str:
    """First aggregate condition that rules out every plan, if one is obvious."""
    dt = cfg.dt
    n = cfg.n_slots
    prod = cfg.production_matrix().sum(axis=0) if cfg.machines else np.zeros(n)
    if cfg.silos:
        I0 = sum(s.initial_t for s in cfg.silos)
        floor = sum(s.capacity_min_t for s in cfg.silos)
        ceil = sum(s.capacity_max_t for s in cfg.silos)
        need = np.cumsum(cfg.demand_tph * dt) - np.cumsum(prod * dt)
        # with every machine on, stock must stay above the floor
        short = np.flatnonzero(I0 - need < floor - 1e-9)
        if len(short):
            t = int(short[0]) + 1
            return f"demand exceeds capacity by slot {t} even with all machines on"
        low = np.flatnonzero(cfg.demand_tph * dt > ceil + 1e-9)
        if len(low):
            return f"slot {int(low[0]) + 1} demand exceeds total silo capacity"
    if cfg.machines:
        load = cfg.machine_power().sum()
        supply = cfg.grid.p_buy_max_mw + cfg.pv_power_mw + cfg.battery.p_discharge_max_mw
        if np.all(supply < cfg.machine_power().min() - 1e-9):
            return f"purchase cap {cfg.grid.p_buy_max_mw:g} MW cannot power any machine (plant load {load:g} MW)"
    return "constraints are jointly infeasible (minimum run times, silo bounds and purchase cap)"


def solve_baseline(cfg: PlantConfig, dayahead, *, gap_tol=DEFAULT_GAP_TOL, node_limit=DEFAULT_NODE_LIMIT,
                   backend="internal", sell_prices=None, time_limit=None) -> Schedule:
    """Cost-minimal schedule; raises InfeasiblePlanError when none exists."""
    mip, lay = build_baseline_program(cfg, dayahead, sell_prices)
    sol = solve_mip(mip, gap_tol=gap_tol, node_limit=node_limit, backend=backend, time_limit=time_limit)
    if sol.status == INFEASIBLE:
        raise InfeasiblePlanError(diagnose_infeasibility(cfg))
    if sol.status != OPTIMAL:
        raise SearchLimitReached(sol, sol.lower_bound)
    x = sol.x.copy()
    x[list(mip.binary_vars)] = np.round(x[list(mip.binary_vars)])
    return decode(cfg, lay, x, mip.lp.value(x), nodes=sol.nodes_explored)
