"""Plant, horizon and schedule types, plus the plain-Python validators.

Nothing here optimises.  Series are stored as read-only float arrays so the
objects can be shared between workers.  Slot indices in violation reports are
1-based to match how operators talk about the hours of a day.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

TOL = 1e-6


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class FeasibilityWarning(UserWarning):
    """The configuration is valid but looks unable to meet demand."""


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    slot: int | None = None

    def __str__(self):
        where = f" at slot {self.slot}" if self.slot is not None else ""
        return f"{self.field}{where}: {self.message}"


@dataclass(frozen=True)
class Horizon:
    n_slots: int
    slot_hours: float = 1.0

    def __post_init__(self):
        if int(self.n_slots) != self.n_slots or self.n_slots < 1:
            raise ValueError(f"n_slots must be a positive integer, got {self.n_slots}")
        if not self.slot_hours > 0:
            raise ValueError(f"slot_hours must be positive, got {self.slot_hours}")


@dataclass(frozen=True)
class Machine:
    """A processing machine that is either fully on or off in each slot.

    ``production_tph`` is a constant or one value per slot.
    """

    id: str
    power_mw: float
    production_tph: float | Sequence[float]
    min_on_slots: int = 0
    min_off_slots: int = 0

    def __post_init__(self):
        if not np.isscalar(self.production_tph):
            object.__setattr__(self, "production_tph", _frozen_array(self.production_tph))

    def production(self, n_slots: int) -> np.ndarray:
        p = np.asarray(self.production_tph, dtype=float)
        if p.ndim == 0:
            return np.full(n_slots, float(p))
        if len(p) != n_slots:
            raise ValueError(f"machine {self.id}: {len(p)} production values for {n_slots} slots")
        return p.copy()


@dataclass(frozen=True)
class MachineHistory:
    """State of a machine in the slot right before the planning window.

    ``run_slots`` counts how many consecutive slots it has already spent in
    that state, which tells how much of a minimum on/off time is still owed.
    Without a history a machine is taken as off with its min-off time served.
    """

    on: bool
    run_slots: int


@dataclass(frozen=True)
class Silo:
    id: str
    capacity_max_t: float
    capacity_min_t: float
    initial_t: float
    storage_cost: float = 0.0


@dataclass(frozen=True)
class Battery:
    capacity_mwh: float = 0.0
    dod: float = 0.8
    soc0_mwh: float = 0.0
    p_charge_max_mw: float = 0.0
    p_discharge_max_mw: float = 0.0
    wear_cost: float = 0.0
    efficiency: float = 1.0

    @classmethod
    def sized(cls, capacity_mwh: float, dod=0.8, c_rate=1.0, wear_cost=1.0) -> "Battery":
        """Battery starting at its minimum charge with symmetric power caps."""
        return cls(
            capacity_mwh=capacity_mwh,
            dod=dod,
            soc0_mwh=capacity_mwh * (1.0 - dod),
            p_charge_max_mw=c_rate * capacity_mwh,
            p_discharge_max_mw=c_rate * capacity_mwh,
            wear_cost=wear_cost,
        )

    @property
    def soc_min(self) -> float:
        return self.capacity_mwh * (1.0 - self.dod)

    @property
    def soc_max(self) -> float:
        return self.capacity_mwh * self.dod

    @property
    def present(self) -> bool:
        return self.capacity_mwh > 0


@dataclass(frozen=True)
class GridContract:
    p_buy_max_mw: float


@dataclass(frozen=True)
class PlantConfig:
    horizon: Horizon
    machines: tuple[Machine, ...]
    silos: tuple[Silo, ...]
    battery: Battery
    grid: GridContract
    pv_power_mw: np.ndarray
    demand_tph: np.ndarray
    history: tuple[MachineHistory | None, ...] | None = None
    # grid export limited to on-site PV (spill only), see baseline notes
    export_limited_to_pv: bool = True

    def __post_init__(self):
        n = self.horizon.n_slots
        object.__setattr__(self, "machines", tuple(self.machines))
        object.__setattr__(self, "silos", tuple(self.silos))
        for name in ("pv_power_mw", "demand_tph"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 0:
                v = np.full(n, float(v))
            object.__setattr__(self, name, _frozen_array(v))
        if self.history is not None:
            object.__setattr__(self, "history", tuple(self.history))

    @property
    def n_slots(self) -> int:
        return self.horizon.n_slots

    @property
    def dt(self) -> float:
        return self.horizon.slot_hours

    def production_matrix(self) -> np.ndarray:
        """(machines, slots) array of production rates in t/h."""
        n = self.n_slots
        if not self.machines:
            return np.zeros((0, n))
        return np.vstack([m.production(n) for m in self.machines])

    def machine_power(self) -> np.ndarray:
        return np.array([m.power_mw for m in self.machines], dtype=float)

    def with_changes(self, **kw) -> "PlantConfig":
        return replace(self, **kw)

    def window(self, start: int, length: int, **overrides) -> "PlantConfig":
        """Sub-horizon ``[start, start+length)`` (0-based) of this plant."""
        stop = start + length
        if start < 0 or stop > self.n_slots:
            raise ValueError(f"window [{start}, {stop}) outside horizon of {self.n_slots} slots")
        machines = []
        for m in self.machines:
            p = np.asarray(m.production_tph)
            machines.append(m if p.ndim == 0 else replace(m, production_tph=p[start:stop]))
        kw = dict(
            horizon=Horizon(length, self.dt),
            machines=tuple(machines),
            pv_power_mw=self.pv_power_mw[start:stop],
            demand_tph=self.demand_tph[start:stop],
        )
        kw.update(overrides)
        return replace(self, **kw)


@dataclass(frozen=True)
class Schedule:
    buy_mw: np.ndarray
    sell_mw: np.ndarray
    charge_mw: np.ndarray
    discharge_mw: np.ndarray
    machine_on: np.ndarray
    silo_level_t: np.ndarray
    cost_eur: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("buy_mw", "sell_mw", "charge_mw", "discharge_mw", "silo_level_t"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        on = np.array(self.machine_on, dtype=np.int8)
        if on.ndim == 1:
            on = on.reshape(1, -1)
        on.setflags(write=False)
        object.__setattr__(self, "machine_on", on)
        lv = self.silo_level_t
        if lv.ndim == 1:
            lv = lv.reshape(1, -1)
            lv.setflags(write=False)
            object.__setattr__(self, "silo_level_t", lv)

    @property
    def n_slots(self) -> int:
        return len(self.buy_mw)

    def soc(self, battery: Battery, dt: float) -> np.ndarray:
        """State of charge at the end of each slot (MWh)."""
        flow = (battery.efficiency * self.charge_mw - self.discharge_mw) * dt
        return battery.soc0_mwh + np.cumsum(flow)

    def slice(self, start: int, stop: int) -> "Schedule":
        return Schedule(
            buy_mw=self.buy_mw[start:stop],
            sell_mw=self.sell_mw[start:stop],
            charge_mw=self.charge_mw[start:stop],
            discharge_mw=self.discharge_mw[start:stop],
            machine_on=self.machine_on[:, start:stop],
            silo_level_t=self.silo_level_t[:, start:stop],
            cost_eur=float("nan"),
        )


def validate_config(cfg: PlantConfig) -> list[Violation]:
    """Return every broken invariant of ``cfg``; an empty list means valid.

    A plant whose combined production cannot cover the average demand emits a
    FeasibilityWarning instead of a violation.
    """
    out: list[Violation] = []
    n = cfg.n_slots
    for name in ("pv_power_mw", "demand_tph"):
        v = getattr(cfg, name)
        if len(v) != n:
            out.append(Violation(name, f"length {len(v)} differs from n_slots={n}"))
        elif np.any(v < 0):
            out.append(Violation(name, "negative values"))
        elif not np.all(np.isfinite(v)):
            out.append(Violation(name, "non-finite values"))
    for m in cfg.machines:
        f = f"machines[{m.id}]"
        if m.power_mw < 0:
            out.append(Violation(f + ".power_mw", "must be >= 0"))
        if np.any(np.asarray(m.production_tph) < 0):
            out.append(Violation(f + ".production_tph", "must be >= 0"))
        p = np.asarray(m.production_tph)
        if p.ndim and len(p) != n:
            out.append(Violation(f + ".production_tph", f"length {len(p)} differs from n_slots={n}"))
        for attr in ("min_on_slots", "min_off_slots"):
            v = getattr(m, attr)
            if v < 0 or int(v) != v:
                out.append(Violation(f"{f}.{attr}", "must be a nonnegative integer"))
            elif v > n:
                out.append(Violation(f"{f}.{attr}", f"{v} exceeds n_slots={n}"))
    for s in cfg.silos:
        f = f"silos[{s.id}]"
        if s.capacity_min_t < 0:
            out.append(Violation(f + ".capacity_min_t", "must be >= 0"))
        if s.initial_t < s.capacity_min_t:
            out.append(Violation(f + ".initial_t", "initial below minimum"))
        if s.initial_t > s.capacity_max_t:
            out.append(Violation(f + ".initial_t", "initial above maximum"))
        if s.capacity_min_t > s.capacity_max_t:
            out.append(Violation(f + ".capacity_min_t", "minimum above maximum"))
    b = cfg.battery
    for attr in ("capacity_mwh", "soc0_mwh", "p_charge_max_mw", "p_discharge_max_mw", "wear_cost"):
        if getattr(b, attr) < 0:
            out.append(Violation(f"battery.{attr}", "must be >= 0"))
    if not 0.0 <= b.dod <= 1.0:
        out.append(Violation("battery.dod", "must lie in [0, 1]"))
    if not 0.0 < b.efficiency <= 1.0:
        out.append(Violation("battery.efficiency", "must lie in (0, 1]"))
    if b.capacity_mwh > 0:
        if b.soc0_mwh < b.soc_min - TOL:
            out.append(Violation("battery.soc0_mwh", f"below minimum charge {b.soc_min:g}"))
        if b.soc0_mwh > b.soc_max + TOL:
            out.append(Violation("battery.soc0_mwh", f"above maximum charge {b.soc_max:g}"))
    elif b.capacity_mwh == 0:
        for attr in ("soc0_mwh", "p_charge_max_mw", "p_discharge_max_mw"):
            if getattr(b, attr) != 0:
                out.append(Violation(f"battery.{attr}", "must be 0 without battery capacity"))
    if cfg.grid.p_buy_max_mw < 0:
        out.append(Violation("grid.p_buy_max_mw", "must be >= 0"))
    if cfg.history is not None and len(cfg.history) != len(cfg.machines):
        out.append(Violation("history", "one entry per machine required"))
    if not out and cfg.machines and len(cfg.demand_tph):
        cap = cfg.production_matrix().sum(axis=0).max()
        if cap < cfg.demand_tph.mean():
            warnings.warn(
                f"max production rate {cap:g} t/h below average demand {cfg.demand_tph.mean():g} t/h",
                FeasibilityWarning,
                stacklevel=2,
            )
    return out


def _check_shape(name, arr, shape):
    if np.shape(arr) != shape:
        raise ValueError(f"schedule.{name} has shape {np.shape(arr)}, expected {shape}")


def min_up_down_rows(y: np.ndarray, m_on: int, m_off: int, history: MachineHistory | None):
    """Yield ``(kind, t, lhs, rhs, slot)`` for the minimum on/off inequalities.

    ``t`` is the transition index (slot ``t`` to ``t+1``, 1-based with slot 0
    being the state before the window) and ``y`` the 0/1 trajectory.  ``slot``
    is where a violation shows: the first off slot of a too-short on-run, or
    the first on slot of a too-short off-run.  The program builder emits the
    same rows.
    """
    n = len(y)
    prior = 1.0 if (history is not None and history.on) else 0.0
    ext = np.concatenate([[prior], np.asarray(y, dtype=float)])
    if m_on > 0:
        for t in range(0, n - m_on + 1):
            win = ext[t + 1 : t + 1 + m_on]
            lhs = (ext[t + 1] - ext[t]) * m_on
            bad = np.flatnonzero(win < 0.5)
            yield "min_on", t, lhs, win.sum(), t + 1 + (int(bad[0]) if len(bad) else 0)
    if m_off > 0:
        for t in range(0, n - m_off + 1):
            win = ext[t + 1 : t + 1 + m_off]
            rhs = (1 + ext[t + 1] - ext[t]) * m_off
            bad = np.flatnonzero(win > 0.5)
            yield "min_off", t, win.sum(), rhs, t + 1 + (int(bad[0]) if len(bad) else 0)


def carried_obligation(m: Machine, history: MachineHistory | None) -> tuple[int, int]:
    """Slots at the window start that are forced (on, off) by an unfinished run."""
    if history is None:
        return 0, 0
    if history.on:
        return max(m.min_on_slots - history.run_slots, 0), 0
    return 0, max(m.min_off_slots - history.run_slots, 0)


def validate_schedule(cfg: PlantConfig, s: Schedule, tol: float = TOL) -> list[Violation]:
    """Check ``s`` against every balance and bound of the plant model.

    Raises ValueError when array shapes do not match the configuration.
    """
    n = cfg.n_slots
    K, S = len(cfg.machines), len(cfg.silos)
    for name in ("buy_mw", "sell_mw", "charge_mw", "discharge_mw"):
        _check_shape(name, getattr(s, name), (n,))
    _check_shape("machine_on", s.machine_on, (K, n))
    _check_shape("silo_level_t", s.silo_level_t, (S, n))
    dt = cfg.dt
    out: list[Violation] = []

    def each(field_name, mask, msg):
        for t in np.flatnonzero(mask):
            out.append(Violation(field_name, msg, int(t) + 1))

    for name in ("buy_mw", "sell_mw", "charge_mw", "discharge_mw"):
        each(name, getattr(s, name) < -tol, "negative")
    each("silo_level_t", (s.silo_level_t < -tol).any(axis=0), "negative")
    if not np.isin(s.machine_on, (0, 1)).all():
        out.append(Violation("machine_on", "values outside {0, 1}"))

    Y = s.machine_on.astype(float)
    prod = (cfg.production_matrix() * Y).sum(axis=0)
    total = s.silo_level_t.sum(axis=0)
    prev = np.concatenate([[sum(si.initial_t for si in cfg.silos)], total[:-1]])
    resid = total - prev - (prod - cfg.demand_tph) * dt
    each("mass_balance", np.abs(resid) > tol, "silo change differs from production minus demand")

    load = cfg.machine_power() @ Y if K else np.zeros(n)
    pb = s.buy_mw + s.discharge_mw + cfg.pv_power_mw - s.sell_mw - s.charge_mw - load
    each("power_balance", np.abs(pb) > tol, "supply differs from consumption")

    for i, si in enumerate(cfg.silos):
        lv = s.silo_level_t[i]
        each(f"silos[{si.id}]", lv < si.capacity_min_t - tol, f"below minimum {si.capacity_min_t:g} t")
        each(f"silos[{si.id}]", lv > si.capacity_max_t + tol, f"above maximum {si.capacity_max_t:g} t")
    if S:
        each("demand_cover", total < cfg.demand_tph * dt - tol, "stored mass below slot demand")

    hist = cfg.history or (None,) * K
    for k, m in enumerate(cfg.machines):
        f = f"machines[{m.id}]"
        for kind, _, lhs, rhs, slot in min_up_down_rows(Y[k], m.min_on_slots, m.min_off_slots, hist[k]):
            if lhs > rhs + tol:
                out.append(Violation(f"{f}.{kind}", f"run shorter than the minimum ({lhs:g} > {rhs:g})", slot))
        on_req, off_req = carried_obligation(m, hist[k])
        each(f"{f}.carried_min_on", (Y[k][:on_req] < 1), "carried minimum on-time not served")
        each(f"{f}.carried_min_off", (Y[k][:off_req] > 0), "carried minimum off-time not served")

    b = cfg.battery
    if b.present or np.any(s.charge_mw > tol) or np.any(s.discharge_mw > tol):
        cum = np.cumsum((b.efficiency * s.charge_mw - s.discharge_mw) * dt)
        each("soc", cum > b.soc_max - b.soc0_mwh + tol, f"state of charge above {b.soc_max:g} MWh")
        each("soc", cum < b.soc_min - b.soc0_mwh - tol, f"state of charge below {b.soc_min:g} MWh")
    each("charge_mw", s.charge_mw > b.p_charge_max_mw + tol, f"above cap {b.p_charge_max_mw:g} MW")
    each("discharge_mw", s.discharge_mw > b.p_discharge_max_mw + tol, f"above cap {b.p_discharge_max_mw:g} MW")
    each("buy_mw", s.buy_mw > cfg.grid.p_buy_max_mw + tol, f"above purchase cap {cfg.grid.p_buy_max_mw:g} MW")
    if cfg.export_limited_to_pv:
        each("sell_mw", s.sell_mw > cfg.pv_power_mw + tol, "export above on-site PV")
    return out


def schedule_cost(cfg: PlantConfig, dayahead, s: Schedule, sell_prices=None) -> float:
    """Production cost of ``s`` under day-ahead prices (energy, wear, storage)."""
    dt = cfg.dt
    price = np.asarray(dayahead, dtype=float)
    cost = float(np.sum(s.buy_mw * price) * dt)
    cost += float(np.sum(s.charge_mw + s.discharge_mw) * cfg.battery.wear_cost * dt)
    for i, si in enumerate(cfg.silos):
        cost += float(np.sum(s.silo_level_t[i] * _storage_cost(si, cfg.n_slots)) * dt)
    if sell_prices is not None:
        cost -= float(np.sum(s.sell_mw * np.asarray(sell_prices, dtype=float)) * dt)
    return cost


def _storage_cost(silo: Silo, n: int) -> np.ndarray:
    c = np.asarray(silo.storage_cost, dtype=float)
    return np.full(n, float(c)) if c.ndim == 0 else c
