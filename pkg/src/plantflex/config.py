"""YAML plant descriptions and study manifests.

A plant file looks like::

    horizon: {n_slots: 168, slot_hours: 1}
    machines:
      - {id: raw_mill, power_mw: 6, production_tph: 360, min_on_slots: 6, min_off_slots: 3}
    silos:
      - {id: raw_silo, capacity_max_t: 15000, capacity_min_t: 9000, initial_t: 12000}
    battery: {capacity_mwh: 3, dod: 0.8, c_rate: 1, wear_cost: 1}
    grid: {p_buy_max_mw: 21}
    pv: {capacity_mw: 3, profile_per_mw: synthetic}
    demand_tph: 240

``pv.profile_per_mw`` is ``synthetic``, a list, or ``{csv: path, column:
name}``; ``pv.power_mw`` gives the absolute series instead.  An optional
``study`` block configures the sizing sweep.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .model import Battery, GridContract, Horizon, Machine, MachineHistory, PlantConfig, Silo
from .scenario import CapitalCosts, ConfigurationGrid, synthetic_pv_profile


class ConfigError(ValueError):
    """Invalid plant or manifest file; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _get(d, key, where, default=..., kind=float):
    if not isinstance(d, dict):
        raise ConfigError(where, "expected a mapping")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{where}.{key}" if where else key, "missing")
        return default
    v = d[key]
    try:
        if kind is float and isinstance(v, list):
            return [float(x) for x in v]
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}" if where else key, f"cannot read {v!r} as {kind.__name__}") from None


def _series(v, n, where):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return np.full(n, float(a))
    if a.shape != (n,):
        raise ConfigError(where, f"{a.size} values for {n} slots")
    return a


def _read_column(path: Path, column: str | None, where: str) -> np.ndarray:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise ConfigError(where, f"{path} has no rows")
    col = column or list(rows[0])[-1]
    try:
        return np.array([float(r[col]) for r in rows])
    except (KeyError, TypeError, ValueError):
        raise ConfigError(where, f"{path} column {col!r} missing or not numeric") from None


@dataclass
class PlantSpec:
    """Parsed plant file; :meth:`build` turns it into a PlantConfig.

    The PV capacity and battery size can be overridden, which is how the
    sizing study builds its configurations from one file.
    """

    raw: dict
    base_dir: Path = field(default_factory=Path)

    @property
    def n_slots(self) -> int:
        return _get(_get(self.raw, "horizon", "", kind=dict), "n_slots", "horizon", kind=int)

    @property
    def study(self) -> dict:
        return self.raw.get("study") or {}

    def pv_profile_per_mw(self) -> np.ndarray:
        n = self.n_slots
        pv = self.raw.get("pv") or {}
        prof = pv.get("profile_per_mw", "synthetic")
        spd = int(self.study.get("slots_per_day", 24))
        if prof == "synthetic":
            return synthetic_pv_profile(n, spd)
        if isinstance(prof, dict):
            path = self.base_dir / _get(prof, "csv", "pv.profile_per_mw", kind=str)
            return _series(_read_column(path, prof.get("column"), "pv.profile_per_mw"), n, "pv.profile_per_mw")
        return _series(prof, n, "pv.profile_per_mw")

    def build(self, pv_mw: float | None = None, battery_mwh: float | None = None) -> PlantConfig:
        r = self.raw
        hz = _get(r, "horizon", "", kind=dict)
        n = _get(hz, "n_slots", "horizon", kind=int)
        dt = _get(hz, "slot_hours", "horizon", 1.0)
        machines = []
        for i, m in enumerate(_get(r, "machines", "", [], kind=list)):
            w = f"machines[{i}]"
            prod = m.get("production_tph") if isinstance(m, dict) else None
            machines.append(Machine(
                id=_get(m, "id", w, kind=str),
                power_mw=_get(m, "power_mw", w),
                production_tph=prod if isinstance(prod, list) else _get(m, "production_tph", w),
                min_on_slots=_get(m, "min_on_slots", w, 1, kind=int),
                min_off_slots=_get(m, "min_off_slots", w, 1, kind=int),
            ))
        silos = []
        for i, s in enumerate(_get(r, "silos", "", [], kind=list)):
            w = f"silos[{i}]"
            silos.append(Silo(
                id=_get(s, "id", w, kind=str),
                capacity_max_t=_get(s, "capacity_max_t", w),
                capacity_min_t=_get(s, "capacity_min_t", w, 0.0),
                initial_t=_get(s, "initial_t", w),
                storage_cost=_get(s, "storage_cost", w, 0.0),
            ))
        bd = r.get("battery") or {}
        cap = _get(bd, "capacity_mwh", "battery", 0.0) if battery_mwh is None else float(battery_mwh)
        if "soc0_mwh" in bd or "p_charge_max_mw" in bd:
            battery = Battery(
                capacity_mwh=cap,
                dod=_get(bd, "dod", "battery", 0.8),
                soc0_mwh=_get(bd, "soc0_mwh", "battery", cap * (1 - _get(bd, "dod", "battery", 0.8))),
                p_charge_max_mw=_get(bd, "p_charge_max_mw", "battery", cap),
                p_discharge_max_mw=_get(bd, "p_discharge_max_mw", "battery", cap),
                wear_cost=_get(bd, "wear_cost", "battery", 0.0),
                efficiency=_get(bd, "efficiency", "battery", 1.0),
            )
        else:
            battery = Battery.sized(cap, dod=_get(bd, "dod", "battery", 0.8), c_rate=_get(bd, "c_rate", "battery", 1.0),
                                    wear_cost=_get(bd, "wear_cost", "battery", 1.0))
        grid = GridContract(_get(_get(r, "grid", "", kind=dict), "p_buy_max_mw", "grid"))
        pv = r.get("pv") or {}
        if "power_mw" in pv and pv_mw is None:
            pv_series = _series(pv["power_mw"], n, "pv.power_mw")
        else:
            size = _get(pv, "capacity_mw", "pv", 0.0) if pv_mw is None else float(pv_mw)
            pv_series = size * self.pv_profile_per_mw() if size else np.zeros(n)
        hist = r.get("history")
        history = None
        if hist is not None:
            history = tuple(
                None if h is None else MachineHistory(bool(_get(h, "on", f"history[{i}]", kind=bool)),
                                                      _get(h, "run_slots", f"history[{i}]", kind=int))
                for i, h in enumerate(hist)
            )
        return PlantConfig(
            horizon=Horizon(n, dt),
            machines=tuple(machines),
            silos=tuple(silos),
            battery=battery,
            grid=grid,
            pv_power_mw=pv_series,
            demand_tph=_series(r.get("demand_tph", 0.0), n, "demand_tph"),
            history=history,
            export_limited_to_pv=bool(r.get("export_limited_to_pv", True)),
        )

    def grid(self) -> ConfigurationGrid:
        st = self.study
        return ConfigurationGrid(tuple(st.get("pv_capacities_mw", (1, 2, 3, 4, 5, 6))),
                                 tuple(st.get("battery_capacities_mwh", (1, 2, 3, 4, 5, 6))))

    def capital(self) -> CapitalCosts:
        c = self.study.get("capital") or {}
        return CapitalCosts(**{k: float(v) for k, v in c.items()})


def load_plant_spec(path) -> PlantSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return PlantSpec(raw, path.parent)


def load_plant(path) -> PlantConfig:
    return load_plant_spec(path).build()


def plant_to_dict(cfg: PlantConfig) -> dict:
    """Plain-data form of ``cfg`` with every series spelled out."""

    def num(v):
        a = np.asarray(v, dtype=float)
        return float(a) if a.ndim == 0 else [float(x) for x in a]

    b = cfg.battery
    out = {
        "horizon": {"n_slots": cfg.n_slots, "slot_hours": float(cfg.dt)},
        "machines": [
            {"id": m.id, "power_mw": float(m.power_mw), "production_tph": num(m.production_tph),
             "min_on_slots": int(m.min_on_slots), "min_off_slots": int(m.min_off_slots)}
            for m in cfg.machines
        ],
        "silos": [
            {"id": s.id, "capacity_max_t": float(s.capacity_max_t), "capacity_min_t": float(s.capacity_min_t),
             "initial_t": float(s.initial_t), "storage_cost": num(s.storage_cost)}
            for s in cfg.silos
        ],
        "battery": {"capacity_mwh": b.capacity_mwh, "dod": b.dod, "soc0_mwh": b.soc0_mwh,
                    "p_charge_max_mw": b.p_charge_max_mw, "p_discharge_max_mw": b.p_discharge_max_mw,
                    "wear_cost": b.wear_cost, "efficiency": b.efficiency},
        "grid": {"p_buy_max_mw": float(cfg.grid.p_buy_max_mw)},
        "pv": {"power_mw": num(cfg.pv_power_mw)},
        "demand_tph": num(cfg.demand_tph),
        "export_limited_to_pv": bool(cfg.export_limited_to_pv),
    }
    if cfg.history is not None:
        out["history"] = [None if h is None else {"on": bool(h.on), "run_slots": int(h.run_slots)}
                          for h in cfg.history]
    return out


def dump_plant(cfg: PlantConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(plant_to_dict(cfg), sort_keys=False), encoding="utf-8")
