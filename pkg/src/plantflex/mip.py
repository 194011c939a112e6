"""Branch-and-bound over binary columns, plus the solver backend contract.

The tree search is depth-first: after branching, the child on the side the
fractional value rounds to is solved immediately, warm-started from the
parent's basis with the dual simplex.  When a dive ends (pruned, infeasible
or integral) the search restarts from the open node with the best bound.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, BoundedSimplex, LinearProgram

logger = logging.getLogger(__name__)

NO_INCUMBENT = "no_incumbent"
INT_TOL = 1e-6
DEFAULT_GAP_TOL = 1e-6
DEFAULT_NODE_LIMIT = 1_000_000


class SearchLimitReached(RuntimeError):
    """Node or time limit hit with an incumbent whose gap is still open."""

    def __init__(self, solution: "MipSolution", lower_bound: float):
        super().__init__(
            f"search limit reached after {solution.nodes_explored} nodes; "
            f"incumbent {solution.objective_value:.6f}, bound {lower_bound:.6f}"
        )
        self.solution = solution
        self.lower_bound = lower_bound


@dataclass(frozen=True)
class MixedIntegerProgram:
    lp: LinearProgram
    binary_vars: tuple[int, ...]

    def __post_init__(self):
        idx = np.asarray(sorted(set(int(j) for j in self.binary_vars)), dtype=int)
        object.__setattr__(self, "binary_vars", tuple(int(j) for j in idx))
        if len(idx) and (idx[0] < 0 or idx[-1] >= self.lp.n_vars):
            raise ValueError("binary index out of range")
        if len(idx) and (np.any(self.lp.lower[idx] < 0) or np.any(self.lp.upper[idx] > 1)):
            raise ValueError("binary variables need bounds inside [0, 1]")


@dataclass
class MipSolution:
    status: str
    x: np.ndarray
    objective_value: float
    nodes_explored: int = 0
    lower_bound: float = float("nan")
    incumbent_trace: list = field(default_factory=list, repr=False)


class SolverBackend(Protocol):
    name: str
    capabilities: frozenset

    def solve(self, mip: MixedIntegerProgram, gap_tol: float, node_limit: int,
              time_limit: float | None = None) -> MipSolution: ...


@dataclass
class _Node:
    bound: float
    depth: int
    fixings: dict
    basis: object


class BranchAndBound:
    """The built-in engine; deterministic for identical input."""

    name = "internal"
    capabilities = frozenset({"binary", "warm_start", "deterministic"})

    def solve(self, mip: MixedIntegerProgram, gap_tol: float = DEFAULT_GAP_TOL,
              node_limit: int = DEFAULT_NODE_LIMIT, time_limit: float | None = None) -> MipSolution:
        if gap_tol < 0:
            raise ValueError("gap_tol must be >= 0")
        deadline = None if time_limit is None else time.monotonic() + time_limit
        lp = mip.lp
        bins = np.asarray(mip.binary_vars, dtype=int)
        lo0, hi0 = lp.lower[bins].copy(), lp.upper[bins].copy()
        spx = BoundedSimplex(lp)
        root = spx.solve()
        nodes = 1
        if root.status == INFEASIBLE:
            return MipSolution(INFEASIBLE, root.x, np.nan, nodes)
        if root.status == UNBOUNDED:
            raise ValueError("LP relaxation is unbounded")
        best_x, best_obj = None, np.inf
        trace = []

        def tol():
            return max(gap_tol * abs(best_obj), 1e-6) if np.isfinite(best_obj) else 0.0

        def accept(x, obj):
            nonlocal best_x, best_obj
            if obj < best_obj - 1e-12:
                x = x.copy()
                x[bins] = np.round(x[bins])
                best_x, best_obj = x, obj
                trace.append((nodes, obj))

        if self._fractional(root.x, bins) < 0:
            return MipSolution(OPTIMAL, _rounded(root.x, bins), root.objective_value, nodes,
                               root.objective_value, [(1, root.objective_value)])

        root_basis = spx.get_basis()
        heur = self._rounding(spx, bins, lo0, hi0, root.x)
        if heur is not None:
            accept(*heur)
        spx.set_var_bounds(bins, lo0, hi0)
        spx.set_basis(root_basis)

        counter = itertools.count()
        heap: list = []
        current = _Node(root.objective_value, 0, {}, None)
        current_x = root.x
        lower_bound = root.objective_value
        while True:
            if current is not None:
                if np.isfinite(best_obj):
                    current.fixings = self._reduced_cost_fixings(spx, bins, current, best_obj - tol())
                j = self._fractional(current_x, bins)
                down = dict(current.fixings)
                down[j] = 0
                up = dict(current.fixings)
                up[j] = 1
                v = current_x[bins[j]]
                first, second = (up, down) if v >= 0.5 else (down, up)
                basis = spx.get_basis()
                heapq.heappush(heap, (current.bound, next(counter), _Node(current.bound, current.depth + 1, second, basis)))
                nxt = _Node(current.bound, current.depth + 1, first, None)
            else:
                nxt = None
                while heap:
                    bnd, _, cand = heapq.heappop(heap)
                    if bnd < best_obj - tol():
                        nxt = cand
                        break
                if nxt is None:
                    break
            if nodes >= node_limit or (deadline is not None and time.monotonic() > deadline):
                open_bounds = [h[0] for h in heap] + [nxt.bound]
                lower_bound = min(open_bounds)
                sol = MipSolution(NO_INCUMBENT if best_x is None else OPTIMAL, best_x if best_x is not None else current_x,
                                  best_obj, nodes, lower_bound, trace)
                if best_x is None:
                    return sol
                if best_obj - lower_bound <= tol():
                    return sol
                raise SearchLimitReached(sol, lower_bound)
            nodes += 1
            res = self._solve_node(spx, nxt, bins, lo0, hi0)
            current = None
            if res.status != OPTIMAL or res.objective_value >= best_obj - tol():
                continue
            if self._fractional(res.x, bins) < 0:
                accept(res.x, res.objective_value)
                continue
            current = _Node(res.objective_value, nxt.depth, nxt.fixings, None)
            current_x = res.x
        if best_x is None:
            return MipSolution(INFEASIBLE, root.x, np.nan, nodes, lower_bound, trace)
        return MipSolution(OPTIMAL, best_x, best_obj, nodes, best_obj, trace)

    @staticmethod
    def _fractional(x, bins) -> int:
        """Position (in ``bins``) of the most fractional binary, or -1."""
        if len(bins) == 0:
            return -1
        v = x[bins]
        frac = np.abs(v - np.round(v))
        if frac.max() <= INT_TOL:
            return -1
        dist = np.where(frac > INT_TOL, np.abs(v - np.floor(v) - 0.5), np.inf)
        return int(np.argmin(dist))

    @staticmethod
    def _reduced_cost_fixings(spx, bins, node, cutoff):
        """Fix binaries whose flip alone would push the bound past ``cutoff``."""
        d = spx.reduced_costs()[bins]
        state = spx.nonbasic_state()[bins]
        slack = cutoff - node.bound
        free = spx.hi[bins] > spx.lo[bins]
        fix = dict(node.fixings)
        for j in np.flatnonzero(free & (state == 0) & (d > slack)):
            fix.setdefault(int(j), float(spx.lo[bins[j]]))
        for j in np.flatnonzero(free & (state == 1) & (-d > slack)):
            fix.setdefault(int(j), float(spx.hi[bins[j]]))
        return fix

    @staticmethod
    def _apply(spx, bins, lo0, hi0, fixings):
        lo, hi = lo0.copy(), hi0.copy()
        for j, v in fixings.items():
            lo[j] = hi[j] = v
        spx.set_var_bounds(bins, lo, hi)

    def _solve_node(self, spx, node, bins, lo0, hi0):
        if node.basis is not None:
            spx.set_basis(node.basis)
        self._apply(spx, bins, lo0, hi0, node.fixings)
        return spx.solve(warm=True)

    def _rounding(self, spx, bins, lo0, hi0, x):
        """Fix every binary to its rounded root value and repair by LP."""
        fix = {j: float(round(x[b])) for j, b in enumerate(bins)}
        self._apply(spx, bins, lo0, hi0, fix)
        res = spx.solve(warm=True)
        if res.status == OPTIMAL:
            return res.x, res.objective_value
        return None


def _rounded(x, bins):
    x = x.copy()
    x[bins] = np.round(x[bins])
    return x


class HighsBackend:
    """scipy's HiGHS MILP solver behind the same contract."""

    name = "highs"
    capabilities = frozenset({"binary", "deterministic", "external"})

    def solve(self, mip: MixedIntegerProgram, gap_tol: float = DEFAULT_GAP_TOL,
              node_limit: int = DEFAULT_NODE_LIMIT, time_limit: float | None = None) -> MipSolution:
        from scipy.optimize import Bounds, LinearConstraint, milp

        lp = mip.lp
        lo = np.full(lp.n_rows, -np.inf)
        hi = np.full(lp.n_rows, np.inf)
        le, ge, eq = lp.senses == "L", lp.senses == "G", lp.senses == "E"
        hi[le | eq] = lp.rhs[le | eq]
        lo[ge | eq] = lp.rhs[ge | eq]
        integrality = np.zeros(lp.n_vars)
        integrality[list(mip.binary_vars)] = 1
        cons = [LinearConstraint(lp.A, lo, hi)] if lp.n_rows else []
        options = {"mip_rel_gap": gap_tol, "node_limit": node_limit, "presolve": True}
        if time_limit is not None:
            options["time_limit"] = time_limit
        res = milp(
            lp.objective,
            constraints=cons,
            integrality=integrality,
            bounds=Bounds(lp.lower, lp.upper),
            options=options,
        )
        nodes = int(getattr(res, "mip_node_count", 0) or 0)
        if res.status == 0:
            x = _rounded(np.asarray(res.x), np.asarray(mip.binary_vars, dtype=int))
            return MipSolution(OPTIMAL, x, lp.value(x), nodes, float(getattr(res, "mip_dual_bound", np.nan)))
        if res.status == 2:
            return MipSolution(INFEASIBLE, np.full(lp.n_vars, np.nan), np.nan, nodes)
        if res.x is None:
            return MipSolution(NO_INCUMBENT, np.full(lp.n_vars, np.nan), np.nan, nodes)
        x = _rounded(np.asarray(res.x), np.asarray(mip.binary_vars, dtype=int))
        bound = float(getattr(res, "mip_dual_bound", np.nan))
        raise SearchLimitReached(MipSolution(NO_INCUMBENT, x, lp.value(x), nodes, bound), bound)


_BACKENDS: dict[str, type] = {"internal": BranchAndBound, "highs": HighsBackend}


def register_backend(name: str, factory) -> None:
    _BACKENDS[name] = factory


def get_backend(name: str = "internal") -> SolverBackend:
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown solver backend {name!r}; known: {sorted(_BACKENDS)}") from None


def solve_mip(mip: MixedIntegerProgram, gap_tol: float = DEFAULT_GAP_TOL,
              node_limit: int = DEFAULT_NODE_LIMIT, backend: str | SolverBackend = "internal",
              time_limit: float | None = None) -> MipSolution:
    """Solve ``mip`` to optimality within ``max(gap_tol*|obj|, 1e-6)``.

    ``time_limit`` (seconds) is checked between nodes; hitting it behaves
    like hitting ``node_limit``.
    """
    be = get_backend(backend) if isinstance(backend, str) else backend
    return be.solve(mip, gap_tol, node_limit, time_limit)
