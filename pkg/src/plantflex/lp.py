"""Linear programs and a bounded-variable revised simplex solver.

The solver works on ``A x (<=, >=, =) b`` with per-variable boxes
``lower <= x <= upper``.  Box constraints never enter the basis as rows; every
structural row gets one logical (slack) column whose bounds encode the row
relation.  The basis is kept as a sparse LU factorisation plus a product-form
eta file that is refactorised periodically.

Both a primal method (composite phase 1 / phase 2) and a dual method are
provided.  The dual method is what branch-and-bound uses after tightening
variable bounds, since the previous optimal basis stays dual feasible.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import qr
from scipy.sparse.linalg import splu

logger = logging.getLogger(__name__)

LE, GE, EQ = "L", "G", "E"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
RATIO_PIVOT_TOL = 1e-7
SINGULAR_TOL = 1e-11
STALL_THRESHOLD = 50
REFACTOR_EVERY = 40

_AT_LOWER, _AT_UPPER, _FREE_ZERO, _BASIC = 0, 1, 2, 3


class CyclingError(RuntimeError):
    """Raised when the iteration guard trips."""

    def __init__(self, iterations):
        super().__init__(f"simplex did not terminate after {iterations} iterations")
        self.iterations = iterations


@dataclass(frozen=True)
class LinearProgram:
    """``min c.x + offset`` subject to row relations and variable boxes.

    ``A`` is stored as CSR with one row per constraint.  ``senses`` holds one of
    ``"L"``, ``"G"``, ``"E"`` per row.  ``upper`` may contain ``np.inf``.
    """

    objective: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    offset: float = 0.0
    col_names: tuple | None = None
    row_names: tuple | None = None

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def check(self) -> None:
        n = self.n_vars
        if self.A.shape[1] != n:
            raise ValueError(f"A has {self.A.shape[1]} columns, objective has {n}")
        m = self.A.shape[0]
        for name, arr, size in (
            ("senses", self.senses, m),
            ("rhs", self.rhs, m),
            ("lower", self.lower, n),
            ("upper", self.upper, n),
        ):
            if len(arr) != size:
                raise ValueError(f"{name} has length {len(arr)}, expected {size}")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective contains NaN or infinite coefficients")
        if not np.all(np.isfinite(self.A.data)):
            raise ValueError("constraint matrix contains NaN or infinite coefficients")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("right-hand side contains NaN or infinite values")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds contain NaN")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("bounds use the wrong infinite sentinel")
        bad = set(np.unique(self.senses)) - {LE, GE, EQ}
        if bad:
            raise ValueError(f"unknown row relations {sorted(bad)}")

    def residuals(self, x: np.ndarray) -> tuple[float, float]:
        """Largest row violation and largest bound violation at ``x``."""
        act = self.A @ x
        viol = np.zeros(self.n_rows)
        le = self.senses == LE
        ge = self.senses == GE
        eq = self.senses == EQ
        viol[le] = np.maximum(act[le] - self.rhs[le], 0.0)
        viol[ge] = np.maximum(self.rhs[ge] - act[ge], 0.0)
        viol[eq] = np.abs(act[eq] - self.rhs[eq])
        bnd = np.maximum(self.lower - x, 0.0)
        bnd = np.maximum(bnd, x - self.upper)
        return (float(viol.max(initial=0.0)), float(bnd.max(initial=0.0)))

    def value(self, x: np.ndarray) -> float:
        return float(self.objective @ x) + self.offset


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    objective_value: float
    iterations: int = 0


class LPBuilder:
    """Accumulates named columns and sparse rows, then freezes a LinearProgram."""

    def __init__(self):
        self._lo: list[float] = []
        self._hi: list[float] = []
        self._c: list[float] = []
        self._names: list[str] = []
        self._ri: list[int] = []
        self._ci: list[int] = []
        self._v: list[float] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self.offset = 0.0

    @property
    def n_vars(self):
        return len(self._c)

    @property
    def n_rows(self):
        return len(self._rhs)

    def add_var(self, lo=0.0, hi=np.inf, cost=0.0, name=None) -> int:
        self._lo.append(float(lo))
        self._hi.append(float(hi))
        self._c.append(float(cost))
        self._names.append(name if name is not None else f"x{len(self._c) - 1}")
        return len(self._c) - 1

    def add_row(self, cols, vals, sense, rhs, name=None) -> int:
        r = len(self._rhs)
        for j, v in zip(cols, vals):
            if v != 0.0:
                self._ri.append(r)
                self._ci.append(int(j))
                self._v.append(float(v))
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name if name is not None else f"r{r}")
        return r

    def set_bounds(self, j, lo, hi):
        self._lo[j] = float(lo)
        self._hi[j] = float(hi)

    def add_cost(self, j, cost):
        self._c[j] += float(cost)

    def build(self) -> LinearProgram:
        n = len(self._c)
        m = len(self._rhs)
        A = sp.csr_matrix(
            (np.array(self._v, dtype=float), (np.array(self._ri, dtype=int), np.array(self._ci, dtype=int))),
            shape=(m, n),
        )
        A.sum_duplicates()
        lp = LinearProgram(
            objective=np.array(self._c, dtype=float),
            A=A,
            senses=np.array(self._senses, dtype="<U1"),
            rhs=np.array(self._rhs, dtype=float),
            lower=np.array(self._lo, dtype=float),
            upper=np.array(self._hi, dtype=float),
            offset=self.offset,
            col_names=tuple(self._names),
            row_names=tuple(self._row_names),
        )
        lp.check()
        return lp


class _Factor:
    """Sparse LU of the basis with a product-form eta file."""

    def __init__(self, B: sp.csc_matrix):
        self.lu = splu(B, permc_spec="COLAMD")
        u = np.abs(self.lu.U.diagonal())
        if len(u) and u.min() <= SINGULAR_TOL * max(u.max(), 1.0):
            raise RuntimeError("basis is numerically singular")
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v):
        w = self.lu.solve(np.asarray(v, dtype=float))
        for r, col in self.etas:
            wr = w[r] / col[r]
            w -= col * wr
            w[r] = wr
        return w

    def btran(self, v):
        v = np.array(v, dtype=float)
        for r, col in reversed(self.etas):
            v[r] = (v[r] - (col @ v - col[r] * v[r])) / col[r]
        return self.lu.solve(v, trans="T")

    def push(self, r, col):
        self.etas.append((r, col))


@dataclass
class BasisState:
    basis: np.ndarray
    state: np.ndarray


@dataclass
class _Stats:
    iterations: int = 0
    degenerate_run: int = 0
    bland: bool = False
    factorizations: int = 0
    extra: dict = field(default_factory=dict)


class BoundedSimplex:
    """Revised simplex on ``[A | I] z = b`` with every column boxed.

    Instances are mutable (bounds, basis) and meant for one thread; build one
    per LinearProgram.  Column ``n + i`` is the logical column of row ``i``.
    """

    def __init__(self, lp: LinearProgram, max_iter: int | None = None):
        lp.check()
        self.lp = lp
        keep = np.diff(lp.A.indptr) > 0
        # empty rows need no logical; they only have to be satisfiable by 0
        self.trivially_infeasible = False
        for i in np.flatnonzero(~keep):
            s, b = lp.senses[i], lp.rhs[i]
            if (s == LE and b < -FEAS_TOL) or (s == GE and b > FEAS_TOL) or (s == EQ and abs(b) > FEAS_TOL):
                self.trivially_infeasible = True
        self.rows = np.flatnonzero(keep)
        A = lp.A[self.rows]
        m, n = A.shape
        self.m, self.n = m, n
        self.N = n + m
        self.Abar = sp.hstack([A, sp.identity(m, format="csr")], format="csc")
        self.At = self.Abar.T.tocsr()
        self._cp, self._ci, self._cv = self.Abar.indptr, self.Abar.indices, self.Abar.data
        self.b = lp.rhs[self.rows].astype(float)
        self.c = np.concatenate([lp.objective.astype(float), np.zeros(m)])
        senses = lp.senses[self.rows]
        slo = np.where(senses == GE, -np.inf, 0.0)
        shi = np.where(senses == LE, np.inf, 0.0)
        self.lo = np.concatenate([lp.lower.astype(float), slo])
        self.hi = np.concatenate([lp.upper.astype(float), shi])
        self.max_iter = max_iter if max_iter is not None else 50 * (self.N + 10)
        self.stats = _Stats()
        self._start = 0
        self.repaired = False
        self._initial_basis()

    # basis bookkeeping

    def _initial_basis(self):
        self.state = np.full(self.N, _AT_LOWER, dtype=np.int8)
        self.basis = np.arange(self.n, self.N)
        self.state[self.basis] = _BASIC
        self._fix_nonbasic_states()
        self._refactor()

    def get_basis(self) -> BasisState:
        return BasisState(self.basis.copy(), self.state.copy())

    def set_basis(self, bs: BasisState):
        self.basis = bs.basis.copy()
        self.state = bs.state.copy()
        self._fix_nonbasic_states()
        self._refactor()

    def set_var_bounds(self, idx, lo, hi):
        """Change structural bounds and keep the basis (nonbasic values follow)."""
        self.lo[idx] = lo
        self.hi[idx] = hi
        self._fix_nonbasic_states()
        self._recompute_x()

    def _fix_nonbasic_states(self):
        nb = self.state != _BASIC
        flo, fhi = np.isfinite(self.lo), np.isfinite(self.hi)
        st = self.state
        st[nb & (st == _AT_UPPER) & ~fhi] = _AT_LOWER
        st[nb & (st == _AT_LOWER) & ~flo] = _AT_UPPER
        st[nb & (st == _FREE_ZERO) & flo] = _AT_LOWER
        st[nb & (st == _FREE_ZERO) & ~flo & fhi] = _AT_UPPER
        st[nb & ~flo & ~fhi] = _FREE_ZERO

    def _nonbasic_values(self):
        z = np.zeros(self.N)
        lo_m = self.state == _AT_LOWER
        up_m = self.state == _AT_UPPER
        z[lo_m] = self.lo[lo_m]
        z[up_m] = self.hi[up_m]
        return z

    def _refactor(self):
        try:
            self.factor = _Factor(self.Abar[:, self.basis].tocsc())
        except RuntimeError:
            self._repair_basis()
            self.factor = _Factor(self.Abar[:, self.basis].tocsc())
        self.stats.factorizations += 1
        self._recompute_x()

    def _repair_basis(self):
        """Swap dependent basic columns for logicals until the basis is regular."""
        Bd = self.Abar[:, self.basis].toarray()
        Q, R, P = qr(Bd, pivoting=True, mode="full")
        diag = np.abs(np.diag(R))
        k = int(np.sum(diag > 1e-9 * max(diag[0], 1.0))) if len(diag) else 0
        drop = np.sort(P[k:])
        Q2 = Q[:, k:]
        _, _, P2 = qr(Q2.T, pivoting=True, mode="economic")
        new_rows = P2[: self.m - k]
        logger.debug("repairing singular basis: %d dependent columns", len(drop))
        for pos, row in zip(drop, new_rows):
            old = self.basis[pos]
            v = self.x[old] if hasattr(self, "x") else 0.0
            if np.isfinite(self.lo[old]) and (not np.isfinite(self.hi[old]) or abs(v - self.lo[old]) <= abs(v - self.hi[old])):
                self.state[old] = _AT_LOWER
            elif np.isfinite(self.hi[old]):
                self.state[old] = _AT_UPPER
            else:
                self.state[old] = _FREE_ZERO
            self.basis[pos] = self.n + row
            self.state[self.n + row] = _BASIC
        self.repaired = True

    def _recompute_x(self):
        z = self._nonbasic_values()
        rhs = self.b - self.Abar @ z
        z[self.basis] = self.factor.ftran(rhs)
        self.x = z

    def _column(self, q):
        v = np.zeros(self.m)
        lo, hi = self._cp[q], self._cp[q + 1]
        v[self._ci[lo:hi]] = self._cv[lo:hi]
        return v

    def _duals(self, cost):
        y = self.factor.btran(cost[self.basis])
        d = cost - self.At @ y
        d[self.basis] = 0.0
        return d

    def reduced_costs(self) -> np.ndarray:
        """Reduced costs of the structural columns at the current basis."""
        return self._duals(self.c)[: self.n]

    def nonbasic_state(self) -> np.ndarray:
        """Per structural column: 0 at lower, 1 at upper, 2 free, 3 basic."""
        return self.state[: self.n].copy()

    def _pivot(self, r, q, alpha, leave_state):
        leaving = self.basis[r]
        self.basis[r] = q
        self.state[q] = _BASIC
        self.state[leaving] = leave_state
        self.factor.push(r, alpha)
        if len(self.factor.etas) >= REFACTOR_EVERY:
            self._refactor()

    def _count(self, degenerate):
        st = self.stats
        st.iterations += 1
        if st.iterations - self._start > self.max_iter:
            raise CyclingError(st.iterations - self._start)
        if degenerate:
            st.degenerate_run += 1
            if st.degenerate_run >= STALL_THRESHOLD:
                st.bland = True
        else:
            st.degenerate_run = 0
            st.bland = False

    # primal simplex

    def _infeasibility(self):
        xb = self.x[self.basis]
        return self.lo[self.basis] - xb, xb - self.hi[self.basis]

    def primal(self) -> str:
        while True:
            below, above = self._infeasibility()
            inf_lo = below > FEAS_TOL
            inf_hi = above > FEAS_TOL
            phase1 = bool(inf_lo.any() or inf_hi.any())
            if phase1:
                cost = np.zeros(self.N)
                cost[self.basis[inf_lo]] = -1.0
                cost[self.basis[inf_hi]] = 1.0
            else:
                cost = self.c
            d = self._duals(cost)
            q, direction = self._price(d)
            if q < 0:
                return INFEASIBLE if phase1 else OPTIMAL
            alpha = self.factor.ftran(self._column(q))
            res = self._primal_ratio(q, direction, alpha, inf_lo, inf_hi)
            if res is None:
                if phase1:
                    # a phase-1 ray means the factorisation has drifted
                    self._refactor()
                    self._count(True)
                    continue
                return UNBOUNDED
            theta, r, leave_state = res
            self._count(theta <= FEAS_TOL)
            step = direction * theta
            self.x[self.basis] -= alpha * step
            self.x[q] += step
            if r < 0:
                self.state[q] = _AT_UPPER if direction > 0 else _AT_LOWER
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                continue
            leaving = self.basis[r]
            self.x[leaving] = self.lo[leaving] if leave_state == _AT_LOWER else self.hi[leaving]
            self._pivot(r, q, alpha, leave_state)

    def _price(self, d):
        st = self.state
        movable = self.hi > self.lo
        up = ((st == _AT_LOWER) | (st == _FREE_ZERO)) & movable & (d < -OPT_TOL)
        down = ((st == _AT_UPPER) | (st == _FREE_ZERO)) & movable & (d > OPT_TOL)
        cand = up | down
        if not cand.any():
            return -1, 0
        if self.stats.bland:
            q = int(np.flatnonzero(cand)[0])
        else:
            q = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
        return q, (1 if up[q] else -1)

    def _primal_ratio(self, q, direction, alpha, inf_lo, inf_hi):
        # basic i moves at rate g_i = -direction * alpha_i per unit step
        g = -direction * alpha
        xb = self.x[self.basis]
        lb = self.lo[self.basis]
        ub = self.hi[self.basis]
        dist = np.full(self.m, np.inf)
        target = np.zeros(self.m, dtype=np.int8)
        inc = g > RATIO_PIVOT_TOL
        dec = g < -RATIO_PIVOT_TOL
        feas = ~inf_lo & ~inf_hi
        m1 = inc & feas & np.isfinite(ub)
        dist[m1] = np.maximum(ub[m1] - xb[m1], 0.0)
        target[m1] = _AT_UPPER
        m2 = dec & feas & np.isfinite(lb)
        dist[m2] = np.maximum(xb[m2] - lb[m2], 0.0)
        target[m2] = _AT_LOWER
        # infeasible basics moving towards their violated bound stop there
        m3 = inc & inf_lo
        dist[m3] = lb[m3] - xb[m3]
        target[m3] = _AT_LOWER
        m4 = dec & inf_hi
        dist[m4] = xb[m4] - ub[m4]
        target[m4] = _AT_UPPER
        rate = np.abs(g)
        cand = np.isfinite(dist)
        flip = self.hi[q] - self.lo[q]
        if not cand.any():
            return (flip, -1, 0) if np.isfinite(flip) else None
        exact = np.full(self.m, np.inf)
        exact[cand] = dist[cand] / rate[cand]
        tmin = exact.min()
        if flip <= tmin:
            return flip, -1, 0
        if self.stats.bland:
            ties = np.flatnonzero(exact <= tmin + 1e-12)
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            # Harris: largest pivot among rows within the relaxed step
            relaxed = np.full(self.m, np.inf)
            relaxed[cand] = (dist[cand] + FEAS_TOL) / rate[cand]
            tmax = relaxed.min()
            pool = np.flatnonzero(exact <= tmax)
            r = int(pool[np.argmax(rate[pool])])
        return max(exact[r], 0.0), r, target[r]

    # dual simplex

    def dual_feasible(self, d=None) -> bool:
        if d is None:
            d = self._duals(self.c)
        st = self.state
        movable = self.hi > self.lo
        bad_low = ((st == _AT_LOWER) | (st == _FREE_ZERO)) & movable & (d < -OPT_TOL)
        bad_up = ((st == _AT_UPPER) | (st == _FREE_ZERO)) & movable & (d > OPT_TOL)
        return not (bad_low.any() or bad_up.any())

    def dual(self) -> str | None:
        """Dual simplex from a dual-feasible basis.

        Returns OPTIMAL or INFEASIBLE, or None when a basis repair destroyed
        dual feasibility and the primal method has to take over.
        """
        st = self.stats
        d = self._duals(self.c)
        nfac = st.factorizations
        e = np.zeros(self.m)
        while True:
            if st.factorizations != nfac:
                nfac = st.factorizations
                d = self._duals(self.c)
                if self.repaired:
                    self.repaired = False
                    if not self.dual_feasible(d):
                        return None
            below, above = self._infeasibility()
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                return OPTIMAL
            increase = below[r] > above[r]
            e[r] = 1.0
            rho = self.factor.btran(e)
            e[r] = 0.0
            arow = self.At @ rho
            sa = arow if increase else -arow
            nb = (self.state != _BASIC) & (self.hi > self.lo)
            e_lo = nb & (self.state == _AT_LOWER) & (sa < -RATIO_PIVOT_TOL)
            e_hi = nb & (self.state == _AT_UPPER) & (sa > RATIO_PIVOT_TOL)
            e_fr = nb & (self.state == _FREE_ZERO) & (np.abs(sa) > RATIO_PIVOT_TOL)
            elig = e_lo | e_hi | e_fr
            if not elig.any():
                return INFEASIBLE
            slack = np.zeros(self.N)
            slack[e_lo] = np.maximum(d[e_lo], 0.0)
            slack[e_hi] = np.maximum(-d[e_hi], 0.0)
            slack[e_fr] = np.abs(d[e_fr])
            mag = np.abs(sa)
            idx = np.flatnonzero(elig)
            exact = slack[idx] / mag[idx]
            if st.bland:
                q = int(idx[np.flatnonzero(exact <= exact.min() + 1e-12)[0]])
            else:
                tmax = ((slack[idx] + OPT_TOL) / mag[idx]).min()
                pool = idx[exact <= tmax]
                q = int(pool[np.argmax(mag[pool])])
            alpha = self.factor.ftran(self._column(q))
            if abs(alpha[r] - arow[q]) > 1e-7 * (1.0 + abs(arow[q])) or abs(alpha[r]) <= PIVOT_TOL:
                # row and column disagree: the eta file has drifted
                self._refactor()
                self._count(True)
                continue
            leaving = self.basis[r]
            tgt = self.lo[leaving] if increase else self.hi[leaving]
            t = (self.x[leaving] - tgt) / alpha[r]
            theta_d = d[q] / arow[q]
            self._count(abs(theta_d) <= OPT_TOL)
            self.x[self.basis] -= alpha * t
            self.x[q] += t
            self.x[leaving] = tgt
            d -= theta_d * arow
            self._pivot(r, q, alpha, _AT_LOWER if increase else _AT_UPPER)
            d[self.basis] = 0.0

    # driver

    def solve(self, warm: bool = False) -> LpSolution:
        """Solve from the current basis.

        With ``warm`` set, a dual-feasible basis is re-optimised by the dual
        method; otherwise (or if dual feasibility was lost) the primal method
        runs.
        """
        if self.trivially_infeasible or np.any(self.lo > self.hi + FEAS_TOL):
            return LpSolution(INFEASIBLE, np.full(self.n, np.nan), np.nan, 0)
        start = self._start = self.stats.iterations
        self.stats.degenerate_run = 0
        self.stats.bland = False
        self.repaired = False
        status = None
        if warm and self.dual_feasible():
            status = self.dual()
        for _ in range(3):
            if status is None:
                status = self.primal()
            if status != OPTIMAL:
                break
            # clean residual drift from the eta file before reporting
            self._refactor()
            below, above = self._infeasibility()
            if max(below.max(initial=0), above.max(initial=0)) > FEAS_TOL or not self.dual_feasible():
                status = None
                continue
            break
        its = self.stats.iterations - start
        if status != OPTIMAL:
            return LpSolution(status, np.full(self.n, np.nan), np.nan, its)
        x = self.x[: self.n].copy()
        lo, hi = self.lo[: self.n], self.hi[: self.n]
        x = np.where(np.abs(x - lo) <= FEAS_TOL, lo, x)
        x = np.where(np.abs(x - hi) <= FEAS_TOL, hi, x)
        return LpSolution(OPTIMAL, x, self.lp.value(x), its)


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` from a slack basis.

    Raises CyclingError if the iteration guard is exceeded.
    """
    return BoundedSimplex(lp, max_iter=max_iter).solve()


def write_mps(lp: LinearProgram, path, name="PLANTFLEX") -> None:
    """Write ``lp`` as free-format MPS with 12 significant digits."""
    fmt = "{:.12g}".format
    cols = lp.col_names or tuple(f"x{j}" for j in range(lp.n_vars))
    rows = lp.row_names or tuple(f"r{i}" for i in range(lp.n_rows))
    A = lp.A.tocsc()
    lines = [f"NAME {name}", "ROWS", " N obj"]
    lines += [f" {s} {r}" for s, r in zip(lp.senses, rows)]
    lines.append("COLUMNS")
    for j in range(lp.n_vars):
        if lp.objective[j] != 0.0:
            lines.append(f" {cols[j]} obj {fmt(lp.objective[j])}")
        for k in range(A.indptr[j], A.indptr[j + 1]):
            lines.append(f" {cols[j]} {rows[A.indices[k]]} {fmt(A.data[k])}")
    lines.append("RHS")
    for i in range(lp.n_rows):
        if lp.rhs[i] != 0.0:
            lines.append(f" rhs {rows[i]} {fmt(lp.rhs[i])}")
    if lp.offset:
        lines.append(f" rhs obj {fmt(-lp.offset)}")
    lines.append("BOUNDS")
    for j in range(lp.n_vars):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo == hi:
            lines.append(f" FX bnd {cols[j]} {fmt(lo)}")
            continue
        if not np.isfinite(lo):
            lines.append(f" MI bnd {cols[j]}")
        elif lo != 0.0:
            lines.append(f" LO bnd {cols[j]} {fmt(lo)}")
        if np.isfinite(hi):
            lines.append(f" UP bnd {cols[j]} {fmt(hi)}")
    lines.append("ENDATA")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mps(path) -> LinearProgram:
    """Read the free-format MPS subset produced by :func:`write_mps`."""
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    cols: dict[str, int] = {}
    entries: list[tuple[str, str, float]] = []
    rhs: dict[str, float] = {}
    bounds: list[tuple[str, str, float | None]] = []
    obj_row = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("*"):
                continue
            if not line.startswith(" "):
                section = line.split()[0]
                continue
            tok = line.split()
            if section == "ROWS":
                if tok[0] == "N":
                    obj_row = tok[1]
                else:
                    row_sense[tok[1]] = tok[0]
                    row_order.append(tok[1])
            elif section == "COLUMNS":
                cols.setdefault(tok[0], len(cols))
                for k in range(1, len(tok), 2):
                    entries.append((tok[0], tok[k], float(tok[k + 1])))
            elif section == "RHS":
                for k in range(1, len(tok), 2):
                    rhs[tok[k]] = float(tok[k + 1])
            elif section == "BOUNDS":
                cols.setdefault(tok[2], len(cols))
                bounds.append((tok[0], tok[2], float(tok[3]) if len(tok) > 3 else None))
    b = LPBuilder()
    for name in cols:
        b.add_var(name=name)
    rindex = {r: i for i, r in enumerate(row_order)}
    rows_cols: list[list[int]] = [[] for _ in row_order]
    rows_vals: list[list[float]] = [[] for _ in row_order]
    for cname, rname, v in entries:
        if rname == obj_row:
            b.add_cost(cols[cname], v)
        else:
            rows_cols[rindex[rname]].append(cols[cname])
            rows_vals[rindex[rname]].append(v)
    for r in row_order:
        i = rindex[r]
        b.add_row(rows_cols[i], rows_vals[i], row_sense[r], rhs.get(r, 0.0), name=r)
    b.offset = -rhs.get(obj_row, 0.0) if obj_row else 0.0
    for kind, cname, v in bounds:
        j = cols[cname]
        lo, hi = b._lo[j], b._hi[j]
        if kind == "FX":
            lo = hi = v
        elif kind == "LO":
            lo = v
        elif kind == "UP":
            hi = v
        elif kind == "MI":
            lo = -np.inf
        b.set_bounds(j, lo, hi)
    return b.build()
