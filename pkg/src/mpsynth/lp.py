"""Linear programs and a dense two-phase simplex solver.

The solver works on the standard form ``min c.z, A z = b, z >= 0, b >= 0``
obtained by shifting bounded variables, splitting free ones and adding
slack/surplus columns.  Duals are reported as shadow prices: the derivative
of the optimal objective with respect to each constraint's right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8


class LPError(ValueError):
    """Malformed linear program."""


@dataclass
class _Row:
    idx: np.ndarray
    val: np.ndarray
    op: str
    rhs: float
    name: str | None


@dataclass
class LinearProgram:
    sense: str = "min"
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    names: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    def add_variable(self, name=None, lb=0.0, ub=None) -> int:
        lb = -math.inf if lb is None else float(lb)
        ub = math.inf if ub is None else float(ub)
        if lb > ub:
            raise LPError(f"variable {name} has lb > ub")
        self.lb.append(lb)
        self.ub.append(ub)
        self.names.append(name if name is not None else f"x{len(self.lb) - 1}")
        return len(self.lb) - 1

    def add_variables(self, k, prefix="x", lb=0.0, ub=None) -> np.ndarray:
        return np.array([self.add_variable(f"{prefix}{i}", lb, ub) for i in range(k)], dtype=np.int64)

    def add_constraint(self, coeffs, op: str, rhs, name=None) -> int:
        """``coeffs`` is a mapping ``var -> coef`` or a pair of arrays ``(idx, val)``."""
        if op not in ("<=", ">=", "=="):
            op = {"=": "==", "le": "<=", "ge": ">=", "eq": "=="}.get(op, op)
            if op not in ("<=", ">=", "=="):
                raise LPError(f"unknown relation {op!r}")
        if isinstance(coeffs, dict):
            idx = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
            val = np.array([float(Fraction(v)) if isinstance(v, str) else float(v)
                            for v in coeffs.values()])
        else:
            idx = np.asarray(coeffs[0], dtype=np.int64)
            val = np.asarray(coeffs[1], dtype=float)
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n_vars):
            raise LPError("constraint references an undeclared variable")
        if not np.all(np.isfinite(val)) or not math.isfinite(float(rhs)):
            raise LPError("non-finite coefficient")
        self.rows.append(_Row(idx, val, op, float(rhs), name))
        return len(self.rows) - 1

    def set_objective(self, coeffs: dict, sense: str = "min"):
        if sense not in ("min", "max"):
            raise LPError(f"unknown sense {sense!r}")
        for v in coeffs:
            if not 0 <= v < self.n_vars:
                raise LPError("objective references an undeclared variable")
        self.sense = sense
        self.objective = {int(k): float(v) for k, v in coeffs.items()}

    def dense(self):
        """``(c, A, ops, b)`` with ``A`` dense."""
        A = np.zeros((len(self.rows), self.n_vars))
        for i, r in enumerate(self.rows):
            np.add.at(A[i], r.idx, r.val)
        c = np.zeros(self.n_vars)
        for k, v in self.objective.items():
            c[k] = v
        return c, A, [r.op for r in self.rows], np.array([r.rhs for r in self.rows])

    def check(self, x, tol=FEAS_TOL) -> list[str]:
        """Independent feasibility re-check of an assignment."""
        x = np.asarray(x, float)
        out = []
        lb, ub = np.array(self.lb), np.array(self.ub)
        if (x < lb - tol).any() or (x > ub + tol).any():
            out.append("bound violated")
        for i, r in enumerate(self.rows):
            lhs = float(r.val @ x[r.idx])
            scale = tol * max(1.0, abs(r.rhs))
            if (r.op == "<=" and lhs > r.rhs + scale) or (r.op == ">=" and lhs < r.rhs - scale) \
                    or (r.op == "==" and abs(lhs - r.rhs) > scale):
                out.append(f"row {r.name or i} violated: {lhs} {r.op} {r.rhs}")
        return out

    def value(self, x) -> float:
        return float(sum(v * x[k] for k, v in self.objective.items()))


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# --------------------------------------------------------------------------
# standard form


def _standard_form(lp: LinearProgram):
    c0, A0, ops, b0 = lp.dense()
    n = lp.n_vars
    lb, ub = np.array(lp.lb), np.array(lp.ub)
    # x = shift + T z ; columns of T map standard variables to x
    cols, shift = [], np.zeros(n)
    extra_rows = []
    for j in range(n):
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
            if np.isfinite(ub[j]):
                extra_rows.append((len(cols) - 1, ub[j] - lb[j]))
        elif np.isfinite(ub[j]):
            shift[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    T = np.zeros((n, nz))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s
    A = A0 @ T
    b = b0 - A0 @ shift
    c = c0 @ T
    if lp.sense == "max":
        c = -c
    m0 = len(ops)
    rows = [A[i] for i in range(m0)] + [np.eye(1, nz, k).ravel() for k, _ in extra_rows]
    rhs = list(b) + [u for _, u in extra_rows]
    rel = list(ops) + ["<="] * len(extra_rows)
    m = len(rows)
    n_slack = sum(1 for r in rel if r != "==")
    S = np.zeros((m, n_slack))
    k = 0
    slack_of = np.full(m, -1)
    for i, r in enumerate(rel):
        if r == "<=":
            S[i, k] = 1.0
        elif r == ">=":
            S[i, k] = -1.0
        if r != "==":
            slack_of[i] = nz + k
            k += 1
    Astd = np.hstack([np.array(rows).reshape(m, nz), S]) if m else np.zeros((0, nz + n_slack))
    bstd = np.array(rhs, float)
    # flip rows so that slack columns can start basic: b < 0, or b == 0 on >= rows
    sign = np.where((bstd < 0) | ((bstd == 0) & (np.array(rel) == ">=")), -1.0, 1.0)
    Astd *= sign[:, None]
    bstd *= sign
    cstd = np.concatenate([c, np.zeros(n_slack)])
    return Astd, bstd, cstd, sign, slack_of, T, shift, m0


# --------------------------------------------------------------------------
# simplex


def _pivot(tab, r, j):
    tab[r] /= tab[r, j]
    col = tab[:, j].copy()
    col[r] = 0.0
    nzr = np.flatnonzero(np.abs(col) > 0)
    if len(nzr):
        tab[nzr] -= np.outer(col[nzr], tab[r])


def _choose_entering(red, allowed, rule, stalled):
    cand = np.flatnonzero((red < -PIVOT_TOL) & allowed)
    if not len(cand):
        return -1
    if rule == "bland" or stalled:
        return int(cand[0])
    return int(cand[np.argmin(red[cand])])


def _choose_leaving(tab, basis, j):
    col = tab[:-1, j]
    pos = np.flatnonzero(col > PIVOT_TOL)
    if not len(pos):
        return -1
    ratios = tab[pos, -1] / col[pos]
    best = ratios.min()
    ties = pos[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
    return int(ties[np.argmin(basis[ties])])


def _run_simplex(tab, basis, allowed, rule, max_iter):
    """Minimize the objective in the last row of ``tab`` (reduced costs, -z)."""
    it = 0
    degenerate = 0
    while it < max_iter:
        red = tab[-1, :-1]
        j = _choose_entering(red, allowed, rule, degenerate > 50)
        if j < 0:
            return "optimal", it
        r = _choose_leaving(tab, basis, j)
        if r < 0:
            return "unbounded", it
        degenerate = degenerate + 1 if tab[r, -1] <= PIVOT_TOL else 0
        _pivot(tab, r, j)
        basis[r] = j
        it += 1
    raise RuntimeError("simplex iteration limit reached")


def solve_lp(lp: LinearProgram, rule: str = "bland", max_iter: int | None = None) -> LPResult:
    """Two-phase simplex.

    ``rule="bland"`` pivots on the lowest-index improving column;
    ``rule="dantzig"`` uses the most negative reduced cost and falls back to
    Bland's rule after a run of degenerate pivots (keeps termination).
    """
    if rule not in ("bland", "dantzig"):
        raise LPError(f"unknown pivot rule {rule!r}")
    A, b, c, sign, slack_of, T, shift, m0 = _standard_form(lp)
    m, N = A.shape
    max_iter = max_iter or 50 * (m + N) + 1000
    # initial basis: slack columns with +1 entry, artificials elsewhere
    basis = np.full(m, -1, dtype=np.int64)
    for i in range(m):
        k = slack_of[i]
        if k >= 0 and A[i, k] > 0:
            basis[i] = k
    need = np.flatnonzero(basis < 0)
    n_art = len(need)
    tab = np.zeros((m + 1, N + n_art + 1))
    tab[:m, :N] = A
    tab[:m, -1] = b
    for k, i in enumerate(need):
        tab[i, N + k] = 1.0
        basis[i] = N + k
    iters = 0
    if n_art:
        tab[-1, N:N + n_art] = 1.0
        tab[-1] -= tab[need].sum(axis=0)
        allowed = np.ones(N + n_art, bool)
        status, it = _run_simplex(tab, basis, allowed, rule, max_iter)
        iters += it
        if -tab[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LPResult("infeasible", iterations=iters)
        # drive remaining artificials out of the basis
        keep = np.ones(m, bool)
        for r in range(m):
            if basis[r] >= N:
                nz = np.flatnonzero(np.abs(tab[r, :N]) > PIVOT_TOL)
                if len(nz):
                    _pivot(tab, r, int(nz[0]))
                    basis[r] = int(nz[0])
                else:
                    keep[r] = False
        tab = np.vstack([tab[:m][keep], tab[-1:]])
        redundant_rows = np.flatnonzero(~keep)
        basis = basis[keep]
        tab = np.delete(tab, np.arange(N, N + n_art), axis=1)
    else:
        redundant_rows = np.array([], dtype=np.int64)
    # phase 2 objective row
    tab[-1, :] = 0.0
    tab[-1, :N] = c
    tab[-1, -1] = 0.0
    for r, j in enumerate(basis):
        if c[j] != 0:
            tab[-1] -= c[j] * tab[r]
    status, it = _run_simplex(tab, basis, np.ones(N, bool), rule, max_iter)
    iters += it
    if status == "unbounded":
        return LPResult("unbounded", iterations=iters)
    z = np.zeros(N)
    z[basis] = tab[:-1, -1]
    z = np.maximum(z, 0.0)
    x = shift + T @ z[:T.shape[1]]
    # duals: y solves B^T y = c_B in standard form
    keep_rows = np.setdiff1d(np.arange(m), redundant_rows)
    B = A[keep_rows][:, basis]
    y_std = np.zeros(m)
    if len(basis):
        y_std[keep_rows] = np.linalg.solve(B.T, c[basis])
    duals = (sign * y_std)[:m0]
    if lp.sense == "max":
        duals = -duals
    return LPResult("optimal", x, lp.value(x), duals, iters)


def solve_lp_highs(lp: LinearProgram) -> LPResult:
    """Same interface backed by scipy's HiGHS (used for large programs)."""
    from scipy.optimize import linprog
    import scipy.sparse as sp

    c = np.zeros(lp.n_vars)
    for k, v in lp.objective.items():
        c[k] = v
    if lp.sense == "max":
        c = -c
    ub_r, ub_c, ub_v, ub_b, eq_r, eq_c, eq_v, eq_b = [], [], [], [], [], [], [], []
    ub_map, eq_map = [], []
    for i, r in enumerate(lp.rows):
        if r.op == "==":
            eq_r.extend([len(eq_b)] * len(r.idx))
            eq_c.extend(r.idx)
            eq_v.extend(r.val)
            eq_b.append(r.rhs)
            eq_map.append(i)
        else:
            s = 1.0 if r.op == "<=" else -1.0
            ub_r.extend([len(ub_b)] * len(r.idx))
            ub_c.extend(r.idx)
            ub_v.extend(s * r.val)
            ub_b.append(s * r.rhs)
            ub_map.append((i, s))
    n = lp.n_vars
    A_ub = sp.csr_matrix((ub_v, (ub_r, ub_c)), shape=(len(ub_b), n)) if ub_b else None
    A_eq = sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(eq_b), n)) if eq_b else None
    bounds = [(None if not math.isfinite(l) else l, None if not math.isfinite(u) else u)
              for l, u in zip(lp.lb, lp.ub)]
    res = linprog(c, A_ub=A_ub, b_ub=ub_b or None, A_eq=A_eq, b_eq=eq_b or None,
                  bounds=bounds, method="highs")
    if res.status == 2:
        return LPResult("infeasible")
    if res.status == 3:
        return LPResult("unbounded")
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    duals = np.zeros(len(lp.rows))
    sgn = -1.0 if lp.sense == "max" else 1.0
    for k, (i, s) in enumerate(ub_map):
        duals[i] = sgn * s * res.ineqlin.marginals[k]
    for k, i in enumerate(eq_map):
        duals[i] = sgn * res.eqlin.marginals[k]
    return LPResult("optimal", res.x, lp.value(res.x), duals, int(res.nit))


def to_lp_format(lp: LinearProgram) -> str:
    """Plain-text dump in the CPLEX LP file format."""

    def term(k, v, first):
        sgn = "-" if v < 0 else ("" if first else "+")
        mag = abs(v)
        coef = "" if mag == 1 else f"{mag:.17g} "
        return f"{sgn} {coef}{_name(lp, k)}".strip() if first else f"{sgn} {coef}{_name(lp, k)}"

    def expr(pairs):
        parts = [term(k, v, i == 0) for i, (k, v) in enumerate(pairs) if v != 0]
        return " ".join(parts) if parts else "0 " + _name(lp, 0)

    out = ["Maximize" if lp.sense == "max" else "Minimize",
           " obj: " + expr(sorted(lp.objective.items())), "Subject To"]
    for i, r in enumerate(lp.rows):
        op = {"<=": "<=", ">=": ">=", "==": "="}[r.op]
        out.append(f" {r.name or f'c{i}'}: {expr(list(zip(r.idx.tolist(), r.val.tolist())))} {op} {r.rhs:.17g}")
    out.append("Bounds")
    for k in range(lp.n_vars):
        lo, hi = lp.lb[k], lp.ub[k]
        nm = _name(lp, k)
        if lo == -math.inf and hi == math.inf:
            out.append(f" {nm} free")
        elif lo == hi:
            out.append(f" {nm} = {lo:.17g}")
        else:
            los = "-inf" if lo == -math.inf else f"{lo:.17g}"
            his = "+inf" if hi == math.inf else f"{hi:.17g}"
            out.append(f" {los} <= {nm} <= {his}")
    out.append("End")
    return "\n".join(out) + "\n"


def _name(lp, k):
    nm = str(lp.names[k])
    return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in nm)
