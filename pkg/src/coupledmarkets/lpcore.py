"""Dense two-phase primal simplex with duals and infeasibility/unboundedness certificates.

Problems are stated as::

    min|max  c.x
    s.t.     A_eq x  = b_eq
             A_ub x <= b_ub
             lower <= x <= upper

Duals follow a sensitivity convention: ``dual_eq[i]`` is the derivative of the
optimal objective with respect to ``b_eq[i]``; ``dual_ineq[i]`` is nonnegative and
equals ``-d obj/d b_ub[i]`` when minimizing, ``+d obj/d b_ub[i]`` when maximizing.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import MalformedProgram

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8
GAP_TOL = 1e-6
_OPT_TOL = 1e-9
_DEGENERATE_SWITCH = 50
_MAX_PIVOTS = 50_000


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class Sense(enum.Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


@dataclass
class Variable:
    name: str
    lower: float = 0.0
    upper: float = math.inf


@dataclass
class Row:
    coeffs: dict
    rhs: float
    name: str = ""


@dataclass
class LinearProgram:
    """A small LP built incrementally; rows reference variables by index."""

    sense: Sense = Sense.MINIMIZE
    variables: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    equality_rows: list = field(default_factory=list)
    inequality_rows: list = field(default_factory=list)

    def add_variable(self, name, lower=0.0, upper=math.inf, cost=0.0):
        self.variables.append(Variable(name, float(lower), float(upper)))
        idx = len(self.variables) - 1
        if cost:
            self.objective[idx] = float(cost)
        return idx

    def index(self, name):
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise MalformedProgram(f"unknown variable {name!r}")

    def _resolve(self, coeffs):
        out = {}
        for key, val in coeffs.items():
            idx = self.index(key) if isinstance(key, str) else key
            out[idx] = out.get(idx, 0.0) + float(val)
        return out

    def add_eq(self, coeffs, rhs, name=""):
        self.equality_rows.append(Row(self._resolve(coeffs), float(rhs), name))
        return len(self.equality_rows) - 1

    def add_le(self, coeffs, rhs, name=""):
        self.inequality_rows.append(Row(self._resolve(coeffs), float(rhs), name))
        return len(self.inequality_rows) - 1

    def add_ge(self, coeffs, rhs, name=""):
        neg = {k: -v for k, v in self._resolve(coeffs).items()}
        return self.add_le(neg, -float(rhs), name)

    def set_cost(self, var, cost):
        idx = self.index(var) if isinstance(var, str) else var
        self.objective[idx] = float(cost)

    @property
    def n(self):
        return len(self.variables)

    def validate(self):
        n = self.n
        for v in self.variables:
            if math.isnan(v.lower) or math.isnan(v.upper):
                raise MalformedProgram(f"NaN bound on {v.name}")
            if v.lower > v.upper:
                raise MalformedProgram(f"lower > upper on {v.name}")
            if v.lower == math.inf or v.upper == -math.inf:
                raise MalformedProgram(f"empty bound range on {v.name}")
        for idx, val in self.objective.items():
            if not 0 <= idx < n:
                raise MalformedProgram(f"objective references undeclared variable {idx}")
            if not math.isfinite(val):
                raise MalformedProgram("non-finite objective coefficient")
        for kind, rows in (("equality", self.equality_rows), ("inequality", self.inequality_rows)):
            for r, row in enumerate(rows):
                if not math.isfinite(row.rhs):
                    raise MalformedProgram(f"{kind} row {r} has non-finite rhs")
                for idx, val in row.coeffs.items():
                    if not isinstance(idx, (int, np.integer)) or not 0 <= idx < n:
                        raise MalformedProgram(f"{kind} row {r} references undeclared variable {idx!r}")
                    if not math.isfinite(val):
                        raise MalformedProgram(f"{kind} row {r} has non-finite coefficient")

    def arrays(self):
        """Dense ``(c, A_eq, b_eq, A_ub, b_ub, lower, upper)``."""
        n = self.n
        c = np.zeros(n)
        for i, v in self.objective.items():
            c[i] = v
        A_eq = np.zeros((len(self.equality_rows), n))
        b_eq = np.array([r.rhs for r in self.equality_rows], dtype=float)
        for k, row in enumerate(self.equality_rows):
            for i, v in row.coeffs.items():
                A_eq[k, i] += v
        A_ub = np.zeros((len(self.inequality_rows), n))
        b_ub = np.array([r.rhs for r in self.inequality_rows], dtype=float)
        for k, row in enumerate(self.inequality_rows):
            for i, v in row.coeffs.items():
                A_ub[k, i] += v
        lower = np.array([v.lower for v in self.variables], dtype=float)
        upper = np.array([v.upper for v in self.variables], dtype=float)
        return c, A_eq, b_eq, A_ub, b_ub, lower, upper

    def dump(self):
        """Fixed-layout text rendering, one row per line, for diffing in tests."""
        names = [v.name for v in self.variables]
        lines = [f"SENSE {self.sense.value}", "VARIABLES " + " ".join(names)]
        for v in self.variables:
            lines.append(f"BOUND {v.name} {_fmt(v.lower)} {_fmt(v.upper)}")
        lines.append("OBJ " + " ".join(_fmt(self.objective.get(i, 0.0)) for i in range(self.n)))
        for k, row in enumerate(self.equality_rows):
            coeffs = " ".join(_fmt(row.coeffs.get(i, 0.0)) for i in range(self.n))
            lines.append(f"EQ {row.name or k} {coeffs} = {_fmt(row.rhs)}")
        for k, row in enumerate(self.inequality_rows):
            coeffs = " ".join(_fmt(row.coeffs.get(i, 0.0)) for i in range(self.n))
            lines.append(f"LE {row.name or k} {coeffs} <= {_fmt(row.rhs)}")
        return "\n".join(lines) + "\n"

    def copy(self):
        out = LinearProgram(self.sense)
        out.variables = [Variable(v.name, v.lower, v.upper) for v in self.variables]
        out.objective = dict(self.objective)
        out.equality_rows = [Row(dict(r.coeffs), r.rhs, r.name) for r in self.equality_rows]
        out.inequality_rows = [Row(dict(r.coeffs), r.rhs, r.name) for r in self.inequality_rows]
        return out


def _fmt(x):
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return repr(float(x))


@dataclass
class FarkasCertificate:
    """Row multipliers proving infeasibility.

    For any x satisfying the rows, ``sum(eq*(A_eq x - b_eq)) + sum(ineq*(A_ub x - b_ub)) <= 0``;
    the certificate is valid when the minimum of the left-hand side over the
    variable bounds is strictly positive.
    """

    eq: np.ndarray
    ineq: np.ndarray


@dataclass
class LpSolution:
    status: Status
    primal: np.ndarray
    dual_eq: np.ndarray
    dual_ineq: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    certificate: Optional[Union[FarkasCertificate, np.ndarray]] = None
    names: Sequence[str] = ()

    def __getitem__(self, name):
        return float(self.primal[list(self.names).index(name)])

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


@dataclass
class Feasible:
    point: np.ndarray


@dataclass
class Infeasible:
    certificate: FarkasCertificate


# ---------------------------------------------------------------------------
# certificate checks


def farkas_violation(lp, cert):
    """Return ``min over bounds of r.x - r0``; positive means the certificate proves infeasibility."""
    _, A_eq, b_eq, A_ub, b_ub, lower, upper = lp.arrays()
    if np.any(cert.ineq < -1e-12):
        return -math.inf
    r = A_eq.T @ cert.eq + A_ub.T @ cert.ineq
    r0 = float(b_eq @ cert.eq + b_ub @ cert.ineq)
    scale = max(1.0, float(np.max(np.abs(cert.eq), initial=0.0)), float(np.max(cert.ineq, initial=0.0)))
    total = 0.0
    for j, rj in enumerate(r):
        if abs(rj) <= 1e-11 * scale:
            continue
        bound = lower[j] if rj > 0 else upper[j]
        if not math.isfinite(bound):
            return -math.inf
        total += rj * bound
    return total - r0


def ray_is_valid(lp, ray, tol=1e-9):
    """True when ``ray`` is a recession direction that strictly improves the objective."""
    c, A_eq, _, A_ub, _, lower, upper = lp.arrays()
    scale = max(1.0, float(np.max(np.abs(ray))))
    if A_eq.size and np.max(np.abs(A_eq @ ray)) > tol * scale:
        return False
    if A_ub.size and np.max(A_ub @ ray) > tol * scale:
        return False
    for j in range(len(ray)):
        if math.isfinite(lower[j]) and ray[j] < -tol * scale:
            return False
        if math.isfinite(upper[j]) and ray[j] > tol * scale:
            return False
    gain = float(c @ ray)
    return gain < -tol if lp.sense is Sense.MINIMIZE else gain > tol


def dual_objective(lp, sol):
    """Objective of the Lagrangian dual evaluated at the solution's multipliers."""
    c, A_eq, b_eq, A_ub, b_ub, lower, upper = lp.arrays()
    sign = 1.0 if lp.sense is Sense.MINIMIZE else -1.0
    lam = sign * sol.dual_eq
    mu = sol.dual_ineq
    d = sign * sol.reduced_costs
    total = float(b_eq @ lam - b_ub @ mu)
    for j, dj in enumerate(d):
        if abs(dj) <= 1e-12:
            continue
        bound = lower[j] if dj > 0 else upper[j]
        if not math.isfinite(bound):
            return -sign * math.inf
        total += dj * bound
    return sign * total


# ---------------------------------------------------------------------------
# standard form


@dataclass
class _StdForm:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    const: float
    col_var: list  # std column -> (var index, sign) or None for slacks
    n_struct: int
    row_kind: list  # ("eq"|"ineq"|"bound", original index)
    row_scale: np.ndarray  # std row = row_scale * original row
    slack_of_row: dict  # std row -> slack column
    offset: np.ndarray


def _standard_form(lp):
    c, A_eq, b_eq, A_ub, b_ub, lower, upper = lp.arrays()
    if lp.sense is Sense.MAXIMIZE:
        c = -c
    n = lp.n
    offset = np.zeros(n)
    col_var = []
    bound_cols = []
    for j in range(n):
        lo, up = lower[j], upper[j]
        if math.isfinite(lo) and math.isfinite(up) and lo == up:
            offset[j] = lo
        elif math.isfinite(lo):
            offset[j] = lo
            col_var.append((j, 1.0))
            if math.isfinite(up):
                bound_cols.append((len(col_var) - 1, up - lo))
        elif math.isfinite(up):
            offset[j] = up
            col_var.append((j, -1.0))
        else:
            col_var.append((j, 1.0))
            col_var.append((j, -1.0))
    n_struct = len(col_var)
    T = np.zeros((n, n_struct))
    for k, (j, s) in enumerate(col_var):
        T[j, k] = s
    rows = []
    rhs = []
    kinds = []
    for i in range(A_eq.shape[0]):
        rows.append(A_eq[i] @ T)
        rhs.append(b_eq[i] - A_eq[i] @ offset)
        kinds.append(("eq", i))
    for i in range(A_ub.shape[0]):
        rows.append(A_ub[i] @ T)
        rhs.append(b_ub[i] - A_ub[i] @ offset)
        kinds.append(("ineq", i))
    for k, width in bound_cols:
        row = np.zeros(n_struct)
        row[k] = 1.0
        rows.append(row)
        rhs.append(width)
        kinds.append(("bound", col_var[k][0]))
    m = len(rows)
    n_slack = sum(1 for kind, _ in kinds if kind != "eq")
    A = np.zeros((m, n_struct + n_slack))
    b = np.array(rhs, dtype=float)
    if m:
        A[:, :n_struct] = np.array(rows)
    slack_of_row = {}
    s = n_struct
    for i, (kind, _) in enumerate(kinds):
        if kind != "eq":
            A[i, s] = 1.0
            slack_of_row[i] = s
            col_var.append(None)
            s += 1
    scale = np.ones(m)
    for i in range(m):
        big = np.max(np.abs(A[i])) if A.shape[1] else 0.0
        factor = 1.0 / big if big > 0 else 1.0
        if b[i] < 0:
            factor = -factor
        scale[i] = factor
        A[i] *= factor
        b[i] *= factor
    cs = np.zeros(A.shape[1])
    cs[:n_struct] = c @ T
    return _StdForm(A, b, cs, float(c @ offset), col_var, n_struct, kinds, scale, slack_of_row, offset)


# ---------------------------------------------------------------------------
# simplex


class _Unbounded(Exception):
    def __init__(self, col, column):
        self.col = col
        self.column = column


def _run_simplex(T, basis, cost, allowed):
    """Optimize tableau ``T = [B^-1 A | B^-1 b]`` in place for ``cost`` over ``allowed`` columns."""
    m = T.shape[0]
    d = cost - cost[basis] @ T[:, :-1] if m else cost.copy()
    bland = False
    degenerate = 0
    for _ in range(_MAX_PIVOTS):
        cand = np.where(allowed & (d < -_OPT_TOL))[0]
        if cand.size == 0:
            return d
        if bland:
            j = int(cand[0])
        else:
            j = int(cand[np.argmin(d[cand])])
        col = T[:, j]
        pos = np.where(col > PIVOT_TOL)[0]
        if pos.size == 0:
            raise _Unbounded(j, col.copy())
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        if T[r, -1] / col[r] <= 1e-12:
            degenerate += 1
            if degenerate > _DEGENERATE_SWITCH:
                bland = True
        else:
            degenerate = 0
        _pivot(T, r, j)
        d = d - d[j] * T[r, :-1]
        basis[r] = j
    raise RuntimeError("simplex iteration limit reached")


def _pivot(T, r, j):
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _duals(std, basis, rows, cost):
    """Solve ``B^T y = c_B`` on the kept rows; dropped rows get 0."""
    y = np.zeros(std.A.shape[0])
    if len(rows):
        B = std.A[np.ix_(rows, basis)]
        y[rows] = np.linalg.solve(B.T, cost[basis])
    return y


def solve(lp: LinearProgram) -> LpSolution:
    lp.validate()
    std = _standard_form(lp)
    m, N = std.A.shape
    names = [v.name for v in lp.variables]

    # initial basis: slacks where possible, artificials elsewhere
    basis = []
    art_rows = []
    for i in range(m):
        s = std.slack_of_row.get(i)
        if s is not None and std.A[i, s] > 0:
            basis.append(s)
        else:
            basis.append(None)
            art_rows.append(i)
    n_art = len(art_rows)
    T = np.zeros((m, N + n_art + 1))
    T[:, :N] = std.A
    T[:, -1] = std.b
    for k, i in enumerate(art_rows):
        T[i, N + k] = 1.0
        basis[i] = N + k
    allowed = np.ones(N + n_art, dtype=bool)

    phase1_cost = np.zeros(N + n_art)
    phase1_cost[N:] = 1.0
    if n_art:
        _run_simplex(T, basis, phase1_cost, allowed)
        infeas = float(T[:, -1] @ phase1_cost[basis])
        if infeas > FEAS_TOL * 0.1:
            A_full = np.hstack([std.A, np.zeros((m, n_art))])
            for k, i in enumerate(art_rows):
                A_full[i, N + k] = 1.0
            B = A_full[:, basis]
            y = np.linalg.solve(B.T, phase1_cost[basis])
            cert = _farkas_from_phase1(lp, std, y)
            return _infeasible(lp, names, cert)
    # drive artificials out of the basis; drop redundant rows
    keep = list(range(m))
    for i in range(m):
        if basis[i] >= N:
            row = T[i, :N]
            cand = np.where(np.abs(row) > PIVOT_TOL)[0]
            if cand.size:
                j = int(cand[0])
                _pivot(T, i, j)
                basis[i] = j
            else:
                keep.remove(i)
    T = np.hstack([T[keep][:, :N], T[keep][:, -1:]])
    basis = [basis[i] for i in keep]
    allowed = np.ones(N, dtype=bool)
    try:
        _run_simplex(T, basis, std.c, allowed)
    except _Unbounded as exc:
        dz = np.zeros(N)
        dz[exc.col] = 1.0
        for r, bvar in enumerate(basis):
            dz[bvar] = -exc.column[r]
        ray = np.zeros(lp.n)
        for k, entry in enumerate(std.col_var):
            if entry is not None:
                j, s = entry
                ray[j] += s * dz[k]
        return LpSolution(Status.UNBOUNDED, np.full(lp.n, np.nan), np.full(len(lp.equality_rows), np.nan),
                          np.full(len(lp.inequality_rows), np.nan), np.full(lp.n, np.nan),
                          math.inf if lp.sense is Sense.MAXIMIZE else -math.inf, ray, names)

    z = np.zeros(N)
    z[basis] = T[:, -1]
    z[np.abs(z) < 1e-13] = 0.0
    x = std.offset.copy()
    for k, entry in enumerate(std.col_var):
        if entry is not None:
            j, s = entry
            x[j] += s * z[k]
    y = _duals(std, basis, keep, std.c)
    lam, mu = _map_duals(lp, std, y)
    c, A_eq, b_eq, A_ub, b_ub, lower, upper = lp.arrays()
    c_int = -c if lp.sense is Sense.MAXIMIZE else c
    d = c_int - A_eq.T @ lam + A_ub.T @ mu
    obj = float(c @ x)
    if lp.sense is Sense.MAXIMIZE:
        lam, d = -lam, -d
    mu = np.where(mu < 0, 0.0, mu) if mu.size else mu
    return LpSolution(Status.OPTIMAL, x, lam, mu, d, obj, None, names)


def _map_duals(lp, std, y):
    """Std-row duals -> (d obj/d b_eq, -d obj/d b_ub) of the internal min problem."""
    lam = np.zeros(len(lp.equality_rows))
    mu = np.zeros(len(lp.inequality_rows))
    for i, (kind, orig) in enumerate(std.row_kind):
        val = y[i] * std.row_scale[i]
        if kind == "eq":
            lam[orig] = val
        elif kind == "ineq":
            mu[orig] = -val
    return lam, mu


def _farkas_from_phase1(lp, std, y):
    w_eq = np.zeros(len(lp.equality_rows))
    w_in = np.zeros(len(lp.inequality_rows))
    for i, (kind, orig) in enumerate(std.row_kind):
        val = -y[i] * std.row_scale[i]
        if kind == "eq":
            w_eq[orig] = val
        elif kind == "ineq":
            w_in[orig] = max(val, 0.0)
    return FarkasCertificate(w_eq, w_in)


def _infeasible(lp, names, cert):
    return LpSolution(Status.INFEASIBLE, np.full(lp.n, np.nan), np.full(len(lp.equality_rows), np.nan),
                      np.full(len(lp.inequality_rows), np.nan), np.full(lp.n, np.nan), math.nan, cert, names)


def check_feasible(lp: LinearProgram):
    """Feasibility only; the objective is ignored."""
    probe = lp.copy()
    probe.objective = {}
    probe.sense = Sense.MINIMIZE
    sol = solve(probe)
    if sol.status is Status.INFEASIBLE:
        return Infeasible(sol.certificate)
    return Feasible(sol.primal)


def max_violation(lp, x):
    """Largest absolute violation of any row or bound at ``x``."""
    _, A_eq, b_eq, A_ub, b_ub, lower, upper = lp.arrays()
    worst = 0.0
    if A_eq.size:
        worst = max(worst, float(np.max(np.abs(A_eq @ x - b_eq))))
    if A_ub.size:
        worst = max(worst, float(np.max(A_ub @ x - b_ub, initial=0.0)))
    worst = max(worst, float(np.max(lower - x, initial=0.0)), float(np.max(x - upper, initial=0.0)))
    return worst
