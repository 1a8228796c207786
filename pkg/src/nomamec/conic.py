"""Small conic-program layer over an interior-point backend.

Programs are built from named scalar variables and affine expressions, with
three cone families: nonnegative/zero rows, second-order cones, and
exponential cones.  Helpers encode the three nonlinear shapes the solvers
need: epigraphs of 2^z, perspectives of 2^(x/y), and 2x2 PSD conditions.

The backend (Clarabel) sits behind :func:`solve`; nothing else in the
package talks to it directly.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

import clarabel

LN2 = math.log(2.0)

# exponential cones need a strictly positive second entry; a tiny floor
# keeps boundary iterates away from y = 0
EXP_Y_FLOOR = 1e-12


class LinearExpr:
    """Affine expression sum_i c_i x_i + const over program variables."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def of(var):
        return LinearExpr({var: 1.0})

    @staticmethod
    def constant(c):
        return LinearExpr({}, c)

    def copy(self):
        return LinearExpr(self.terms, self.const)

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, LinearExpr):
            for v, c in other.terms.items():
                out.terms[v] = out.terms.get(v, 0.0) + c
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinearExpr({v: -c for v, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, LinearExpr) else -float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, scalar):
        s = float(scalar)
        return LinearExpr({v: c * s for v, c in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def value(self, x):
        return self.const + sum(c * x[v] for v, c in self.terms.items())


def var(v):
    return LinearExpr.of(v)


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SolveResult:
    status: SolveStatus
    x: np.ndarray | None
    objective: float
    raw_status: str
    almost: bool = False
    solve_ms: float = 0.0


@dataclass
class SolverSettings:
    feas_tol: float = 1e-9
    gap_abs_tol: float = 1e-10
    gap_rel_tol: float = 1e-10
    max_iter: int = 200
    verbose: bool = False


class ConicProgram:
    """Minimize a linear objective subject to conic constraints."""

    def __init__(self):
        self.names = []
        self.objective = LinearExpr()
        self.eqs = []        # expr == 0
        self.ineqs = []      # expr <= 0
        self.socs = []       # [t, v1, ..., vd]: ||v|| <= t
        self.exps = []       # (a, b, c): b * e^(a/b) <= c, b > 0

    @property
    def n_vars(self):
        return len(self.names)

    def add_var(self, name=None):
        self.names.append(name or f"x{len(self.names)}")
        return len(self.names) - 1

    def add_vars(self, count, prefix):
        return [self.add_var(f"{prefix}{i}") for i in range(count)]

    def minimize(self, expr):
        self.objective = expr.copy()

    def add_eq(self, expr):
        self.eqs.append(expr)

    def add_ineq(self, expr):
        self.ineqs.append(expr)

    def add_soc(self, exprs):
        if len(exprs) < 2:
            raise ValueError("second-order cone needs t and at least one v entry")
        self.socs.append(list(exprs))

    def add_exp(self, a, b, c):
        self.exps.append((a, b, c))
        self.ineqs.append(EXP_Y_FLOOR - b)  # keep the perspective away from 0

    def stats(self):
        return {"vars": self.n_vars, "eqs": len(self.eqs), "ineqs": len(self.ineqs),
                "socs": len(self.socs), "exps": len(self.exps)}

    def to_json(self):
        def enc(e):
            return {"terms": {self.names[v]: c for v, c in e.terms.items()}, "const": e.const}
        return json.dumps({
            "vars": self.names,
            "objective": enc(self.objective),
            "eqs": [enc(e) for e in self.eqs],
            "ineqs": [enc(e) for e in self.ineqs],
            "socs": [[enc(e) for e in block] for block in self.socs],
            "exps": [[enc(e) for e in triple] for triple in self.exps],
        }, indent=2)


# ---------------------------------------------------------------------------
# shape encoders


def encode_pow2_epigraph(prog: ConicProgram, z: LinearExpr, w):
    """Add w >= 2^z for variable index ``w``: exp cone (z ln2, 1, w)."""
    prog.add_exp(z * LN2, LinearExpr.constant(1.0), var(w))


def encode_perspective_pow2(prog: ConicProgram, x: LinearExpr, y: LinearExpr, t):
    """Add t >= y * 2^(x/y) for variable index ``t`` (y > 0)."""
    prog.add_exp(x * LN2, y, var(t))


def encode_lmi2x2(prog: ConicProgram, z: LinearExpr, tau: LinearExpr, u: LinearExpr):
    """Add [[z, u], [u, tau]] >= 0 (PSD) as ||(2u, z - tau)|| <= z + tau.

    The second-order form already forces z >= 0 and tau >= 0.
    """
    prog.add_soc([z + tau, u * 2.0, z - tau])


# ---------------------------------------------------------------------------
# backend bridge


_STATUS_MAP = {
    "Solved": (SolveStatus.OPTIMAL, False),
    "AlmostSolved": (SolveStatus.OPTIMAL, True),
    "PrimalInfeasible": (SolveStatus.INFEASIBLE, False),
    "AlmostPrimalInfeasible": (SolveStatus.INFEASIBLE, True),
}


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveResult:
    """Hand the program to the interior-point backend and map its verdict."""
    settings = settings or SolverSettings()
    n = prog.n_vars
    q = np.zeros(n)
    for v, c in prog.objective.terms.items():
        q[v] += c

    rows_i, cols, vals, b = [], [], [], []
    cones = []

    def push(expr, sign):
        r = len(b)
        for v, c in expr.terms.items():
            if c != 0.0:
                rows_i.append(r)
                cols.append(v)
                vals.append(sign * c)
        b.append(-sign * expr.const)

    # s = -expr for zero/nonnegative rows, s = +expr inside soc/exp blocks
    for e in prog.eqs:
        push(e, 1.0)
    if prog.eqs:
        cones.append(clarabel.ZeroConeT(len(prog.eqs)))
    for e in prog.ineqs:
        push(e, 1.0)
    if prog.ineqs:
        cones.append(clarabel.NonnegativeConeT(len(prog.ineqs)))
    for block in prog.socs:
        for e in block:
            push(e, -1.0)
        cones.append(clarabel.SecondOrderConeT(len(block)))
    for triple in prog.exps:
        for e in triple:
            push(e, -1.0)
        cones.append(clarabel.ExponentialConeT())

    A = sp.csc_matrix((vals, (rows_i, cols)), shape=(len(b), n))
    P = sp.csc_matrix((n, n))
    cset = clarabel.DefaultSettings()
    cset.verbose = settings.verbose
    cset.max_iter = settings.max_iter
    cset.tol_feas = settings.feas_tol
    cset.tol_gap_abs = settings.gap_abs_tol
    cset.tol_gap_rel = settings.gap_rel_tol

    t0 = time.perf_counter()
    solution = clarabel.DefaultSolver(P, q, A, np.array(b), cones, cset).solve()
    ms = (time.perf_counter() - t0) * 1e3

    raw = str(solution.status)
    status, almost = _STATUS_MAP.get(raw, (SolveStatus.NUMERICAL_FAILURE, False))
    if status is SolveStatus.OPTIMAL:
        x = np.asarray(solution.x, dtype=float)
        return SolveResult(status, x, prog.objective.value(x), raw, almost, ms)
    return SolveResult(status, None, math.nan, raw, almost, ms)


def residuals(prog: ConicProgram, x):
    """Worst violation of each constraint family at a candidate point."""
    out = {"eq": 0.0, "ineq": 0.0, "soc": 0.0, "exp": 0.0}
    for e in prog.eqs:
        out["eq"] = max(out["eq"], abs(e.value(x)))
    for e in prog.ineqs:
        out["ineq"] = max(out["ineq"], e.value(x))
    for block in prog.socs:
        t = block[0].value(x)
        v = math.hypot(*[e.value(x) for e in block[1:]])
        out["soc"] = max(out["soc"], v - t)
    for a, bb, c in prog.exps:
        av, bv, cv = a.value(x), bb.value(x), c.value(x)
        if bv > 0:
            out["exp"] = max(out["exp"], bv * math.exp(av / bv) - cv)
        else:
            out["exp"] = max(out["exp"], -bv, -cv)
    return out
