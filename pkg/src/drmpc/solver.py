"""Sparse LP/QP container and an embedded operator-splitting solver.

Problems have the form::

    minimize    1/2 x'Px + q'x
    subject to  l <= A x <= u

and are solved by ADMM with over-relaxation on the reduced KKT system
(the splitting popularized by OSQP), preceded by Ruiz equilibration.
The factorization of ``P + sigma I + A' diag(rho) A`` is cached and only
recomputed when the step size ``rho`` is adapted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

INF = np.inf


class Affine:
    """Sparse affine expression ``sum_i c_i x_i + const`` over LP variables."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.const = float(const)

    @staticmethod
    def lift(e) -> "Affine":
        return e if isinstance(e, Affine) else Affine(None, float(e))

    @staticmethod
    def const_(c: float) -> "Affine":
        return Affine(None, c)

    @staticmethod
    def sum(items) -> "Affine":
        out = Affine()
        for e in items:
            out = out._iadd(e, 1.0)
        return out

    @property
    def index(self) -> int:
        (i,) = self.terms
        return i

    def _iadd(self, other, sign: float) -> "Affine":
        if isinstance(other, Affine):
            t = self.terms
            for i, c in other.terms.items():
                t[i] = t.get(i, 0.0) + sign * c
            self.const += sign * other.const
        else:
            self.const += sign * float(other)
        return self

    def copy(self) -> "Affine":
        return Affine(dict(self.terms), self.const)

    def __add__(self, other):
        return self.copy()._iadd(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self)._iadd(other, 1.0)

    def __neg__(self):
        return Affine({i: -c for i, c in self.terms.items()}, -self.const)

    def __mul__(self, k):
        k = float(k)
        return Affine({i: k * c for i, c in self.terms.items()}, k * self.const)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def __repr__(self):
        return f"Affine({self.terms}, {self.const})"


@dataclass(frozen=True)
class ConvexProgram:
    n: int
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray
    P: sp.csc_matrix | None = None
    offset: float = 0.0

    def __post_init__(self):
        m = self.A.shape[0]
        if self.A.shape[1] != self.n or len(self.q) != self.n:
            raise ValueError("dimension mismatch between A, q and n")
        if len(self.l) != m or len(self.u) != m:
            raise ValueError("bounds must have one entry per row of A")
        if np.any(self.l > self.u):
            bad = int(np.flatnonzero(self.l > self.u)[0])
            raise ValueError(f"row {bad}: lower bound {self.l[bad]} exceeds upper {self.u[bad]}")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.A.data))):
            raise ValueError("objective and constraint matrix must be finite")
        if self.P is not None and self.P.shape != (self.n, self.n):
            raise ValueError("P must be n x n")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        val = float(self.q @ x) + self.offset
        if self.P is not None:
            val += 0.5 * float(x @ (self.P @ x))
        return val

    def to_json(self) -> dict:
        """Problem dump: ``A`` as COO triplets, infinite bounds as ``null``."""
        A = self.A.tocoo()
        out = {
            "n": self.n,
            "q": self.q.tolist(),
            "A": {"rows": A.row.tolist(), "cols": A.col.tolist(), "vals": A.data.tolist(), "m": self.m},
            "l": [None if not np.isfinite(v) else float(v) for v in self.l],
            "u": [None if not np.isfinite(v) else float(v) for v in self.u],
            "offset": self.offset,
        }
        if self.P is not None:
            P = self.P.tocoo()
            out["P"] = {"rows": P.row.tolist(), "cols": P.col.tolist(), "vals": P.data.tolist()}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ConvexProgram":
        n = int(data["n"])
        a = data["A"]
        A = sp.csc_matrix((a["vals"], (a["rows"], a["cols"])), shape=(a["m"], n))
        P = None
        if data.get("P") is not None:
            p = data["P"]
            P = sp.csc_matrix((p["vals"], (p["rows"], p["cols"])), shape=(n, n))
        return cls(
            n=n,
            q=np.array(data["q"], dtype=float),
            A=A,
            l=np.array([-INF if v is None else v for v in data["l"]], dtype=float),
            u=np.array([INF if v is None else v for v in data["u"]], dtype=float),
            P=P,
            offset=float(data.get("offset", 0.0)),
        )

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


class LinearProgramBuilder:
    """Accumulates variables and rows; ``build`` emits a :class:`ConvexProgram`.

    Finite variable bounds become identity rows of ``A``.
    """

    def __init__(self):
        self.lb: list[float] = []
        self.ub: list[float] = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self._lo: list[float] = []
        self._hi: list[float] = []
        self._obj = Affine()

    @property
    def n(self) -> int:
        return len(self.lb)

    def var(self, lb: float = -INF, ub: float = INF) -> Affine:
        i = len(self.lb)
        self.lb.append(lb)
        self.ub.append(ub)
        return Affine({i: 1.0})

    def vars(self, k: int, lb: float = -INF, ub: float = INF) -> list[Affine]:
        return [self.var(lb, ub) for _ in range(k)]

    def add_row(self, expr: Affine, lo: float, hi: float) -> int:
        r = len(self._lo)
        for i, c in expr.terms.items():
            if c != 0.0:
                self._rows.append(r)
                self._cols.append(i)
                self._vals.append(c)
        self._lo.append(lo - expr.const)
        self._hi.append(hi - expr.const)
        return r

    def add_le(self, expr: Affine, b: float = 0.0) -> int:
        return self.add_row(expr, -INF, b)

    def add_ge(self, expr: Affine, b: float = 0.0) -> int:
        return self.add_row(expr, b, INF)

    def add_eq(self, expr: Affine, b: float = 0.0) -> int:
        return self.add_row(expr, b, b)

    def minimize(self, expr: Affine):
        self._obj = Affine.lift(expr)

    def build(self) -> ConvexProgram:
        n = self.n
        m0 = len(self._lo)
        rows, cols, vals = list(self._rows), list(self._cols), list(self._vals)
        lo, hi = list(self._lo), list(self._hi)
        r = m0
        for i, (a, b) in enumerate(zip(self.lb, self.ub)):
            if a > -INF or b < INF:
                rows.append(r)
                cols.append(i)
                vals.append(1.0)
                lo.append(a)
                hi.append(b)
                r += 1
        A = sp.csc_matrix((vals, (rows, cols)), shape=(r, n))
        q = np.zeros(n)
        for i, c in self._obj.terms.items():
            q[i] += c
        return ConvexProgram(n, q, A, np.array(lo, dtype=float), np.array(hi, dtype=float), None, self._obj.const)


# -- solver ----------------------------------------------------------------------


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class Settings:
    eps_abs: float = 1e-7
    eps_rel: float = 1e-7
    eps_pinf: float = 1e-8
    eps_dinf: float = 1e-8
    max_iter: int = 50_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    scaling: int = 10
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 25
    adaptive_rho_tolerance: float = 5.0
    check_interval: int = 10
    polish: bool = False
    polish_delta: float = 1e-9
    polish_refine_iter: int = 10
    x0: np.ndarray | None = field(default=None, repr=False, compare=False)
    y0: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass
class Solution:
    status: Status
    x: np.ndarray
    y: np.ndarray
    objective: float
    iterations: int
    prim_res: float
    dual_res: float
    polished: bool = False
    certificate: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


RHO_MIN, RHO_MAX, RHO_EQ_SCALE = 1e-6, 1e6, 1e3
DENSE_LIMIT = 200_000
POLISH_START = 1e4
POLISH_GAP_MIN, POLISH_GAP_MAX = 20, 500
# each rho change doubles the wait before the next one and moves rho by at
# most RHO_STEP_MAX, so an oscillating estimate cannot keep resetting the iteration
RHO_INTERVAL_MAX = 3200
RHO_STEP_MAX = 100.0


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if len(v) else 0.0


class _Workspace:
    def __init__(self, prog: ConvexProgram, settings: Settings):
        self.s = settings
        n, m = prog.n, prog.m
        self.n, self.m = n, m
        # tiny problems: dense kernels beat sparse call overhead by a wide margin
        self.dense = n * max(m, 1) <= DENSE_LIMIT
        if self.dense:
            P = prog.P.toarray() if prog.P is not None else np.zeros((n, n))
            A = prog.A.toarray()
        else:
            P = prog.P.tocsc() if prog.P is not None else sp.csc_matrix((n, n))
            A = prog.A.tocsc()
        q = prog.q.astype(float)
        D = np.ones(n)
        E = np.ones(m)
        c = 1.0
        if settings.scaling > 0 and m > 0:
            for _ in range(settings.scaling):
                dn = np.maximum(_col_norms(P), _col_norms(A))
                em = _row_norms(A)
                dn = 1.0 / np.sqrt(np.clip(np.where(dn < 1e-4, 1.0, dn), None, 1e4))
                em = 1.0 / np.sqrt(np.clip(np.where(em < 1e-4, 1.0, em), None, 1e4))
                P = _scale(P, dn, dn)
                A = _scale(A, em, dn)
                q = dn * q
                D *= dn
                E *= em
            g = max(float(np.mean(_col_norms(P))) if n else 0.0, _inf_norm(q))
            g = 1.0 if g < 1e-4 else min(g, 1e4)
            c = 1.0 / g
            P = P * c
            q = q * c
        self.AT = A.T.copy() if self.dense else A.T.tocsc()
        self.P, self.A, self.q = P, A, q
        self.D, self.E, self.c = D, E, c
        self.Dinv, self.Einv = 1.0 / D, 1.0 / E
        self.l = np.where(np.isfinite(prog.l), prog.l * E, -INF)
        self.u = np.where(np.isfinite(prog.u), prog.u * E, INF)
        self.eq = np.isfinite(self.l) & np.isfinite(self.u) & (np.abs(self.u - self.l) < 1e-10)
        self.free = ~np.isfinite(self.l) & ~np.isfinite(self.u)
        self.set_rho(settings.rho)

    def set_rho(self, rho: float):
        self.rho = float(min(max(rho, RHO_MIN), RHO_MAX))
        rv = np.full(self.m, self.rho)
        rv[self.eq] = RHO_EQ_SCALE * self.rho
        rv[self.free] = RHO_MIN
        self.rho_vec = rv
        if self.dense:
            K = self.P + self.s.sigma * np.eye(self.n) + (self.AT * rv) @ self.A
            self.factor = _DenseFactor(K)
        else:
            K = self.P + self.s.sigma * sp.eye(self.n, format="csc") + (self.AT @ sp.diags(rv) @ self.A)
            self.factor = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")


class _DenseFactor:
    def __init__(self, K):
        self.cf = scipy.linalg.cho_factor(K)

    def solve(self, rhs):
        return scipy.linalg.cho_solve(self.cf, rhs, check_finite=False)


def _col_norms(M) -> np.ndarray:
    if isinstance(M, np.ndarray):
        return np.abs(M).max(axis=0) if M.shape[0] else np.zeros(M.shape[1])
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


def _row_norms(M) -> np.ndarray:
    if isinstance(M, np.ndarray):
        return np.abs(M).max(axis=1) if M.shape[1] else np.zeros(M.shape[0])
    return np.asarray(abs(M).max(axis=1).todense()).ravel()


def _scale(M, left, right):
    if isinstance(M, np.ndarray):
        return left[:, None] * M * right[None, :]
    return (sp.diags(left) @ M @ sp.diags(right)).tocsc()


def solve(prog: ConvexProgram, settings: Settings | None = None) -> Solution:
    """Solve ``prog`` by ADMM; never returns a non-converged point as optimal."""
    s = settings or Settings()
    w = _Workspace(prog, s)
    n, m = w.n, w.m
    A, AT, P, q, l, u = w.A, w.AT, w.P, w.q, w.l, w.u

    x = np.zeros(n) if s.x0 is None else np.asarray(s.x0, float) * w.Dinv
    z = np.clip(A @ x, l, u)
    y = np.zeros(m) if s.y0 is None else np.asarray(s.y0, float) * w.Einv * w.c
    alpha, sigma = s.alpha, s.sigma

    prim = dual = INF
    it = 0
    # polish attempts start once residuals are within POLISH_START of the
    # tolerances and are retried with a growing (capped) gap while they fail
    next_polish, polish_gap = 0, POLISH_GAP_MIN
    next_rho, rho_gap = s.adaptive_rho_interval, s.adaptive_rho_interval
    for it in range(1, s.max_iter + 1):
        x_prev, y_prev = x, y
        rhs = sigma * x - q + AT @ (w.rho_vec * z - y)
        xt = w.factor.solve(rhs)
        zt = A @ xt
        x = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        z_new = np.clip(zr + y / w.rho_vec, l, u)
        y = y + w.rho_vec * (zr - z_new)
        z = z_new

        if it % s.check_interval and it != s.max_iter:
            continue

        Ax = A @ x
        Px = P @ x
        ATy = AT @ y
        prim = _inf_norm(w.Einv * (Ax - z))
        dual = _inf_norm(w.Dinv * (Px + q + ATy)) / w.c
        eps_p = s.eps_abs + s.eps_rel * max(_inf_norm(w.Einv * Ax), _inf_norm(w.Einv * z))
        eps_d = (
            s.eps_abs + s.eps_rel * max(_inf_norm(w.Dinv * Px), _inf_norm(w.Dinv * ATy), _inf_norm(w.Dinv * q)) / w.c
        )

        if s.polish and it >= next_polish and max(prim / eps_p, dual / eps_d) < POLISH_START:
            pol = _polish(w, x, z, y, s)
            if pol is not None:
                return _finish(prog, w, Status.OPTIMAL, *pol, it, polished=True)
            next_polish = it + polish_gap
            polish_gap = min(2 * polish_gap, POLISH_GAP_MAX)

        if prim <= eps_p and dual <= eps_d:
            if s.polish:
                pol = _polish(w, x, z, y, s)
                if pol is not None:
                    return _finish(prog, w, Status.OPTIMAL, *pol, it, polished=True)
            return _finish(prog, w, Status.OPTIMAL, x, y, prim, dual, it)

        cert = _primal_infeasible(w, y - y_prev, s.eps_pinf)
        if cert is not None:
            sol = _finish(prog, w, Status.INFEASIBLE, x, y, prim, dual, it)
            sol.certificate = cert
            return sol
        if prim <= eps_p and _dual_infeasible(w, x - x_prev, s.eps_dinf):
            return _finish(prog, w, Status.UNBOUNDED, x, y, prim, dual, it)

        if s.adaptive_rho and it >= next_rho:
            next_rho = it + rho_gap
            pn = _inf_norm(Ax - z) / max(_inf_norm(Ax), _inf_norm(z), 1e-10)
            dn = _inf_norm(Px + q + ATy) / max(_inf_norm(Px), _inf_norm(ATy), _inf_norm(q), 1e-10)
            new_rho = w.rho * math.sqrt(pn / max(dn, 1e-20))
            if new_rho > s.adaptive_rho_tolerance * w.rho or new_rho < w.rho / s.adaptive_rho_tolerance:
                w.set_rho(min(max(new_rho, w.rho / RHO_STEP_MAX), w.rho * RHO_STEP_MAX))
                rho_gap = min(2 * rho_gap, RHO_INTERVAL_MAX)
                next_rho = it + rho_gap

    return _finish(prog, w, Status.MAX_ITER, x, y, prim, dual, it)


def _finish(prog, w, status, x, y, prim, dual, it, polished=False) -> Solution:
    xs = w.D * x
    ys = w.E * y / w.c
    obj = prog.objective(xs) if status is not Status.INFEASIBLE else INF
    if status is Status.UNBOUNDED:
        obj = -INF
    return Solution(status, xs, ys, obj, it, prim, dual, polished)


def _primal_infeasible(w: _Workspace, dy: np.ndarray, eps: float):
    dy = dy.copy()
    dy[~np.isfinite(w.u)] = np.minimum(dy[~np.isfinite(w.u)], 0.0)
    dy[~np.isfinite(w.l)] = np.maximum(dy[~np.isfinite(w.l)], 0.0)
    norm = _inf_norm(w.E * dy)
    if norm <= eps:
        return None
    dy = dy / norm
    pos, neg = dy > 0, dy < 0
    support = float(w.u[pos] @ dy[pos]) + float(w.l[neg] @ dy[neg])
    if support < -eps and _inf_norm(w.Dinv * (w.AT @ dy)) < eps:
        return w.E * dy
    return None


def _dual_infeasible(w: _Workspace, dx: np.ndarray, eps: float) -> bool:
    norm = _inf_norm(w.D * dx)
    if norm <= eps:
        return False
    dx = dx / norm
    if float(w.q @ dx) >= -eps * w.c:
        return False
    if _inf_norm(w.Dinv * (w.P @ dx)) >= eps * w.c:
        return False
    Adx = w.Einv * (w.A @ dx)
    if np.any((np.isfinite(w.u)) & (Adx > eps)) or np.any((np.isfinite(w.l)) & (Adx < -eps)):
        return False
    return True


def _polish(w: _Workspace, x, z, y, s: Settings):
    """Active-set refinement: solve the KKT system on the guessed active rows."""
    low = (z - w.l < -y) & np.isfinite(w.l)
    upp = (w.u - z < y) & np.isfinite(w.u)
    upp &= ~low | w.eq
    low &= ~upp
    act = np.flatnonzero(low | upp)
    b = np.where(low[act], w.l[act], w.u[act])
    n, k = w.n, len(act)
    delta = s.polish_delta
    reg = np.r_[np.full(n, delta), np.full(k, -delta)]
    rhs = np.r_[-w.q, b]
    if w.dense:
        Ar = w.A[act]
        K = np.block([[w.P, Ar.T], [Ar, np.zeros((k, k))]])
        try:
            lu = scipy.linalg.lu_factor(K + np.diag(reg), check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            return None
        solve_k = lambda r: scipy.linalg.lu_solve(lu, r, check_finite=False)  # noqa: E731
    else:
        Ar = w.A[act]
        K = sp.bmat([[w.P, Ar.T], [Ar, sp.csc_matrix((k, k))]], format="csc")
        try:
            solve_k = spla.splu((K + sp.diags(reg)).tocsc()).solve
        except RuntimeError:
            return None
    # refinement started from the ADMM iterate stays near its (sign-correct)
    # dual when the active set is degenerate
    with np.errstate(all="ignore"):
        sol = np.r_[x, y[act]]
        for _ in range(s.polish_refine_iter):
            sol = sol + solve_k(rhs - K @ sol)
    if not np.all(np.isfinite(sol)):
        return None
    xp = sol[:n]
    yp = np.zeros(w.m)
    yp[act] = sol[n:]
    # dual sign consistency with the active side
    tol = 1e-9 * max(1.0, _inf_norm(yp))
    if np.any(yp[low & ~w.eq] > tol) or np.any(yp[upp & ~w.eq] < -tol):
        return None
    Ax = w.A @ xp
    zp = np.clip(Ax, w.l, w.u)
    prim = _inf_norm(w.Einv * (Ax - zp))
    Px = w.P @ xp
    ATy = w.AT @ yp
    dual = _inf_norm(w.Dinv * (Px + w.q + ATy)) / w.c
    eps_p = s.eps_abs + s.eps_rel * max(_inf_norm(w.Einv * Ax), _inf_norm(w.Einv * zp))
    eps_d = s.eps_abs + s.eps_rel * max(_inf_norm(w.Dinv * Px), _inf_norm(w.Dinv * ATy), _inf_norm(w.Dinv * w.q)) / w.c
    if prim <= eps_p and dual <= eps_d:
        return xp, yp, prim, dual
    return None


FEASIBILITY_TOL = 1e-9


class HighsSession:
    """HiGHS (through ``highspy``) with the last optimal basis kept for warm starts.

    Consecutive closed-loop problems share their sparsity pattern, so the
    previous basis is usually a few pivots from optimal. A basis is only
    reused when the problem dimensions match.
    """

    def __init__(self):
        import highspy

        self._hp = highspy
        self.highs = highspy.Highs()
        self.highs.setOptionValue("output_flag", False)
        # well below the 1e-7 threshold used when logged constraint values are classified
        self.highs.setOptionValue("primal_feasibility_tolerance", FEASIBILITY_TOL)
        self.highs.setOptionValue("dual_feasibility_tolerance", FEASIBILITY_TOL)
        self._basis = None
        self._shape = None

    def _load(self, prog: ConvexProgram):
        hp = self._hp
        inf = hp.kHighsInf
        lp = hp.HighsLp()
        A = prog.A.tocsc()
        lp.num_col_ = prog.n
        lp.num_row_ = prog.m
        lp.col_cost_ = np.asarray(prog.q, dtype=float)
        lp.col_lower_ = np.full(prog.n, -inf)
        lp.col_upper_ = np.full(prog.n, inf)
        lp.row_lower_ = np.where(np.isfinite(prog.l), prog.l, -inf)
        lp.row_upper_ = np.where(np.isfinite(prog.u), prog.u, inf)
        lp.a_matrix_.format_ = hp.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        self.highs.passModel(lp)

    def _run(self, prog: ConvexProgram, warm: bool):
        self._load(prog)
        if warm and self._basis is not None and self._shape == (prog.n, prog.m):
            self.highs.setBasis(self._basis)
        self.highs.run()
        return self.highs.getModelStatus()

    def solve(self, prog: ConvexProgram) -> Solution:
        if prog.P is not None and prog.P.nnz:
            raise ValueError("the HiGHS backend only handles linear objectives")
        MS = self._hp.HighsModelStatus
        status = self._run(prog, warm=True)
        if status not in (MS.kOptimal, MS.kInfeasible):
            # a stale basis or presolve ambiguity: retry from scratch without presolve
            self.highs.setOptionValue("presolve", "off")
            status = self._run(prog, warm=False)
            self.highs.setOptionValue("presolve", "choose")
        info = self.highs.getInfo()
        it = int(info.simplex_iteration_count)
        n = prog.n
        if status == MS.kInfeasible:
            return Solution(Status.INFEASIBLE, np.full(n, np.nan), np.zeros(prog.m), INF, it, INF, INF)
        if status == MS.kUnbounded:
            return Solution(Status.UNBOUNDED, np.full(n, np.nan), np.zeros(prog.m), -INF, it, INF, INF)
        if status != MS.kOptimal:
            return Solution(Status.MAX_ITER, np.full(n, np.nan), np.zeros(prog.m), np.nan, it, INF, INF)
        sol = self.highs.getSolution()
        self._basis = self.highs.getBasis()
        self._shape = (prog.n, prog.m)
        x = np.array(sol.col_value, dtype=float)
        # HiGHS row duals are gradients of the objective; ``solve`` uses the opposite sign
        y = -np.array(sol.row_dual, dtype=float)
        Ax = prog.A @ x
        prim = _inf_norm(np.maximum(Ax - prog.u, 0.0) + np.maximum(prog.l - Ax, 0.0))
        dual = _inf_norm(prog.q + prog.A.T @ y)
        return Solution(Status.OPTIMAL, x, y, prog.objective(x), it, prim, dual)


def solve_highs(prog: ConvexProgram, session: HighsSession | None = None) -> Solution:
    """Solve an LP with HiGHS; same result type as :func:`solve`.

    Used where thousands of small LPs are solved in a loop; pass a
    :class:`HighsSession` to warm-start from the previous solve.
    """
    return (session or HighsSession()).solve(prog)


BACKENDS = ("admm", "highs")


def solve_with(prog: ConvexProgram, backend: str = "admm", settings: Settings | None = None, session=None) -> Solution:
    if backend == "admm":
        return solve(prog, settings)
    if backend == "highs":
        return solve_highs(prog, session)
    raise ValueError(f"unknown solver backend {backend!r}; expected one of {BACKENDS}")


class Feasibility(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INCONCLUSIVE = "inconclusive"


def feasibility(prog: ConvexProgram, settings: Settings | None = None, backend: str = "admm") -> Feasibility:
    zero = replace(prog, q=np.zeros(prog.n), P=None)
    sol = solve_with(zero, backend, settings)
    if sol.status is Status.OPTIMAL:
        return Feasibility.FEASIBLE
    if sol.status is Status.INFEASIBLE:
        return Feasibility.INFEASIBLE
    return Feasibility.INCONCLUSIVE
