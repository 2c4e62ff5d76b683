"""Distributionally robust optimal control problem over a scenario tree.

The whole problem is one sparse LP. Each tree node carries a state, an input
(non-leaf nodes) and an epigraph scalar for its cost-to-go. Ambiguity sets are
built per node from the learner state *predicted* along the node's history
and from the confidence level propagated to the node's stage, which makes the
tail of an optimal policy feasible for the successor problem.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .chain import TransitionKernel
from .learner import (
    AmbiguitySet,
    ConfidenceVector,
    LearnerState,
    confidence_step,
    empirical_row,
    radius,
)
from .risk import (
    add_dravar_epigraph,
    add_support_epigraph,
    adjusted_alpha,
    dr_avar,
    dr_avar_batch,
    support_function,
    support_function_batch,
)
from .solver import Affine, ConvexProgram, LinearProgramBuilder, Settings, Solution, Status, solve_with
from .tree import DEFAULT_NODE_CAP, ScenarioTree, build_tree

FEAS_TOL = 1e-9
VARIANTS = ("dr", "robust", "nominal")


class InfeasibleOCP(RuntimeError):
    pass


class SolverMaxIter(RuntimeError):
    pass


# -- plant ---------------------------------------------------------------------


def _per_mode(a, d: int, ndim: int, name: str) -> np.ndarray:
    """Broadcast ``a`` to a per-mode stack (leading axis of length ``d``)."""
    a = np.asarray(a, dtype=float)
    if a.ndim == ndim - 1:
        a = np.broadcast_to(a, (d,) + a.shape)
    if a.ndim != ndim or a.shape[0] != d:
        raise ValueError(f"{name}: expected {ndim - 1}-D data or a stack of {d}, got shape {a.shape}")
    return np.array(a)


def _per_pair(a, d: int, tail: tuple, name: str) -> np.ndarray:
    """Broadcast constraint data to shape ``(d, d) + tail``."""
    a = np.asarray(a, dtype=float)
    want = (d, d) + tail
    try:
        return np.array(np.broadcast_to(a, want))
    except ValueError:
        raise ValueError(f"{name}: shape {a.shape} does not broadcast to {want}") from None


@dataclass(frozen=True)
class ChanceConstraint:
    """``g(x, u, w, w') = H[w, w'] x + L[w, w'] u - h[w, w']`` with ``P[g > 0] <= alpha``."""

    H: np.ndarray
    L: np.ndarray
    h: np.ndarray
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"violation rate {self.alpha} outside [0, 1]")

    def values(self, x, u, w: int) -> np.ndarray:
        """``g`` for every successor mode."""
        return self.H[w] @ x + self.L[w] @ u - self.h[w]


@dataclass(frozen=True)
class TerminalSet:
    F: np.ndarray
    f: np.ndarray
    vertices: np.ndarray

    def __post_init__(self):
        slack = self.vertices @ self.F.T - self.f
        if slack.size and slack.max() > 1e-9:
            raise ValueError(f"terminal vertex violates the H-representation by {slack.max():.3g}")

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(self.F @ x <= self.f + tol))


@dataclass(frozen=True)
class PlantModel:
    """Mode-dependent affine plant with l1 costs; successor mode selects the dynamics."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    constraints: tuple[ChanceConstraint, ...]
    terminal: TerminalSet

    def __post_init__(self):
        d, nx = self.A.shape[:2]
        if self.A.shape != (d, nx, nx):
            raise ValueError("A must be a stack of square matrices")
        if self.B.shape[:2] != (d, nx) or self.c.shape != (d, nx):
            raise ValueError("B and c must match A")
        for name in ("Q", "R", "P"):
            M = getattr(self, name)
            cols = self.nu if name == "R" else nx
            if M.ndim != 3 or M.shape[0] != d or M.shape[2] != cols:
                raise ValueError(f"{name} must be a stack of {d} matrices with {cols} columns")
        for g in self.constraints:
            if g.H.shape != (d, d, nx) or g.L.shape != (d, d, self.nu) or g.h.shape != (d, d):
                raise ValueError("constraint data must be given for every mode pair")
        if self.terminal.F.shape[1] != nx:
            raise ValueError("terminal set dimension does not match the state")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def nx(self) -> int:
        return self.A.shape[1]

    @property
    def nu(self) -> int:
        return self.B.shape[2]

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(g.alpha for g in self.constraints)

    def successor(self, x, u, w_next: int) -> np.ndarray:
        return self.A[w_next] @ x + self.B[w_next] @ u + self.c[w_next]

    def stage_cost(self, x, u, w: int) -> float:
        return float(np.abs(self.Q[w] @ x).sum() + np.abs(self.R[w] @ u).sum())

    def terminal_cost(self, x, w: int) -> float:
        return float(np.abs(self.P[w] @ x).sum())

    @classmethod
    def from_dict(cls, data: dict) -> "PlantModel":
        A = np.asarray(data["A"], dtype=float)
        if A.ndim == 2:
            A = A[None]
        d, nx = A.shape[:2]
        B = _per_mode(data["B"], d, 3, "B")
        nu = B.shape[2]
        c = _per_mode(data.get("c", np.zeros(nx)), d, 2, "c")
        cons = []
        for k, g in enumerate(data.get("constraints", [])):
            if "successor" in g:
                # a . x_next <= b, rewritten through the successor dynamics
                a = np.asarray(g["successor"]["a"], dtype=float)
                b = float(g["successor"]["b"])
                H = np.broadcast_to(np.einsum("i,vij->vj", a, A), (d, d, nx))
                L = np.broadcast_to(np.einsum("i,vij->vj", a, B), (d, d, nu))
                h = np.broadcast_to(b - c @ a, (d, d))
            else:
                H = _per_pair(g.get("H", np.zeros(nx)), d, (nx,), f"constraints[{k}].H")
                L = _per_pair(g.get("L", np.zeros(nu)), d, (nu,), f"constraints[{k}].L")
                h = _per_pair(g["h"], d, (), f"constraints[{k}].h")
            cons.append(ChanceConstraint(np.array(H), np.array(L), np.array(h), float(g["alpha"])))
        term = data["terminal"]
        return cls(
            A=A,
            B=B,
            c=c,
            Q=_per_mode(data["Q"], d, 3, "Q"),
            R=_per_mode(data["R"], d, 3, "R"),
            P=_per_mode(data["P"], d, 3, "P"),
            constraints=tuple(cons),
            terminal=TerminalSet(
                np.atleast_2d(np.asarray(term["F"], dtype=float)),
                np.asarray(term["f"], dtype=float),
                np.atleast_2d(np.asarray(term["vertices"], dtype=float)),
            ),
        )

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "c": self.c.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "P": self.P.tolist(),
            "constraints": [
                {"H": g.H.tolist(), "L": g.L.tolist(), "h": g.h.tolist(), "alpha": g.alpha} for g in self.constraints
            ],
            "terminal": {
                "F": self.terminal.F.tolist(),
                "f": self.terminal.f.tolist(),
                "vertices": self.terminal.vertices.tolist(),
            },
        }


@dataclass(frozen=True)
class AugmentedState:
    """Everything the controller knows: plant state, counts, confidences, mode."""

    x: np.ndarray
    s: LearnerState
    beta: ConfidenceVector
    w: int

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        if not 0 <= self.w < self.s.d:
            raise ValueError(f"mode {self.w} outside 0..{self.s.d - 1}")

    def successor(self, x_next, w_next: int) -> "AugmentedState":
        c = self.s.counts.copy()
        c[self.w, w_next] += 1
        return AugmentedState(x_next, LearnerState(c), confidence_step(self.beta), w_next)


# -- per-node risk data ------------------------------------------------------------


@dataclass(frozen=True)
class OcpOptions:
    """How ambiguity is instantiated at the tree nodes.

    ``variant``: ``"dr"`` learned sets, ``"robust"`` whole simplex with
    worst-case constraints, ``"nominal"`` the true kernel rows (needs
    ``kernel``) with untightened levels. ``predict_counts=False`` freezes
    the learner state over the horizon. ``radius_scale`` inflates every dr
    radius (capped at 2).
    """

    variant: str = "dr"
    kernel: TransitionKernel | None = field(default=None, repr=False)
    predict_counts: bool = True
    radius_scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "nominal" and self.kernel is None:
            raise ValueError("the nominal variant needs the true kernel")
        if self.radius_scale < 0:
            raise ValueError("radius_scale must be nonnegative")


@dataclass(frozen=True)
class NodeRisk:
    cost: AmbiguitySet
    constraint_sets: tuple[AmbiguitySet, ...]
    alpha_hats: tuple[float, ...]


def _tightened(alpha: float, beta: float) -> float:
    if alpha == 0.0:
        return 0.0
    return float(adjusted_alpha(alpha, beta))


def node_risks(z: AugmentedState, model: PlantModel, tree: ScenarioTree, opts: OcpOptions) -> list[NodeRisk]:
    """Risk data for every non-leaf node, indexed like ``tree.nonleaf``."""
    d, ng = model.d, len(model.constraints)
    alphas = model.alphas
    if opts.variant == "robust":
        full = AmbiguitySet.simplex(d)
        same = NodeRisk(full, (full,) * ng, (0.0,) * ng)
        return [same for _ in tree.nonleaf]
    if opts.variant == "nominal":
        out = []
        for n in tree.nonleaf:
            row = AmbiguitySet.singleton(opts.kernel.row(int(tree.mode[n])))
            out.append(NodeRisk(row, (row,) * ng, tuple(float(a) for a in alphas)))
        return out

    if len(z.beta) != ng + 1:
        raise ValueError(f"confidence vector has {len(z.beta)} entries, expected {ng + 1}")
    betas = [z.beta]
    for _ in range(1, tree.N):
        betas.append(confidence_step(betas[-1]))
    counts = {0: z.s.counts}
    out = []
    for n in tree.nonleaf:
        w = int(tree.mode[n])
        if n > 0 and opts.predict_counts:
            par = int(tree.parent[n])
            c = counts[par].copy()
            c[int(tree.mode[par]), w] += 1
            counts[n] = c
        s = LearnerState(counts[n]) if opts.predict_counts else z.s
        b = betas[int(tree.stage[n])]
        p_hat = empirical_row(s, w)

        def aset(beta: float) -> AmbiguitySet:
            r = radius(s, w, beta)
            return AmbiguitySet(p_hat, min(2.0, r * opts.radius_scale))

        sets = tuple(aset(b.constraint(i)) for i in range(ng))
        hats = tuple(_tightened(alphas[i], b.constraint(i)) for i in range(ng))
        out.append(NodeRisk(aset(b.cost), sets, hats))
    return out


# -- LP assembly ---------------------------------------------------------------------


@dataclass
class OcpProgram:
    program: ConvexProgram
    tree: ScenarioTree
    risks: list[NodeRisk]
    x_index: dict[int, np.ndarray]
    u_index: dict[int, np.ndarray]
    x_root: np.ndarray


@dataclass
class OcpSolution:
    u0: np.ndarray
    value: float
    inputs: np.ndarray
    states: np.ndarray
    status: Status
    iterations: int
    tree: ScenarioTree = field(repr=False)

    def check_dynamics(self, model: PlantModel) -> float:
        """Largest deviation from ``x_child = A x + B u + c`` over all edges."""
        worst = 0.0
        for n in self.tree.nonleaf:
            for ch in self.tree.children(n):
                pred = model.successor(self.states[n], self.inputs[n], int(self.tree.mode[ch]))
                worst = max(worst, float(np.abs(pred - self.states[ch]).max()))
        return worst


def _linear(M: np.ndarray, v: list[Affine], const=None) -> list[Affine]:
    out = []
    for i, row in enumerate(M):
        e = Affine(None, 0.0 if const is None else float(const[i]))
        for a, vj in zip(row.tolist(), v):
            if a != 0.0:
                e._iadd(vj * a, 1.0)
        out.append(e)
    return out


def _l1(lp: LinearProgramBuilder, M: np.ndarray, v: list[Affine]) -> Affine:
    """Affine upper bound of ``|M v|_1`` that is tight at the LP optimum."""
    total = Affine()
    for e in _linear(M, v):
        if not e.terms:
            total = total + abs(e.const)
            continue
        t = lp.var()
        lp.add_ge(t - e, 0.0)
        lp.add_ge(t + e, 0.0)
        total = total + t
    return total


def _constraint_exprs(g: ChanceConstraint, w: int, x: list[Affine], u: list[Affine]) -> list[Affine]:
    """``g(x, u, w, w')`` for every successor mode ``w'``."""
    return [a + b for a, b in zip(_linear(g.H[w], x, -g.h[w]), _linear(g.L[w], u))]


def assemble(
    z: AugmentedState,
    model: PlantModel,
    N: int,
    opts: OcpOptions | None = None,
    cap: int = DEFAULT_NODE_CAP,
) -> OcpProgram:
    """Sparse LP whose optimal value is the DR cost of the best causal policy."""
    opts = opts or OcpOptions()
    if N < 1:
        raise ValueError("the LP needs a positive horizon; solve_ocp handles N = 0")
    if z.s.d != model.d or len(z.x) != model.nx:
        raise ValueError("augmented state does not match the plant dimensions")
    tree = build_tree(z.w, N, model.d, cap)
    risks = node_risks(z, model, tree, opts)
    lp = LinearProgramBuilder()

    X: dict[int, list[Affine]] = {0: [Affine.const_(float(v)) for v in z.x]}
    U: dict[int, list[Affine]] = {}
    x_index, u_index = {}, {}
    for n in tree.nonleaf:
        U[n] = lp.vars(model.nu)
        u_index[n] = np.array([e.index for e in U[n]])
        for ch in tree.children(n):
            w1 = int(tree.mode[ch])
            X[ch] = lp.vars(model.nx)
            x_index[ch] = np.array([e.index for e in X[ch]])
            dyn = [a + b for a, b in zip(_linear(model.A[w1], X[n], model.c[w1]), _linear(model.B[w1], U[n]))]
            for xc, e in zip(X[ch], dyn):
                lp.add_eq(xc - e, 0.0)

    term = model.terminal
    value: dict[int, Affine] = {}
    for n in reversed(range(tree.n_nodes)):
        w = int(tree.mode[n])
        if tree.is_leaf(n):
            for e, fi in zip(_linear(term.F, X[n]), term.f):
                lp.add_le(e, float(fi))
            value[n] = _l1(lp, model.P[w], X[n])
            continue
        risk = risks[n]
        stage = _l1(lp, model.Q[w], X[n]) + _l1(lp, model.R[w], U[n])
        tau = lp.var()
        add_support_epigraph(lp, risk.cost, [value[ch] for ch in tree.children(n)], tau - stage)
        value[n] = tau
        for g, aset, ah in zip(model.constraints, risk.constraint_sets, risk.alpha_hats):
            add_dravar_epigraph(lp, aset, ah, _constraint_exprs(g, w, X[n], U[n]), 0.0)
    lp.minimize(value[0])
    return OcpProgram(lp.build(), tree, risks, x_index, u_index, z.x.copy())


DEFAULT_SETTINGS = Settings(polish=True)


def solve_program(
    ocp: OcpProgram, model: PlantModel, settings: Settings | None = None, backend: str = "admm", session=None
) -> OcpSolution:
    sol = solve_with(ocp.program, backend, settings or DEFAULT_SETTINGS, session)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleOCP("optimal control problem is infeasible")
    if sol.status is not Status.OPTIMAL:
        raise SolverMaxIter(f"solver stopped with status {sol.status.value} after {sol.iterations} iterations")
    return _extract(ocp, model, sol)


def _extract(ocp: OcpProgram, model: PlantModel, sol: Solution) -> OcpSolution:
    tree = ocp.tree
    states = np.zeros((tree.n_nodes, model.nx))
    states[0] = ocp.x_root
    for n, idx in ocp.x_index.items():
        states[n] = sol.x[idx]
    inputs = np.zeros((len(tree.nonleaf), model.nu))
    for n, idx in ocp.u_index.items():
        inputs[n] = sol.x[idx]
    u0 = inputs[0].copy() if len(inputs) else np.zeros(model.nu)
    return OcpSolution(u0, float(sol.objective), inputs, states, sol.status, sol.iterations, tree)


def solve_ocp(
    z: AugmentedState,
    model: PlantModel,
    N: int,
    opts: OcpOptions | None = None,
    settings: Settings | None = None,
    backend: str = "admm",
    session=None,
) -> OcpSolution:
    if N == 0:
        if not model.terminal.contains(z.x):
            raise InfeasibleOCP("initial state outside the terminal set with zero horizon")
        tree = build_tree(z.w, 0, model.d)
        return OcpSolution(
            np.zeros(model.nu),
            model.terminal_cost(z.x, z.w),
            np.zeros((0, model.nu)),
            z.x[None].copy(),
            Status.OPTIMAL,
            0,
            tree,
        )
    return solve_program(assemble(z, model, N, opts), model, settings, backend, session)


def mpc_law(
    z: AugmentedState,
    model: PlantModel,
    N: int,
    opts: OcpOptions | None = None,
    settings=None,
    backend="admm",
    session=None,
):
    """Root input of an optimal policy, with the full solution for diagnostics."""
    sol = solve_ocp(z, model, N, opts, settings, backend, session)
    return sol.u0, sol


# -- re-evaluation with the exact evaluators ---------------------------------------------


@dataclass(frozen=True)
class PolicyEvaluation:
    value: float
    max_risk: float
    terminal_violation: float


def evaluate_policy(
    z: AugmentedState, model: PlantModel, N: int, inputs, opts: OcpOptions | None = None
) -> PolicyEvaluation:
    """Nested DR cost and worst constraint risk of a tree policy.

    States are simulated from ``inputs`` (one row per non-leaf node), so the
    result does not depend on the LP's own state variables.
    """
    opts = opts or OcpOptions()
    tree = build_tree(z.w, N, model.d)
    risks = node_risks(z, model, tree, opts)
    inputs = np.asarray(inputs, dtype=float).reshape(len(tree.nonleaf), model.nu)
    x = np.zeros((tree.n_nodes, model.nx))
    x[0] = z.x
    for n in tree.nonleaf:
        for ch in tree.children(n):
            x[ch] = model.successor(x[n], inputs[n], int(tree.mode[ch]))
    val = np.zeros(tree.n_nodes)
    worst_risk, worst_term = -np.inf, -np.inf
    for n in reversed(range(tree.n_nodes)):
        w = int(tree.mode[n])
        if tree.is_leaf(n):
            val[n] = model.terminal_cost(x[n], w)
            worst_term = max(worst_term, float(np.max(model.terminal.F @ x[n] - model.terminal.f)))
            continue
        r = risks[n]
        kids = list(tree.children(n))
        val[n] = model.stage_cost(x[n], inputs[n], w) + support_function(r.cost, val[kids])
        for g, aset, ah in zip(model.constraints, r.constraint_sets, r.alpha_hats):
            worst_risk = max(worst_risk, dr_avar(aset, ah, g.values(x[n], inputs[n], w)))
    return PolicyEvaluation(float(val[0]), float(worst_risk), float(worst_term))


# -- expectation-form problem with a known kernel ---------------------------------------


def assemble_stochastic(x0, w0: int, model: PlantModel, kernel: TransitionKernel, N: int) -> OcpProgram:
    """Expected cost over the tree with AVaR constraints under the true kernel.

    Written as a flat sum of probability-weighted stage costs, independently
    of the nested risk recursion used by :func:`assemble`.
    """
    if N < 1:
        raise ValueError("horizon must be positive")
    tree = build_tree(w0, N, model.d)
    lp = LinearProgramBuilder()
    prob = np.zeros(tree.n_nodes)
    prob[0] = 1.0
    X = {0: [Affine.const_(float(v)) for v in np.asarray(x0, dtype=float)]}
    U, x_index, u_index = {}, {}, {}
    objective = Affine()
    for n in range(tree.n_nodes):
        w = int(tree.mode[n])
        if tree.is_leaf(n):
            for e, fi in zip(_linear(model.terminal.F, X[n]), model.terminal.f):
                lp.add_le(e, float(fi))
            objective = objective + prob[n] * _l1(lp, model.P[w], X[n])
            continue
        U[n] = lp.vars(model.nu)
        u_index[n] = np.array([e.index for e in U[n]])
        objective = objective + prob[n] * (_l1(lp, model.Q[w], X[n]) + _l1(lp, model.R[w], U[n]))
        row = kernel.row(w)
        for ch in tree.children(n):
            w1 = int(tree.mode[ch])
            prob[ch] = prob[n] * row[w1]
            X[ch] = lp.vars(model.nx)
            x_index[ch] = np.array([e.index for e in X[ch]])
            nxt = _linear(model.A[w1], X[n], model.c[w1])
            for xc, a, b in zip(X[ch], nxt, _linear(model.B[w1], U[n])):
                lp.add_eq(xc - a - b, 0.0)
        for g in model.constraints:
            xi = _constraint_exprs(g, w, X[n], U[n])
            add_dravar_epigraph(lp, AmbiguitySet.singleton(row), g.alpha, xi, 0.0)
    lp.minimize(objective)
    return OcpProgram(lp.build(), tree, [], x_index, u_index, np.asarray(x0, dtype=float).copy())


# -- grid dynamic programming oracle ---------------------------------------------------


def _interp(axes: list[np.ndarray], V: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``V`` on a rectilinear grid; ``+inf`` outside.

    Corners with zero weight are ignored, so a point on a grid line only
    depends on the values on that line.
    """
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, len(axes))
    lo_idx, wts = [], []
    outside = np.zeros(len(flat), dtype=bool)
    for k, ax in enumerate(axes):
        p = flat[:, k]
        snap = 1e-12 * max(1.0, float(np.abs(ax).max()))
        p = np.where((p < ax[0]) & (p > ax[0] - snap), ax[0], p)
        p = np.where((p > ax[-1]) & (p < ax[-1] + snap), ax[-1], p)
        outside |= (p < ax[0]) | (p > ax[-1])
        i = np.clip(np.searchsorted(ax, p, side="right") - 1, 0, len(ax) - 2)
        t = np.clip((p - ax[i]) / (ax[i + 1] - ax[i]), 0.0, 1.0)
        lo_idx.append(i)
        wts.append(t)
    out = np.zeros(len(flat))
    for corner in itertools.product((0, 1), repeat=len(axes)):
        wt = np.ones(len(flat))
        idx = []
        for k, bit in enumerate(corner):
            wt = wt * (wts[k] if bit else 1.0 - wts[k])
            idx.append(lo_idx[k] + bit)
        vals = V[tuple(idx)]
        out = out + np.where(wt > 0.0, wt * np.where(wt > 0.0, vals, 0.0), 0.0)
        out = np.where((wt > 0.0) & np.isinf(vals), np.inf, out)
    out[outside] = np.inf
    return out.reshape(shape)


def dp_value_grid(
    z: AugmentedState,
    model: PlantModel,
    N: int,
    x_grid,
    u_grid,
    opts: OcpOptions | None = None,
    chunk: int = 256,
) -> float:
    """Optimal value at ``z`` by backward recursion over the scenario tree.

    ``x_grid`` is a list of 1-D axes (one per state coordinate), ``u_grid``
    an array of candidate inputs of shape ``(k, nu)`` or ``(k,)``. Node values
    are tabulated on the grid and interpolated multilinearly; infeasible
    points carry ``+inf``.
    """
    return float(dp_values(z, model, N, x_grid, u_grid, z.x[None], opts, chunk)[0])


def dp_values(
    z: AugmentedState,
    model: PlantModel,
    N: int,
    x_grid,
    u_grid,
    states,
    opts: OcpOptions | None = None,
    chunk: int = 256,
) -> np.ndarray:
    """:func:`dp_value_grid` at every row of ``states``, sharing the tables.

    The tables depend on the learner state, confidences and root mode of
    ``z`` but not on its plant state.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    opts = opts or OcpOptions()
    if model.nx > 2:
        raise ValueError("grid dynamic programming supports at most two state dimensions")
    axes = [np.asarray(a, dtype=float) for a in x_grid]
    if len(axes) != model.nx:
        raise ValueError("one grid axis per state coordinate is required")
    ugrid = np.asarray(u_grid, dtype=float).reshape(-1, model.nu)
    tree = build_tree(z.w, N, model.d)
    risks = node_risks(z, model, tree, opts)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, model.nx)
    term = model.terminal

    def leaf_values(w: int) -> np.ndarray:
        v = np.abs(pts @ model.P[w].T).sum(axis=1)
        ok = np.all(pts @ term.F.T <= term.f + FEAS_TOL, axis=1)
        return np.where(ok, v, np.inf)

    def node_values(x: np.ndarray, n: int, child_tables) -> np.ndarray:
        """Value at the points ``x`` (shape (m, nx)) of non-leaf node ``n``."""
        w = int(tree.mode[n])
        r = risks[n]
        out = np.empty(len(x))
        for a in range(0, len(x), chunk):
            xs = x[a : a + chunk]
            nxt = np.empty((len(xs), len(ugrid), model.d))
            for w1, table in enumerate(child_tables):
                succ = (xs @ model.A[w1].T)[:, None, :] + (ugrid @ model.B[w1].T)[None, :, :] + model.c[w1]
                nxt[..., w1] = _interp(axes, table, succ)
            stage = np.abs(xs @ model.Q[w].T).sum(axis=1)[:, None] + np.abs(ugrid @ model.R[w].T).sum(axis=1)[None, :]
            # every successor must stay in the domain, whatever its probability
            total = np.where(np.isinf(nxt).any(axis=-1), np.inf, stage + support_function_batch(r.cost, nxt))
            for g, aset, ah in zip(model.constraints, r.constraint_sets, r.alpha_hats):
                gx = np.einsum("vj,mj->mv", g.H[w], xs)[:, None, :]
                gu = np.einsum("vj,kj->kv", g.L[w], ugrid)[None, :, :]
                risk = dr_avar_batch(aset, ah, gx + gu - g.h[w])
                total = np.where(risk <= FEAS_TOL, total, np.inf)
            out[a : a + chunk] = total.min(axis=1)
        return out

    shape = tuple(len(a) for a in axes)
    tables: dict[int, np.ndarray] = {}
    for n in reversed(range(1, tree.n_nodes)):
        w = int(tree.mode[n])
        if tree.is_leaf(n):
            tables[n] = leaf_values(w).reshape(shape)
        else:
            kids = [tables.pop(ch) for ch in tree.children(n)]
            tables[n] = node_values(pts, n, kids).reshape(shape)
    if tree.is_leaf(0):
        return np.array([model.terminal_cost(x, z.w) if term.contains(x) else np.inf for x in states])
    kids = [tables.pop(ch) for ch in tree.children(0)]
    return node_values(states, 0, kids)
