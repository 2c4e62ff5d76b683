"""Checks of the terminal ingredients and of the stability constants.

Both checks use the worst-case operator (whole simplex, constraints enforced
for every successor mode). Its feasible inputs are feasible, and its value is
an upper bound, for every learner state and confidence level, so one
certificate covers the whole augmented state space.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .learner import ConfidenceVector, LearnerState, Schedule
from .ocp import AugmentedState, InfeasibleOCP, OcpOptions, PlantModel, SolverMaxIter, solve_ocp

ROBUST = OcpOptions("robust")


def _probe_state(model: PlantModel, x, w: int) -> AugmentedState:
    # learner data is irrelevant under the worst-case operator
    ng = len(model.constraints)
    beta = ConfidenceVector.initial([Schedule(0.0, 2.0)] * (ng + 1))
    return AugmentedState(np.asarray(x, dtype=float), LearnerState.empty(model.d), beta, w)


@dataclass
class RciReport:
    certified: bool
    inconclusive: bool = False
    counterexamples: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def validate_terminal_rci(model: PlantModel, backend: str = "highs") -> RciReport:
    """Certify that every terminal vertex admits an input keeping all successors inside.

    Constraints and successor membership are affine in ``(x, u)``, so convex
    combinations of vertex inputs serve the interior: vertex feasibility
    certifies the whole polytope.
    """
    rep = RciReport(True)
    for v, w in itertools.product(model.terminal.vertices, range(model.d)):
        try:
            solve_ocp(_probe_state(model, v, w), model, 1, ROBUST, backend=backend)
        except InfeasibleOCP:
            rep.certified = False
            rep.counterexamples.append({"vertex": v.tolist(), "mode": w})
        except SolverMaxIter:
            rep.certified = False
            rep.inconclusive = True
    return rep


def terminal_grid(model: PlantModel, per_axis: int = 21) -> np.ndarray:
    """Points of a regular grid over the bounding box of the terminal set that lie inside it."""
    V = model.terminal.vertices
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(V.min(axis=0), V.max(axis=0))]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.nx)
    inside = np.all(pts @ model.terminal.F.T <= model.terminal.f + 1e-12, axis=1)
    return pts[inside]


def box_grid(box, per_axis: int = 21) -> np.ndarray:
    """Regular grid over a box given as ``[[lo, hi], ...]``, one point per row."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in np.asarray(box, dtype=float)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


@dataclass
class LyapunovReport:
    """Sampled (grid) check of the terminal decrease condition, not a proof."""

    kind: str
    points: int
    lyapunov_max_residual: float
    infeasible_points: list[dict]
    c: float
    Vf_max: float
    r: float
    Vbar: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


def stage_cost_constant(model: PlantModel, r: float) -> float:
    """``c`` with ``c |x|^2 <= |Q_w x|_1`` whenever ``|x|^2 <= r``.

    ``|Q x|_1 >= |Q x|_2 >= s_min |x|_2 >= s_min |x|^2 / sqrt(r)``.
    """
    smin = min(np.linalg.svd(Q, compute_uv=False).min() for Q in model.Q)
    return float(smin / np.sqrt(r))


def box_radius(box) -> float:
    """Largest squared Euclidean norm over a box given as ``[[lo, hi], ...]``."""
    box = np.asarray(box, dtype=float)
    return float(np.sum(np.max(box**2, axis=1)))


def validate_lyapunov(
    model: PlantModel,
    grid=None,
    state_box=None,
    horizon: int | None = None,
    value_grid=None,
    backend: str = "highs",
) -> LyapunovReport:
    """Worst-case ``T V_f - V_f`` on a grid in the terminal set, plus bound constants.

    ``state_box`` is the compact region the closed loop lives in (for ``r``
    and ``c``). With ``horizon`` and ``value_grid`` also given, ``Vbar`` is
    the largest worst-case ``horizon``-step value found on ``value_grid``:
    it bounds the MPC value function on the sampled part of its domain.
    """
    grid = terminal_grid(model) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    if len(grid) == 0:
        raise ValueError("empty grid")
    worst = -np.inf
    bad = []
    vf_max = 0.0
    for x, w in itertools.product(grid, range(model.d)):
        vf = model.terminal_cost(x, w)
        vf_max = max(vf_max, vf)
        try:
            tv = solve_ocp(_probe_state(model, x, w), model, 1, ROBUST, backend=backend).value
        except (InfeasibleOCP, SolverMaxIter) as exc:
            bad.append({"x": x.tolist(), "mode": w, "error": type(exc).__name__})
            continue
        worst = max(worst, tv - vf)
    if state_box is None:
        V = model.terminal.vertices
        state_box = np.stack([V.min(axis=0), V.max(axis=0)], axis=1)
    r = box_radius(state_box)
    vbar = None
    if horizon is not None and value_grid is not None:
        vbar = 0.0
        for x, w in itertools.product(np.atleast_2d(value_grid), range(model.d)):
            try:
                v = solve_ocp(_probe_state(model, x, w), model, horizon, ROBUST, backend=backend).value
            except InfeasibleOCP:
                continue
            vbar = max(vbar, v)
    return LyapunovReport(
        kind="sampled grid check",
        points=len(grid) * model.d,
        lyapunov_max_residual=float(worst) if np.isfinite(worst) else float("nan"),
        infeasible_points=bad,
        c=stage_cost_constant(model, r),
        Vf_max=float(vf_max),
        r=r,
        Vbar=vbar,
    )


def lyapunov_ok(rep: LyapunovReport, tol: float = 1e-7) -> bool:
    return not rep.infeasible_points and rep.lyapunov_max_residual <= tol


def dump_report(obj, path):
    with open(path, "w") as fh:
        json.dump(obj.to_json(), fh, indent=2)
