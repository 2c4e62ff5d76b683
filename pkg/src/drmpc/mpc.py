"""Receding-horizon closed loop: solve, apply, observe the mode, learn."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain import TransitionKernel, rng_for, step_mode
from .ocp import AugmentedState, InfeasibleOCP, OcpOptions, PlantModel, mpc_law
from .solver import HighsSession


@dataclass
class StepRecord:
    t: int
    x: list[float]
    w: int
    beta: list[float]
    feasible: bool
    u: list[float] | None = None
    value: float | None = None
    iterations: int = 0
    stage_cost: float | None = None
    # g_i(x, u, w, w') for every successor mode, one list per constraint
    g: list[list[float]] | None = None
    w_next: int | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class TrajectoryLog:
    seed: int
    variant: str
    config_hash: str = ""
    records: list[StepRecord] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(not r.feasible for r in self.records)

    @property
    def states(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @property
    def modes(self) -> np.ndarray:
        return np.array([r.w for r in self.records])

    @property
    def transitions(self) -> list[StepRecord]:
        """Records whose input was applied and whose successor mode was drawn."""
        return [r for r in self.records if r.w_next is not None]

    def squared_norms(self) -> np.ndarray:
        x = self.states
        return np.einsum("ti,ti->t", x, x)

    def cumulative_cost(self) -> float:
        return float(sum(r.stage_cost for r in self.transitions))

    def stem(self) -> str:
        return f"{self.variant}_seed{self.seed}"

    def write(self, directory) -> tuple[Path, Path]:
        """JSON-lines step log plus a CSV summary, named after variant and seed."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        jl = directory / f"{self.stem()}.jsonl"
        with jl.open("w") as fh:
            head = {"seed": self.seed, "variant": self.variant, "config_hash": self.config_hash}
            fh.write(json.dumps(head) + "\n")
            for r in self.records:
                fh.write(json.dumps(r.to_json()) + "\n")
        cs = directory / f"{self.stem()}.csv"
        with cs.open("w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "x_norm_sq", "value", "feasible"])
            for r, n2 in zip(self.records, self.squared_norms()):
                out.writerow([r.t, repr(float(n2)), "" if r.value is None else repr(r.value), int(r.feasible)])
        return jl, cs

    @classmethod
    def read(cls, path) -> "TrajectoryLog":
        with Path(path).open() as fh:
            head = json.loads(fh.readline())
            recs = [StepRecord(**json.loads(line)) for line in fh if line.strip()]
        return cls(head["seed"], head["variant"], head["config_hash"], recs)


def variant_options(variant: str, kernel: TransitionKernel) -> OcpOptions:
    return OcpOptions(variant, kernel=kernel if variant == "nominal" else None)


def _solve_record(z, t, model, N, opts, backend, session) -> tuple[StepRecord, np.ndarray | None]:
    rec = StepRecord(t, z.x.tolist(), int(z.w), list(z.beta.values), True)
    try:
        u, sol = mpc_law(z, model, N, opts, backend=backend, session=session)
    except InfeasibleOCP as exc:
        rec.feasible = False
        rec.error = str(exc)
        return rec, None
    rec.u = u.tolist()
    rec.value = sol.value
    rec.iterations = sol.iterations
    return rec, u


def closed_loop_step(
    z: AugmentedState,
    model: PlantModel,
    kernel: TransitionKernel,
    N: int,
    rng: np.random.Generator,
    opts: OcpOptions | None = None,
    t: int = 0,
    backend: str = "highs",
    session=None,
) -> tuple[AugmentedState | None, StepRecord]:
    """Apply the MPC law at ``z`` and advance plant, learner and confidences.

    Returns ``(None, record)`` when the problem at ``z`` is infeasible.
    """
    rec, u = _solve_record(z, t, model, N, opts, backend, session)
    if u is None:
        return None, rec
    w1 = step_mode(kernel.row(z.w), rng.random())
    rec.stage_cost = model.stage_cost(z.x, u, z.w)
    rec.g = [g.values(z.x, u, z.w).tolist() for g in model.constraints]
    rec.w_next = int(w1)
    return z.successor(model.successor(z.x, u, w1), w1), rec


def run_closed_loop(
    z0: AugmentedState,
    model: PlantModel,
    kernel: TransitionKernel,
    N: int,
    T: int,
    seed: int,
    variant: str = "dr",
    config_hash: str = "",
    backend: str = "highs",
) -> TrajectoryLog:
    """``T`` closed-loop steps followed by a final solve at ``z_T``.

    The mode draws come from the seed's own stream, so all variants see the
    same uniforms. An infeasible problem ends the run with a failed record.
    """
    opts = variant_options(variant, kernel)
    session = HighsSession() if backend == "highs" else None
    rng = rng_for(seed)
    log = TrajectoryLog(seed, variant, config_hash)
    z = z0
    for t in range(T):
        z, rec = closed_loop_step(z, model, kernel, N, rng, opts, t, backend, session)
        log.records.append(rec)
        if z is None:
            return log
    rec, _ = _solve_record(z, T, model, N, opts, backend, session)
    log.records.append(rec)
    return log
