"""Experiment configuration and Monte Carlo verification of the closed loop.

Every statistic in a :class:`VerificationReport` is computed from
:class:`~drmpc.mpc.TrajectoryLog` records plus the configuration, so a report
can be re-derived from saved logs.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
from scipy import stats

from .chain import TransitionKernel, new_kernel, sample_path, transition_counts
from .learner import ConfidenceVector, LearnerState, Schedule, confidence_after
from .mpc import TrajectoryLog, run_closed_loop
from .ocp import VARIANTS, AugmentedState, OcpOptions, PlantModel, solve_ocp
from .validate import LyapunovReport

OUTPUT_ENV = "DRMPC_OUTPUT_DIR"
VIOLATION_TOL = 1e-7

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_numbers = {"type": "array", "items": {"type": "number"}}
_schedule = {
    "type": "object",
    "required": ["b", "q"],
    "properties": {
        "b": {"type": "number", "minimum": 0, "maximum": 1},
        "q": {"type": "number", "exclusiveMinimum": 0},
        "kind": {"enum": ["poly", "exp"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    # plus one of "confidence" or its alias "beta", checked in from_dict
    "required": ["plant", "kernel", "initial", "horizon", "T", "seeds"],
    "properties": {
        "plant": {
            "type": "object",
            "required": ["A", "B", "Q", "R", "P", "terminal"],
            "properties": {
                "constraints": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["alpha"],
                        "properties": {"alpha": {"type": "number", "minimum": 0, "maximum": 1}},
                    },
                },
                "terminal": {
                    "type": "object",
                    "required": ["F", "f", "vertices"],
                    "properties": {"F": _matrix, "f": _numbers, "vertices": _matrix},
                },
            },
        },
        "kernel": _matrix,
        "initial": {
            "type": "object",
            "required": ["x", "w"],
            "properties": {"x": _numbers, "w": {"type": "integer", "minimum": 0}, "counts": _matrix},
        },
        "horizon": {"type": "integer", "minimum": 0},
        "T": {"type": "integer", "minimum": 0},
        "seeds": {
            "oneOf": [
                {"type": "array", "items": {"type": "integer", "minimum": 0}},
                {
                    "type": "object",
                    "required": ["count"],
                    "properties": {
                        "start": {"type": "integer", "minimum": 0},
                        "count": {"type": "integer", "minimum": 0},
                    },
                },
            ]
        },
        "variants": {"type": "array", "items": {"enum": list(VARIANTS)}},
        "confidence": {"oneOf": [_schedule, {"type": "array", "items": _schedule}]},
        "beta": {"oneOf": [_schedule, {"type": "array", "items": _schedule}]},
        "state_box": _matrix,
        "output_dir": {"type": "string"},
        "acknowledge_robust_fallback": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentConfig:
    model: PlantModel
    kernel: TransitionKernel
    x0: np.ndarray
    w0: int
    counts0: np.ndarray
    horizon: int
    T: int
    seeds: tuple[int, ...]
    variants: tuple[str, ...]
    schedules: tuple[Schedule, ...]
    state_box: np.ndarray | None
    output_dir: str
    hash: str
    raw: dict = field(repr=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        named = [k for k in ("confidence", "beta") if k in data]
        if len(named) != 1:
            raise ConfigError("config error at <root>: exactly one of 'confidence' or 'beta' is required")
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {where}: {exc.message}") from None
        try:
            model = PlantModel.from_dict(data["plant"])
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"config error at plant: {exc}") from None
        try:
            kernel = new_kernel(data["kernel"])
        except ValueError as exc:
            raise ConfigError(f"config error at kernel: {exc}") from None
        if kernel.d != model.d:
            raise ConfigError(f"config error at kernel: {kernel.d} modes, plant has {model.d}")
        ini = data["initial"]
        x0 = np.asarray(ini["x"], dtype=float)
        if len(x0) != model.nx:
            raise ConfigError(f"config error at initial/x: expected {model.nx} entries")
        if ini["w"] >= model.d:
            raise ConfigError(f"config error at initial/w: mode {ini['w']} outside 0..{model.d - 1}")
        counts = np.asarray(ini.get("counts", np.zeros((model.d, model.d))), dtype=np.int64)
        if counts.shape != (model.d, model.d):
            raise ConfigError("config error at initial/counts: must be d x d")
        conf = data[named[0]]
        ng = len(model.constraints)
        if isinstance(conf, dict):
            conf = [conf] * (ng + 1)
        if len(conf) != ng + 1:
            raise ConfigError(f"config error at confidence: need 1 or {ng + 1} schedules")
        try:
            schedules = tuple(Schedule(c["b"], c["q"], c.get("kind", "poly")) for c in conf)
        except ValueError as exc:
            raise ConfigError(f"config error at confidence: {exc}") from None
        for i, g in enumerate(model.constraints):
            if g.alpha > 0 and schedules[i + 1].b > g.alpha and not data.get("acknowledge_robust_fallback"):
                raise ConfigError(
                    f"config error at confidence: initial confidence {schedules[i + 1].b} exceeds "
                    f"violation rate {g.alpha} of constraint {i}; set acknowledge_robust_fallback"
                )
        seeds = data["seeds"]
        if isinstance(seeds, dict):
            seeds = list(range(seeds.get("start", 0), seeds.get("start", 0) + seeds["count"]))
        box = data.get("state_box")
        box = None if box is None else np.asarray(box, dtype=float)
        if box is not None and box.shape != (model.nx, 2):
            raise ConfigError("config error at state_box: need one [lo, hi] pair per state")
        return cls(
            model=model,
            kernel=kernel,
            x0=x0,
            w0=int(ini["w"]),
            counts0=counts,
            horizon=int(data["horizon"]),
            T=int(data["T"]),
            seeds=tuple(int(s) for s in seeds),
            variants=tuple(data.get("variants", ["dr"])),
            schedules=schedules,
            state_box=box,
            output_dir=os.environ.get(OUTPUT_ENV, data.get("output_dir", "runs")),
            hash=config_hash(data),
            raw=data,
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def initial_state(self) -> AugmentedState:
        return AugmentedState(self.x0, LearnerState(self.counts0), ConfidenceVector.initial(self.schedules), self.w0)


def reference_config_path() -> Path:
    return Path(__file__).parent / "data" / "reference.json"


def reference_config() -> ExperimentConfig:
    return ExperimentConfig.load(reference_config_path())


# -- per-run statistics -----------------------------------------------------------------


def conditional_violations(log: TrajectoryLog, kernel: TransitionKernel, tol: float = VIOLATION_TOL) -> np.ndarray:
    """``P[g_i > 0 | x_t, w_t]`` at every applied step, shape ``(steps, n_g)``.

    Exact: the logged ``g_i`` values for every successor mode are weighted
    by the true kernel row of the current mode.
    """
    steps = log.transitions
    if not steps:
        return np.zeros((0, 0))
    out = np.zeros((len(steps), len(steps[0].g)))
    for k, r in enumerate(steps):
        row = kernel.row(r.w)
        for i, gi in enumerate(r.g):
            out[k, i] = float(row[np.asarray(gi) > tol].sum())
    return out


def realized_violations(log: TrajectoryLog, tol: float = VIOLATION_TOL) -> np.ndarray:
    """Indicator of ``g_i > 0`` at the realized successor mode, shape ``(steps, n_g)``."""
    steps = log.transitions
    if not steps:
        return np.zeros((0, 0), dtype=bool)
    return np.array([[gi[r.w_next] > tol for gi in r.g] for r in steps], dtype=bool)


def _run(args) -> TrajectoryLog:
    cfg, seed, variant, T = args
    return run_closed_loop(cfg.initial_state(), cfg.model, cfg.kernel, cfg.horizon, T, seed, variant, cfg.hash)


def run_ensemble(cfg: ExperimentConfig, variant: str, seeds, T: int | None = None, workers: int = 1):
    """Closed-loop runs for ``seeds``, returned in seed order."""
    T = cfg.T if T is None else T
    jobs = [(cfg, s, variant, T) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run, jobs, chunksize=4))
    return [_run(j) for j in jobs]


# -- report --------------------------------------------------------------------------


@dataclass
class VariantStats:
    variant: str
    runs: int
    infeasible_seeds: list[int]
    mean_cumulative_cost: float
    mean_sq_norm: list[float]
    decay_ratio: float
    decay_trend: float
    max_conditional_violation: list[float]
    worst_step: list[list[int]]
    violation_rate: list[float]
    violation_ci: list[list[float]]
    left_state_box: list[int]


@dataclass
class VerificationReport:
    config_hash: str
    T: int
    variants: dict[str, VariantStats]
    alphas: list[float]
    bound: dict | None = None
    ordering: dict | None = None
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        return asdict(self)

    def write(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def variant_stats(logs: list[TrajectoryLog], cfg: ExperimentConfig, T: int | None = None) -> VariantStats:
    T = cfg.T if T is None else T
    ng = len(cfg.model.constraints)
    ok = [lg for lg in logs if not lg.failed]
    norms = np.array([lg.squared_norms()[: T + 1] for lg in ok]) if ok else np.zeros((0, T + 1))
    msq = norms.mean(axis=0) if len(ok) else np.full(T + 1, np.nan)
    worst = np.zeros(ng)
    where = [[-1, -1] for _ in range(ng)]
    hits, total = np.zeros(ng, dtype=int), 0
    outside = []
    for lg in logs:
        cv = conditional_violations(lg, cfg.kernel)[:T]
        rv = realized_violations(lg)[:T]
        total += len(rv)
        if len(rv):
            hits += rv.sum(axis=0)
        for i in range(ng):
            if len(cv) and cv[:, i].max() > worst[i]:
                worst[i] = cv[:, i].max()
                where[i] = [lg.seed, int(cv[:, i].argmax())]
        if cfg.state_box is not None:
            x = lg.states
            lo, hi = cfg.state_box[:, 0], cfg.state_box[:, 1]
            if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
                outside.append(lg.seed)
    ci = []
    for i in range(ng):
        if total:
            iv = stats.binomtest(int(hits[i]), total).proportion_ci(0.95)
            ci.append([float(iv.low), float(iv.high)])
        else:
            ci.append([0.0, 1.0])
    trend = decay_trend(msq)
    return VariantStats(
        variant=logs[0].variant if logs else "",
        runs=len(logs),
        infeasible_seeds=[lg.seed for lg in logs if lg.failed],
        mean_cumulative_cost=float(np.mean([_cost(lg, T) for lg in ok])) if ok else float("nan"),
        mean_sq_norm=msq.tolist(),
        decay_ratio=float(msq[-1] / msq[0]) if len(ok) and msq[0] > 0 else float("nan"),
        decay_trend=trend,
        max_conditional_violation=worst.tolist(),
        worst_step=where,
        violation_rate=(hits / max(total, 1)).tolist(),
        violation_ci=ci,
        left_state_box=outside,
    )


def decay_trend(msq, floor: float = 1e-12) -> float:
    """Spearman correlation of ``E|x_t|^2`` with ``t`` while it stays above ``floor * E|x_0|^2``.

    Once the state has converged to round-off level the ranks are noise, so
    that tail is left out.
    """
    msq = np.asarray(msq, dtype=float)
    if len(msq) < 3 or not np.all(np.isfinite(msq)) or msq[0] <= 0:
        return float("nan")
    keep = np.nonzero(msq > floor * msq[0])[0]
    n = int(keep[-1]) + 1 if len(keep) else 1
    if n < 3:
        return -1.0
    return float(stats.spearmanr(np.arange(n), msq[:n]).statistic)


def _cost(log: TrajectoryLog, T: int) -> float:
    return float(sum(r.stage_cost for r in log.transitions[:T]))


def stability_bound(msq: list[float], V0: float, lyap: LyapunovReport, schedule: Schedule, T: int) -> dict:
    """Both sides of ``sum_t E|x_t|^2 <= V0/c + (Vbar/c + r) sum_t beta_t`` for ``t < T``."""
    vbar = lyap.Vbar if lyap.Vbar is not None else lyap.Vf_max
    sum_beta = float(sum(schedule.closed_form(t) for t in range(T)))
    lhs = float(np.sum(msq[:T]))
    rhs = V0 / lyap.c + (vbar / lyap.c + lyap.r) * sum_beta
    return {"lhs": lhs, "rhs": float(rhs), "V0": V0, "c": lyap.c, "Vbar": vbar, "r": lyap.r, "sum_beta": sum_beta}


def paired_ordering(costs: dict[str, np.ndarray], level: float = 0.05) -> dict:
    """One-sided paired t-tests of ``nominal <= dr`` and ``dr <= robust`` on per-seed costs.

    An ordering holds when the mean paired difference is significantly
    positive at ``level``.
    """
    out = {}
    for lo, hi in (("nominal", "dr"), ("dr", "robust")):
        if lo in costs and hi in costs:
            diff = costs[hi] - costs[lo]
            if len(diff) < 2 or np.ptp(diff) == 0.0:
                p = 0.0 if diff.mean() > 0 else 1.0
            else:
                p = float(stats.ttest_1samp(diff, 0.0, alternative="greater").pvalue)
            out[f"{hi}-{lo}"] = {
                "mean_diff": float(diff.mean()),
                "std_diff": float(diff.std(ddof=1)) if len(diff) > 1 else 0.0,
                "p_value": p,
                "holds": bool(p < level),
            }
    return out


def monte_carlo_verify(
    cfg: ExperimentConfig,
    M: int | None = None,
    variants=None,
    lyapunov: LyapunovReport | None = None,
    logs: dict[str, list[TrajectoryLog]] | None = None,
    workers: int = 1,
    decay_threshold: float = 1e-3,
    log_dir=None,
) -> VerificationReport:
    """Run (or reuse) closed-loop ensembles and evaluate the guarantees on them.

    Checks: no infeasible step; exact conditional violation within ``alpha``
    at every step of every run; mean squared norm at ``T`` below
    ``decay_threshold`` times its initial value with a decreasing trend;
    the summation bound of the stability argument (needs ``lyapunov``);
    the cost ordering nominal <= dr <= robust when those variants ran.
    """
    variants = tuple(variants or cfg.variants)
    seeds = cfg.seeds if M is None else tuple(range(M))
    logs = dict(logs or {})
    for v in variants:
        if v not in logs:
            logs[v] = run_ensemble(cfg, v, seeds, workers=workers)
        if log_dir is not None:
            for lg in logs[v]:
                lg.write(Path(log_dir) / "logs")
    alphas = list(cfg.model.alphas)
    rep = VerificationReport(cfg.hash, cfg.T, {}, alphas)
    for v in variants:
        st = variant_stats(logs[v], cfg)
        rep.variants[v] = st
        rep.checks[f"{v}: no infeasible steps"] = not st.infeasible_seeds
        rep.checks[f"{v}: conditional violation within alpha"] = all(
            st.max_conditional_violation[i] <= a + 1e-12 for i, a in enumerate(alphas)
        )
        rep.checks[f"{v}: mean-square decay"] = bool(st.decay_ratio <= decay_threshold and st.decay_trend < 0)
        if cfg.state_box is not None:
            rep.checks[f"{v}: states stay in the state box"] = not st.left_state_box
    if "dr" in variants and lyapunov is not None and rep.variants["dr"].runs:
        V0 = solve_ocp(cfg.initial_state(), cfg.model, cfg.horizon, OcpOptions("dr"), backend="highs").value
        rep.bound = stability_bound(rep.variants["dr"].mean_sq_norm, V0, lyapunov, cfg.schedules[0], cfg.T)
        rep.checks["dr: stability summation bound"] = rep.bound["lhs"] <= rep.bound["rhs"]
    costs = {
        v: np.array([_cost(lg, cfg.T) for lg in logs[v]]) for v in variants if not rep.variants[v].infeasible_seeds
    }
    if len(costs) > 1:
        rep.ordering = paired_ordering(costs)
        for name, res in rep.ordering.items():
            rep.checks[f"ordering {name} > 0"] = res["holds"]
    return rep


# -- conservatism gap along the learning process -------------------------------------------


def gap_trend(cfg: ExperimentConfig, checkpoints, seeds, x=None) -> dict:
    """Mean ``V_dr - V_nominal`` at a fixed plant state over learner states reached at ``checkpoints``.

    The learner state depends on the mode path only, which every variant
    shares for a given seed, so it is replayed from the chain directly.
    """
    x = cfg.x0 if x is None else np.asarray(x, dtype=float)
    checkpoints = sorted(int(t) for t in checkpoints)
    nominal = OcpOptions("nominal", kernel=cfg.kernel)
    gaps = np.zeros((len(seeds), len(checkpoints)))
    for a, seed in enumerate(seeds):
        path = sample_path(cfg.kernel, cfg.w0, checkpoints[-1], seed).modes
        for b, t in enumerate(checkpoints):
            counts = cfg.counts0 + transition_counts(path[: t + 1], cfg.model.d)
            beta = confidence_after(ConfidenceVector.initial(cfg.schedules), t)
            z = AugmentedState(x, LearnerState(counts), beta, int(path[t]))
            v_dr = solve_ocp(z, cfg.model, cfg.horizon, OcpOptions("dr"), backend="highs").value
            v_nom = solve_ocp(z, cfg.model, cfg.horizon, nominal, backend="highs").value
            gaps[a, b] = v_dr - v_nom
    mean = gaps.mean(axis=0)
    rho = float(stats.spearmanr(checkpoints, mean).statistic) if len(checkpoints) > 2 else float("nan")
    return {"checkpoints": checkpoints, "mean_gap": mean.tolist(), "spearman": rho, "gaps": gaps.tolist()}
