"""Command line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 a guarantee check
failed (infeasible problem, uncertified terminal set, failed report check).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import risk
from .chain import sample_path, transition_counts
from .harness import ConfigError, ExperimentConfig, monte_carlo_verify, reference_config_path
from .learner import AmbiguitySet
from .mpc import run_closed_loop
from .validate import box_grid, lyapunov_ok, validate_lyapunov, validate_terminal_rci

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for guarantee violations here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _out_dir(cfg: ExperimentConfig, sub: str = "") -> Path:
    d = Path(cfg.output_dir) / sub if sub else Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _dump(obj, path: Path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
    print(f"wrote {path}")


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    T = cfg.T if args.T is None else args.T
    path = sample_path(cfg.kernel, cfg.w0, T, args.seed)
    counts = transition_counts(path.modes, cfg.kernel.d)
    out = _out_dir(cfg) / f"chain_seed{args.seed}.json"
    _dump({"seed": args.seed, "config_hash": cfg.hash, "modes": path.modes.tolist(), "counts": counts.tolist()}, out)
    return EXIT_OK


def cmd_mpc_run(cfg: ExperimentConfig, args) -> int:
    T = cfg.T if args.T is None else args.T
    log = run_closed_loop(
        cfg.initial_state(), cfg.model, cfg.kernel, cfg.horizon, T, args.seed, args.variant, cfg.hash, args.backend
    )
    for p in log.write(_out_dir(cfg, "logs")):
        print(f"wrote {p}")
    if log.failed:
        bad = next(r for r in log.records if not r.feasible)
        print(f"infeasible problem at t={bad.t}: {bad.error}", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"{args.variant} seed {args.seed}: cost {log.cumulative_cost():.6g}, |x_T|^2 {log.squared_norms()[-1]:.3g}")
    return EXIT_OK


def _lyapunov(cfg: ExperimentConfig, per_axis: int):
    grid = box_grid(cfg.state_box, per_axis) if cfg.state_box is not None and per_axis > 0 else None
    return validate_lyapunov(cfg.model, state_box=cfg.state_box, horizon=cfg.horizon, value_grid=grid)


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    raw = dict(cfg.raw)
    if args.T is not None:
        raw["T"] = args.T
    if args.runs is not None:
        raw["seeds"] = list(range(args.runs))
    if raw != cfg.raw:
        cfg = ExperimentConfig.from_dict(raw)
    lyap = _lyapunov(cfg, args.vbar_grid)
    rep = monte_carlo_verify(
        cfg, variants=args.variant or cfg.variants, lyapunov=lyap, workers=args.workers, log_dir=cfg.output_dir
    )
    _dump(rep.to_json(), _out_dir(cfg) / "report.json")
    for name, ok in rep.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def cmd_validate_terminal(cfg: ExperimentConfig, args) -> int:
    rci = validate_terminal_rci(cfg.model)
    lyap = _lyapunov(cfg, args.vbar_grid)
    ok = rci.certified and lyapunov_ok(lyap)
    report = {"config_hash": cfg.hash, "rci": rci.to_json(), "lyapunov": lyap.to_json(), "certified": ok}
    _dump(report, _out_dir(cfg) / "terminal_report.json")
    print(f"rci certified: {rci.certified}; decrease residual: {lyap.lyapunov_max_residual:.3g}")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_risk_eval(args) -> int:
    text = args.input
    try:
        data = json.loads(Path(text).read_text() if Path(text).is_file() else text)
        p_hat = np.asarray(data["p_hat"], dtype=float)
        aset = AmbiguitySet(p_hat, float(data["r"]))
        alpha_hat = float(data["alpha_hat"])
        xi = np.asarray(data["xi"], dtype=float)
        if xi.shape != p_hat.shape:
            raise ValueError("xi and p_hat differ in length")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"risk-eval: bad input: {exc}") from None
    out = {
        "support_function": risk.support_function(aset, xi),
        "avar": risk.avar(p_hat, alpha_hat, xi),
        "dr_avar": risk.dr_avar(aset, alpha_hat, xi),
    }
    print(json.dumps(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="drmpc", description="Learning-based distributionally robust MPC experiments.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(p):
        p.add_argument(
            "config", nargs="?", default=str(reference_config_path()), help="JSON config (default: shipped reference)"
        )
        p.add_argument("--T", type=int, default=None, help="override the number of closed-loop steps")

    p = sub.add_parser("simulate", help="sample a mode path of the chain")
    with_config(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("mpc-run", help="one closed-loop run")
    with_config(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=["dr", "nominal", "robust"], default="dr")
    p.add_argument("--backend", choices=["highs", "admm"], default="highs")

    p = sub.add_parser("verify", help="Monte Carlo verification of the closed-loop guarantees")
    with_config(p)
    p.add_argument("--runs", type=int, default=None, help="number of seeds (default: from config)")
    p.add_argument("--variant", action="append", choices=["dr", "nominal", "robust"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--vbar-grid", type=int, default=21, help="points per axis for the value bound, 0 to skip")

    p = sub.add_parser("validate-terminal", help="certify the terminal set and cost")
    with_config(p)
    p.add_argument("--vbar-grid", type=int, default=0, help="points per axis for the value bound, 0 to skip")

    p = sub.add_parser("risk-eval", help="evaluate the three risk measures on one input")
    p.add_argument("input", help='JSON text or file with keys "p_hat", "r", "alpha_hat", "xi"')
    return ap


COMMANDS = {
    "simulate": cmd_simulate,
    "mpc-run": cmd_mpc_run,
    "verify": cmd_verify,
    "validate-terminal": cmd_validate_terminal,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "risk-eval":
            return cmd_risk_eval(args)
        cfg = ExperimentConfig.load(args.config)
        if args.T is not None and args.T < 0:
            raise UsageError("--T must be nonnegative")
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE


run_cli = main


if __name__ == "__main__":
    sys.exit(main())
