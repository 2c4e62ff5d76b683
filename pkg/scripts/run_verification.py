"""Full Monte Carlo verification on a config, plus the conservatism-gap trend.

Writes ``report.json`` (closed-loop checks), ``gap_trend.json`` and the
per-run logs under the config's output directory. Exit code as for
``drmpc verify``.

Usage: ``python scripts/run_verification.py [config] [--runs M] [--workers K]``
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from drmpc.cli import main as cli_main
from drmpc.harness import ExperimentConfig, gap_trend, reference_config_path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default=str(reference_config_path()))
    ap.add_argument("--runs", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--gap-seeds", type=int, default=50)
    ap.add_argument("--checkpoints", type=int, nargs="+", default=[0, 5, 10, 20, 50, 100, 200])
    args = ap.parse_args(argv)

    start = time.perf_counter()
    verify = ["verify", args.config, "--workers", str(args.workers)]
    if args.runs is not None:
        verify += ["--runs", str(args.runs)]
    code = cli_main(verify)

    cfg = ExperimentConfig.load(args.config)
    gap = gap_trend(cfg, args.checkpoints, range(args.gap_seeds))
    out = Path(cfg.output_dir) / "gap_trend.json"
    out.write_text(json.dumps({k: v for k, v in gap.items() if k != "gaps"}, indent=2))
    print(f"gap trend: {[round(g, 4) for g in gap['mean_gap']]}, spearman {gap['spearman']:.2f}")
    print(f"wrote {out}; total {time.perf_counter() - start:.0f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
