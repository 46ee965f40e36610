#!/usr/bin/env python3
"""Run every benchmark config that has its data available and emit the tables.

The synthetic benchmark always runs; UCI benchmarks are skipped with a notice
when their raw file is missing (see scripts/fetch_uci.py). Pass --preset
full_data or --preset mlp to run the ablation variants instead.
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from costbench.data import UCI_SPECS, data_dir
from costbench.harness import (
    aggregate,
    apply_preset,
    emit_table,
    parse_config,
    run_experiment,
    write_rows_csv,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--preset", choices=("full_data", "mlp"), default=None)
    parser.add_argument("--workers", type=int, default=2)
    args = parser.parse_args()

    status = 0
    for cfg_path in sorted(CONFIG_DIR.glob("*.cfg")):
        cfg = parse_config(cfg_path)
        if cfg.dataset != "synthetic":
            spec = UCI_SPECS[cfg.dataset]
            raw = data_dir() / spec.dirname / spec.filename
            if not raw.exists():
                print(f"SKIP {cfg.dataset}: {raw} missing (fetch_uci.py)")
                continue
        if args.preset:
            cfg = apply_preset(cfg, args.preset)
        from dataclasses import replace

        cfg = replace(cfg, workers=args.workers)
        print(f"RUN {cfg.dataset}: {cfg.n_seeds} seeds x {len(cfg.losses)} losses")
        rows = run_experiment(cfg)
        write_rows_csv(rows, cfg.rows_csv)
        print(emit_table(aggregate(rows), cfg.table_format, cfg.table_path))
        failed = [r for r in rows if r.failed]
        if failed:
            status = 1
            for r in failed:
                print(f"  cell failed: {r.loss}/seed {r.seed}: {r.failed}")
    return status


if __name__ == "__main__":
    sys.exit(main())
