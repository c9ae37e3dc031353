"""Command-line experiment runner.

Sweeps write a CSV (and, by default, a matching PNG figure); --verify
runs the decodability oracle and consistency cross-checks instead.
Exit codes: 0 success, 1 verification counterexample, 2 bad config.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .experiments import (
    ConfigError,
    emit_csv,
    load_config,
    preset_config,
    preset_names,
    run_experiment,
    verify_command,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrcache",
        description="Memory-power trade-off curves for cache-aided delivery "
        "of correlated content over a degraded Gaussian broadcast channel.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--preset",
        metavar="NAME",
        help="bundled sweep configuration (fig3, fig4, fig5, fig6)",
    )
    source.add_argument("--config", metavar="PATH", help="sweep configuration file")
    parser.add_argument("--out", metavar="PATH", help="CSV output path")
    parser.add_argument(
        "--verify",
        action="store_true",
        help="run the decodability oracle and cross-checks instead of a sweep",
    )
    parser.add_argument(
        "--no-plot",
        action="store_true",
        help="skip rendering the figure next to the CSV",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.preset:
            cfg = preset_config(args.preset)
        else:
            cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        print(f"available presets: {', '.join(preset_names())}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.verify:
        try:
            return verify_command(cfg)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2

    if not args.out:
        print("config error: --out is required for sweeps", file=sys.stderr)
        return 2
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    try:
        points = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    emit_csv(points, out)
    print(f"wrote {len(points)} sweep points to {out}")
    if not args.no_plot:
        from .plotting import render_curves

        figure = out.with_suffix(".png")
        render_curves(points, cfg, figure)
        print(f"wrote figure to {figure}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
