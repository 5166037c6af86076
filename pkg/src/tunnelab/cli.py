"""Command-line entry point.

Subcommands map one-to-one onto batch scenarios::

    tunnelab fig3    [--config FILE] [--digits N] [--out DIR] [--paper-scale]
    tunnelab fig4    ...
    tunnelab cut     ...
    tunnelab encode  ...
    tunnelab hartman ...
    tunnelab window  ...

Exit status: 0 when every in-run assertion passed, 1 when any failed, 2 on
configuration or precondition errors.
"""

from __future__ import annotations

import argparse
import sys

from .errors import TunnelabError, ConfigError
from .experiments import build_config, run_scenario

_SUBCOMMANDS = {
    "fig3": "fig3",
    "fig4": "fig4",
    "cut": "cut_pulse",
    "encode": "encode_demo",
    "hartman": "hartman",
    "window": "window_scan",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tunnelab",
        description="Batch experiments on apparently superluminal wave-packet transmission",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenario in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {scenario} scenario")
        p.add_argument("--config", default=None, help="flat key=value parameter file")
        p.add_argument("--digits", default=None,
                       help="working decimal precision (integer or 'auto')")
        p.add_argument("--out", default=None, help="output directory (default runs/<scenario>)")
        p.add_argument("--paper-scale", action="store_true",
                       help="publication-scale parameters (slow; high precision)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    scenario = _SUBCOMMANDS[args.command]
    try:
        cfg = build_config(
            scenario,
            config_path=args.config,
            digits=args.digits,
            out_dir=args.out,
            paper_scale=args.paper_scale,
        )
        manifest = run_scenario(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TunnelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name in sorted(manifest.asserts):
        ok, detail = manifest.asserts[name]
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if detail:
            line += f"  ({detail})"
        print(line)
    print(f"manifest: {manifest.output_dir / 'manifest.txt'}")
    return 0 if manifest.ok else 1


if __name__ == "__main__":
    sys.exit(main())
