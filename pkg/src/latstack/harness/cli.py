"""Command-line entry point.

    latstack <map|scaling|scan|design|ray|resonance> --config FILE [options]
    latstack repro <job-name> [options]

Options: --config <path>, --out <dir>, --jobs <n>, --force.
Exit codes: 0 success, 2 validation error, 3 partial failure.
"""

from __future__ import annotations

import argparse
import sys

from . import io
from .jobs import KINDS, NAMED_JOBS, ConfigError, config_from_mapping, named_job, run_job

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARTIAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latstack",
        description="Multilayer atomic-array interface sweeps: analytic, "
                    "coupled-dipole and ray-optics backends.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=None,
                       help="parallel workers for the sweep")
        p.add_argument("--force", action="store_true",
                       help="re-run even when identical outputs exist")

    for kind in KINDS:
        add_common(sub.add_parser(kind, help=f"run a {kind} job"))
    repro = sub.add_parser("repro", help="run a bundled named job")
    repro.add_argument("job", choices=sorted(NAMED_JOBS))
    add_common(repro)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.force:
        overrides["force"] = True
    try:
        if args.command == "repro":
            config = named_job(args.job, **overrides)
        else:
            mapping = io.parse_config(args.config) if args.config else {}
            config = config_from_mapping(args.command, mapping, **overrides)
        manifest = run_job(config)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    name = manifest.get("name", "?")
    if manifest.get("skipped"):
        print(f"{name}: outputs up to date (hash {manifest['hash']}); "
              "use --force to re-run")
    else:
        print(f"{name}: wrote {', '.join(manifest['outputs'])} "
              f"(hash {manifest['hash']})")
    failures = manifest.get("failures", [])
    if failures:
        print(f"{name}: {len(failures)} grid point(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
