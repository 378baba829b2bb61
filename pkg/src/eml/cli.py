"""Command line entry point: ``eml <subcommand> --config FILE [--out DIR] [--seed N] [--threads N]``.

Exit codes: 0 success, 2 configuration error, 3 numerical breakdown in a
non-sweep run, 4 inconclusive sweep.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import KINDS, ExperimentSpec, dump_config, load_config, with_seed
from .errors import ConfigError
from .spectral import set_fft_workers

EXIT_OK, EXIT_CONFIG, EXIT_BREAKDOWN, EXIT_INCONCLUSIVE = 0, 2, 3, 4

log = logging.getLogger("eml")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eml", description="Euler-Maxwell spectral experiments")
    p.add_argument("command", choices=KINDS + ("show-config",))
    p.add_argument("--config", help="sectioned key = value file; defaults apply when omitted")
    p.add_argument("--out", help="output directory (overrides [meta] out)")
    p.add_argument("--seed", type=int, help="overrides [meta] seed")
    p.add_argument("--threads", type=int, help="FFT workers, or parallel sweep runs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_spec(args) -> ExperimentSpec:
    spec = load_config(args.config) if args.config else ExperimentSpec()
    if args.command in KINDS:
        spec = replace(spec, kind=args.command)
    if args.seed is not None:
        spec = with_seed(spec, args.seed)
    if args.out is not None:
        spec = replace(spec, out=args.out)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        spec = replace(spec, threads=args.threads)
    return spec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        spec = resolve_spec(args)
    except ConfigError as exc:
        print(f"eml: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "show-config":
        sys.stdout.write(dump_config(spec))
        return EXIT_OK

    from .harness import emit_results, run_experiment

    set_fft_workers(spec.threads)
    try:
        result = run_experiment(spec, spec.out)
    except ConfigError as exc:
        print(f"eml: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = emit_results(result, spec.out, spec)
    log.info("wrote %s", path)
    if spec.kind == "lifespan-sweep":
        return EXIT_INCONCLUSIVE if result.inconclusive else EXIT_OK
    return EXIT_BREAKDOWN if result.breakdown else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
