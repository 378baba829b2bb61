#!/usr/bin/env python3
"""Run one configured experiment and print a short summary.

    python scripts/run_experiment.py configs/resonance.cfg --out results/resonance
"""
import argparse
import json
import sys

from eml.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()
    from eml.config import load_config

    spec = load_config(args.config)
    out = args.out or spec.out
    code = main([spec.kind, "--config", args.config, "--out", out, "--threads", str(args.threads)])
    with open(f"{out}/result.json") as fh:
        print(json.dumps(json.load(fh)["result"], indent=1, sort_keys=True)[:4000])
    sys.exit(code)
