"""Command-line entry point.

Subcommands: converge, divisor, identities, simulate, norm.  Configuration
comes from a plain-text key = value file (--config); individual keys can be
overridden with repeated --set key=value flags.  The MACHFLOW_THREADS
environment variable caps the sweep worker count.
"""

import argparse
import json
import sys

from .besov import NormSpec, norm
from .harness import (
    ExperimentConfig,
    divisor_artifacts,
    emit,
    run_converge,
    run_divisor,
    run_identities,
    run_simulate,
)
from .lattice import load_snapshot


def _load_config(args):
    cfg = (
        ExperimentConfig.from_file(args.config)
        if args.config
        else ExperimentConfig()
    )
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if args.outdir:
        overrides["outdir"] = args.outdir
    return cfg.with_overrides(overrides)


def _common(sub):
    sub.add_argument("--config", help="plain-text key = value config file")
    sub.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    sub.add_argument("-o", "--outdir", help="output directory")


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="machflow",
        description="low-Mach-number flow laboratory on the anisotropic torus",
    )
    subs = ap.add_subparsers(dest="command", required=True)

    for name in ("converge", "divisor", "identities", "simulate"):
        _common(subs.add_parser(name))
    np_ = subs.add_parser("norm", help="evaluate a norm on a field snapshot")
    np_.add_argument("snapshot")
    np_.add_argument("--family", default="H")
    np_.add_argument("--s", type=float, default=0.0)
    np_.add_argument("--t", type=float, default=None)
    np_.add_argument("--eta", type=float, default=None)
    args = ap.parse_args(argv)

    if args.command == "norm":
        f = load_snapshot(args.snapshot)
        kw = {}
        if args.t is not None:
            kw["t"] = args.t
        if args.eta is not None:
            kw["eta"] = args.eta
        value = norm(f, NormSpec(args.family, s=args.s, **kw))
        print(f"{value:.17g}")
        return 0

    config = _load_config(args)
    if args.command == "converge":
        table = run_converge(config)
        paths = emit({"converge": table}, config.outdir)
        print(json.dumps({"slopes": table.slopes, "flags": table.flags},
                         indent=2, default=str))
    elif args.command == "divisor":
        result = run_divisor(config)
        artifacts = {"divisor": divisor_artifacts(result)}
        artifacts["divisor_fits"] = {
            "two_wave_fit": result["two_wave"]["fit"],
            "three_wave_fit": result["three_wave"]["fit"],
            "pooled_sampled_fit": result["pooled_sampled_fit"],
            "sigma_bound": result["sigma_bound"],
        }
        paths = emit(artifacts, config.outdir)
        print(json.dumps(artifacts["divisor_fits"], indent=2, default=str))
    elif args.command == "identities":
        report = run_identities(config)
        paths = emit({"identities": report}, config.outdir)
        print(json.dumps(report, indent=2))
        if not report["all_pass"]:
            return 1
    elif args.command == "simulate":
        result = run_simulate(config)
        paths = emit({"series": {k: result[k] for k in ("columns", "rows")}},
                     config.outdir)
        print(f"wrote {len(paths)} files to {config.outdir}")
    for p in paths:
        print(p, file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
