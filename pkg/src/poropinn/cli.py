"""Command-line interface for running experiments, sweeps and ablations.

Subcommands pick the problem/mode pair; flags override config-file values.
Exit status is nonzero when every realization of any cell failed.
"""

from __future__ import annotations

import argparse
import sys

from . import harness

_PROBLEM_COMMANDS = {
    "forward-diffusivity": ("diffusivity", "forward"),
    "inverse-diffusivity": ("diffusivity", "inverse"),
    "forward-biot": ("biot", "forward"),
    "inverse-biot": ("biot", "inverse"),
}


def _add_common(parser):
    parser.add_argument("--config", default=None, help="INI or JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="base seed")
    parser.add_argument("--realizations", type=int, default=None)
    parser.add_argument("--noise", type=float, default=None,
                        help="noise level epsilon for measurement values")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="concurrent realizations")
    parser.add_argument("--n-b", type=int, default=None,
                        help="boundary/initial training points")
    parser.add_argument("--n-pi", type=int, default=None,
                        help="collocation points")
    parser.add_argument("--n-tr", type=int, default=None,
                        help="interior measurement points")
    parser.add_argument("--hidden-layers", type=int, default=None)
    parser.add_argument("--neurons", type=int, default=None)
    parser.add_argument("--method", default=None,
                        choices=["lbfgs", "adam", "adam_then_lbfgs"])
    parser.add_argument("--max-iterations", type=int, default=None)


def _overrides(args, problem=None, mode=None):
    mapping = {
        "problem": problem,
        "mode": mode,
        "base_seed": args.seed,
        "realizations": args.realizations,
        "noise": args.noise,
        "out_dir": args.out,
        "workers": args.workers,
        "n_b": args.n_b,
        "n_pi": args.n_pi,
        "n_tr": args.n_tr,
        "n_hidden_layers": args.hidden_layers,
        "neurons": args.neurons,
        "method": args.method,
        "max_iterations": args.max_iterations,
    }
    return {k: v for k, v in mapping.items() if v is not None}


def _parse_axis(spec):
    name, _, values = spec.partition("=")
    if not values:
        raise argparse.ArgumentTypeError(f"axis must look like key=v1,v2: {spec!r}")
    parsed = []
    for v in values.split(","):
        try:
            parsed.append(int(v))
        except ValueError:
            try:
                parsed.append(float(v))
            except ValueError:
                parsed.append(v)
    return name.strip(), parsed


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poropinn",
        description="Physics-informed networks for nonlinear diffusivity "
                    "and poroelasticity, forward and inverse.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for command in _PROBLEM_COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} experiment")
        _add_common(p)

    p = sub.add_parser("sweep", help="Cartesian sweep over config axes")
    _add_common(p)
    p.add_argument("--problem", default=None,
                   choices=["diffusivity", "biot"])
    p.add_argument("--mode", default=None, choices=["forward", "inverse"])
    p.add_argument("--axis", action="append", default=[],
                   help="sweep axis, e.g. --axis n_b=24,96 (repeatable)")

    p = sub.add_parser("ablate", help="paired runs with and without the "
                                      "residual regularization terms")
    _add_common(p)
    p.add_argument("--problem", default=None,
                   choices=["diffusivity", "biot"])
    return parser


def _exit_code(records):
    return 1 if records and all(r["failed"] for r in records) else 0


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command in _PROBLEM_COMMANDS:
        problem, mode = _PROBLEM_COMMANDS[args.command]
        cfg = harness.load_config(args.config, _overrides(args, problem, mode))
        records = harness.run_experiment(cfg)
        stats, n_ok, n_failed = harness.aggregate_records(records)
        for key, s in stats.items():
            print(f"{key}: mean={s.mean:.6g} sd={s.sd:.3g} "
                  f"min={s.minimum:.6g} max={s.maximum:.6g} (n={s.count})")
        if n_failed:
            print(f"{n_failed} realization(s) failed", file=sys.stderr)
        return _exit_code(records)

    if args.command == "sweep":
        overrides = _overrides(args, args.problem, args.mode)
        cfg = harness.load_config(args.config, overrides)
        axes = dict(_parse_axis(a) for a in args.axis)
        results = harness.run_sweep(axes, cfg)
        worst = 1 if any(
            r["n_ok"] == 0 and r["n_failed"] > 0 for r in results
        ) else 0
        for r in results:
            label = ", ".join(f"{k}={v}" for k, v in r["cell"].items())
            print(f"[{label}] ok={r['n_ok']} failed={r['n_failed']}")
        return worst

    if args.command == "ablate":
        overrides = _overrides(args, args.problem, "forward")
        cfg = harness.load_config(args.config, overrides)
        pair = harness.ablate_regularization(cfg)
        for arm, records in pair.items():
            stats, n_ok, n_failed = harness.aggregate_records(records)
            names = [k for k in stats if k.startswith("val_")]
            summary = ", ".join(f"{k}={stats[k].mean:.4g}" for k in names)
            print(f"{arm}: {summary} (ok={n_ok}, failed={n_failed})")
        code = max(_exit_code(pair["with_pi"]), _exit_code(pair["without_pi"]))
        return code

    return 2


if __name__ == "__main__":
    sys.exit(main())
