"""Command line entry points: run an experiment config, time a grid sweep,
or benchmark the kernel backends."""

import argparse
import sys as _sys

from .errors import ConfigError, RiccatiMorError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _add_common(parser):
    parser.add_argument("config", help="path to an INI experiment config")
    parser.add_argument("--methods", help="comma separated subset of pod,bt,gark,pgark")
    parser.add_argument("--tol", type=float, help="residual tolerance override")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--seed", type=int, help="random seed recorded in the manifest")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riccati-mor",
        description="Model order reduction solvers for large-scale Riccati/LQR problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured methods, write CSVs + manifest")
    _add_common(run)

    sweep = sub.add_parser("sweep", help="time the Krylov methods over grid spacings")
    _add_common(sweep)
    sweep.add_argument(
        "--dx", required=True,
        help="comma separated grid spacings, e.g. 0.1,0.05,0.025",
    )
    sweep.add_argument(
        "--timeout", type=float, default=600.0,
        help="per-size runtime budget in seconds (projected overruns are skipped)",
    )

    bench = sub.add_parser("bench", help="compare compiled and pure Python kernels")
    bench.add_argument("--sizes", default="60,120,240,441",
                       help="comma separated matrix sizes")
    bench.add_argument("--repeats", type=int, default=2)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "bench":
        from .bench import run_benchmark

        sizes = tuple(int(s) for s in args.sizes.split(","))
        run_benchmark(sizes=sizes, repeats=args.repeats)
        return EXIT_OK

    from .harness import parse_config, run_experiment, scaling_sweep

    methods = args.methods.split(",") if args.methods else None
    try:
        cfg = parse_config(
            args.config, methods=methods, tol=args.tol, out_dir=args.out, seed=args.seed
        )
    except ConfigError as exc:
        print("config error: {}".format(exc), file=_sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            outcome = run_experiment(cfg)
            for name, m_out in outcome.outcomes.items():
                final = m_out.history.final
                print(
                    "{:6s} {:13s} records={:3d} final_r={} R_P={}".format(
                        name,
                        m_out.status,
                        len(m_out.history),
                        final.order if final else "-",
                        "{:.3e}".format(final.residual) if final else "-",
                    )
                )
            print("outputs in {}".format(outcome.out_dir))
            return outcome.exit_code
        dx_list = [float(x) for x in args.dx.split(",")]
        path, rows = scaling_sweep(cfg, dx_list, timeout_per_size=args.timeout)
        for row in rows:
            print(",".join(str(x) for x in row))
        print("sweep written to {}".format(path))
        failed = any(str(row[-1]).startswith("failed") for row in rows)
        return EXIT_SOLVER if failed else EXIT_OK
    except ConfigError as exc:
        print("config error: {}".format(exc), file=_sys.stderr)
        return EXIT_CONFIG
    except RiccatiMorError as exc:
        print("solver failure: {}".format(exc), file=_sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
