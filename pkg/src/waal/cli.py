"""Command-line entry point.

Exit codes: 0 success, 1 gradient check failure, 2 configuration/input error,
3 oracle timeout, 4 diversity-ordering regression, 5 port in use.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

log = logging.getLogger("waal")

EXIT_OK = 0
EXIT_GRADCHECK = 1
EXIT_CONFIG = 2
EXIT_TIMEOUT = 3
EXIT_ORDERING = 4
EXIT_PORT = 5


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("WAAL_LOG", "error"), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waal",
        description="Desk-scale active learning with adversarial distribution matching.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a seeded experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="experiment config JSON path")
    p_run.add_argument("--oracle", choices=("simulated", "interactive"),
                       default="simulated")
    p_run.add_argument("--out", default=None, help="metrics JSONL path "
                                                   "(overrides config out_path)")

    p_div = sub.add_parser("divergence",
                           help="exact divergence study over the interval families")
    p_div.add_argument("--a", type=float, required=True)
    p_div.add_argument("--b", type=float, required=True)
    p_div.add_argument("--grid", type=int, default=101)
    p_div.add_argument("--mc", type=int, default=2000,
                       help="Monte Carlo cross-check sample count (0 disables)")

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of all losses")
    p_grad.add_argument("--seed", type=int, default=20240817)
    p_grad.add_argument("--configs", type=int, default=20)
    p_grad.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)

    p_serve = sub.add_parser("serve", help="host one interactive labeling session")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--port", type=int, required=True)
    p_serve.add_argument("--host", default="127.0.0.1")

    p_rep = sub.add_parser("report", help="accuracy-vs-labels table and chart")
    p_rep.add_argument("--metrics", required=True, help="metrics JSONL path")
    p_rep.add_argument("--chart", default=None, help="SVG output path "
                                                     "(default: metrics stem + .svg)")
    p_rep.add_argument("--csv", default=None, help="CSV output path "
                                                   "(default: metrics stem + .csv)")
    return parser


# ----------------------------------------------------------------- run

def load_run_config(path: str):
    """Parse the experiment config JSON into (per-seed configs, out_path, timeout)."""
    from . import al_runtime as rt

    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ValueError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc.msg}") from None
    return rt.parse_config_dict(raw)


def cmd_run(args) -> int:
    from . import al_runtime as rt

    try:
        configs, out_path, timeout = load_run_config(args.config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_path = args.out or out_path
    sink = open(out_path, "w") if out_path else None

    def on_record(record):
        if sink is not None:
            sink.write(rt.metrics_line(record) + "\n")
            sink.flush()

    try:
        for config in configs:
            oracle = (rt.SimulatedOracle() if args.oracle == "simulated"
                      else rt.InteractiveOracle(timeout=timeout))
            log.info("run: seed %d, strategy %s, mode %s",
                     config.seed, config.strategy, config.mode)
            records = rt.run_experiment(config, oracle, on_record=on_record)
            last = records[-1] if records else None
            if last is not None:
                print(f"seed {config.seed}: {len(records)} rounds, "
                      f"final accuracy {last.test_accuracy:.4f} "
                      f"at {last.labeled_count} labels")
    except rt.ExperimentPaused as exc:
        print(f"error: labeling timed out ({exc})", file=sys.stderr)
        return EXIT_TIMEOUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        if sink is not None:
            sink.close()
    return EXIT_OK


# ------------------------------------------------------------ divergence

def cmd_divergence(args) -> int:
    from . import divergence_lab as dl

    if not (args.a > args.b > 0):
        print(f"error: need a > b > 0, got a={args.a}, b={args.b}", file=sys.stderr)
        return EXIT_CONFIG
    if args.grid < 2:
        print("error: --grid must be at least 2", file=sys.stderr)
        return EXIT_CONFIG
    report = dl.diversity_ordering_report(args.a, args.b, grid=args.grid,
                                          mc_n=args.mc, mc_seed=0)
    # the threshold risk is constant in x0 for both families; collapse to scalars
    for key in ("eps_star_d2", "eps_star_d3"):
        vals = report[key]
        if max(vals) - min(vals) > 1e-9:
            raise AssertionError(f"{key} varies over the x0 grid; "
                                 f"spread {max(vals) - min(vals)}")
        report[key] = vals[0]
    print(json.dumps(report, indent=2, sort_keys=True))
    if not report["ordering_holds"]:
        print("error: diversity ordering failed "
              "(min W1 to the spread family did not exceed max W1 to the nested one)",
              file=sys.stderr)
        return EXIT_ORDERING
    return EXIT_OK


# ------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    from . import tensor_net as tn

    original = tn.grad_prediction
    if args.corrupt:
        # negative-control hook: skew one gradient entry, the check must fail
        def corrupted(params, X, y):
            grads, loss = original(params, X, y)
            grads.classifier.layers[0][0][0, 0] += 5e-3
            return grads, loss

        tn.grad_prediction = corrupted
    try:
        report = tn.gradcheck_report(n_configs=args.configs, seed=args.seed)
    finally:
        tn.grad_prediction = original
    worst = max(report.values())
    for name, err in sorted(report.items()):
        print(f"{name:20s} max relative error {err:.3e}")
    print(f"{'worst':20s} {worst:.3e}  (tolerance 1e-4)")
    return EXIT_OK if worst <= 1e-4 else EXIT_GRADCHECK


# ----------------------------------------------------------- serve/report

def cmd_serve(args) -> int:
    from . import label_server as ls

    try:
        configs, out_path, timeout = load_run_config(args.config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        server = ls.LabelServer(args.host, args.port, default_config=configs[0],
                                oracle_timeout=timeout, out_path=out_path)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port} ({exc})", file=sys.stderr)
        return EXIT_PORT
    print(f"labeling console API on http://{args.host}:{server.port}/")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return EXIT_OK


def cmd_report(args) -> int:
    from . import reporting as rp

    try:
        segments = rp.load_metrics(args.metrics)
    except FileNotFoundError:
        print(f"error: metrics file not found: {args.metrics}", file=sys.stderr)
        return EXIT_CONFIG
    except rp.MetricsFormatError as exc:
        print(f"error: {args.metrics}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stem = os.path.splitext(args.metrics)[0]
    chart_path = args.chart or stem + ".svg"
    csv_path = args.csv or stem + ".csv"
    print(rp.accuracy_table(segments))
    rp.write_accuracy_csv(segments, csv_path)
    rp.write_accuracy_chart(segments, chart_path)
    print(f"chart: {chart_path}\ncsv: {csv_path}")
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "divergence": cmd_divergence,
               "gradcheck": cmd_gradcheck, "serve": cmd_serve,
               "report": cmd_report}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
