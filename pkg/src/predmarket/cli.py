"""
Command-line front end.

Every subcommand writes CSV or JSON shaped for plotting. Outputs embed the
effective configuration (CSV as ``#`` comment lines, JSON under
``"config"``) and are written atomically. Exit status is 0 on success, 1 on
a domain error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import __version__
from .estimator import SolverConfig, estimate_series
from .flow import RhoLogitParams, simulate_book, simulate_single_price, zero_crossings
from .knowledge import BooleanMarketSpec, StructureError, run_boolean_market
from .market_core import (BookState, CsvFormatError, aggregate_snapshot,
                          aggregated_csv_text, apply_order, bid_ask, format_number, ingest_csv)
from .self_resolving import (ConfigurationError, best_response_audit, run_srm,
                             scenario_from_json, settle)
from .utility import censor_tests, expected_utilities, indifference_belief, thresholds


class DomainError(ValueError):
    pass


def _num(x):
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj, key=str) if isinstance(obj, (set, frozenset)) else obj
        return [_jsonable(v) for v in items]
    return _num(obj)


def write_atomic(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file, or to stdout."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _config_lines(config: dict) -> list[str]:
    return [f"{k}: {_num(v)}" for k, v in config.items()]


def _csv_table(header: Sequence[str], rows, config: dict) -> str:
    buf = io.StringIO()
    for line in _config_lines(config):
        buf.write(f"# {line}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(format_number(v) if isinstance(v, (int, float, np.number)) and not isinstance(v, bool)
                           else str(v) for v in row) + "\n")
    return buf.getvalue()


def _json_doc(config: dict, payload: dict) -> str:
    return json.dumps(_jsonable({"config": config, **payload}), indent=2) + "\n"


def _fmt(args, default: str) -> str:
    if args.format:
        return args.format
    if args.out and args.out.lower().endswith(".json"):
        return "json"
    if args.out and args.out.lower().endswith(".csv"):
        return "csv"
    return default


def _effective(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "stochastic") and v is not None}


# ---------------------------------------------------------------- subcommands


def cmd_ingest(args) -> int:
    config = _effective(args)
    if args.kind == "aggregated":
        snaps = ingest_csv(args.input, "aggregated")
    else:
        events = ingest_csv(args.input, "events")
        if not events:
            snaps = []
        else:
            grid = sorted({e.price for e in events})
            if args.grid_from:
                grid = ingest_csv(args.grid_from, "aggregated")[0].prices
            book = BookState(grid)
            snaps = []
            for i, ev in enumerate(events, start=1):
                apply_order(book, ev)
                if args.every and i % args.every == 0:
                    snaps.append(aggregate_snapshot(book, ev.time))
            if not snaps or snaps[-1].time != events[-1].time:
                snaps.append(aggregate_snapshot(book, events[-1].time))
    summary = []
    for s in snaps:
        bid, ask = bid_ask(s)
        summary.append({"t": s.time, "bid": bid, "ask": ask, "total_votes": s.total_volume})
    if _fmt(args, "csv") == "json":
        payload = {"snapshots": [{"t": s.time, "q": s.prices.tolist(), "s_plus": s.s_plus.tolist(),
                                  "s_minus": s.s_minus.tolist()} for s in snaps], "summary": summary}
        write_atomic(args.out, _json_doc(config, payload))
    else:
        write_atomic(args.out, aggregated_csv_text(snaps, _config_lines(config)))
    if args.out not in (None, "-"):
        for row in summary:
            sys.stderr.write(json.dumps(row) + "\n")
    return 0


def cmd_estimate(args) -> int:
    snaps = ingest_csv(args.input, "aggregated")
    cfg = SolverConfig(sigma0=args.sigma0, maxiter=args.maxiter)
    records = estimate_series(snaps, args.volume_step, cfg, warm_start=not args.no_warm_start,
                              workers=args.threads or 1)
    config = _effective(args)
    fields = ["nu", "t", "mu", "sigma", "lambda", "loglik", "converged", "boundary"]
    rows = [r.as_dict() for r in records]
    if _fmt(args, "json") == "json":
        write_atomic(args.out, _json_doc(config, {"records": [{k: r[k] for k in fields} for r in rows]}))
    else:
        write_atomic(args.out, _csv_table(fields, ([r[k] for k in fields] for r in rows), config))
    return 0


def cmd_eval(args) -> int:
    tp, tm = thresholds(args.lam, args.q)
    u_buy, u_sell = expected_utilities(args.pi, args.q, args.lam)
    doc = {"lambda": args.lam, "q": args.q, "pi": args.pi, "theta_plus": float(tp),
           "theta_minus": float(tm), "U_plus": u_buy, "U_minus": u_sell,
           "pi_star": float(indifference_belief(args.q, args.lam)),
           **censor_tests(args.pi, args.q, args.lam)}
    write_atomic(args.out, json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_simulate(args) -> int:
    run = simulate_single_price(args.mu, args.sigma, args.q, args.votes, args.seed,
                                args.rho_plus, args.rho_minus, args.lam)
    config = {**_effective(args), "lambda_used": run.lam,
              "zero_crossings": zero_crossings(run.difference),
              "max_abs_difference": float(np.max(np.abs(run.difference)))}
    if _fmt(args, "csv") == "json":
        write_atomic(args.out, _json_doc(config, {"difference": run.difference.tolist()}))
    else:
        rows = ((i, d) for i, d in enumerate(run.difference, start=1))
        write_atomic(args.out, _csv_table(["vote", "difference"], rows, config))
    return 0


def _read_counts(path: str):
    qs, counts = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if cells[0].strip() == "q":
                continue
            try:
                q = float(cells[0])
                if len(cells) == 2:
                    n = int(float(cells[1]))
                else:
                    # a real layout: count = floor(V+ + V-)
                    n = int(np.floor(float(cells[1]) + float(cells[2])))
            except (ValueError, IndexError):
                raise CsvFormatError(f"malformed row, line {lineno}") from None
            if not 0.0 < q < 1.0:
                raise CsvFormatError(f"price out of range, line {lineno}")
            qs.append(q)
            counts.append(n)
    return np.array(qs), np.array(counts, dtype=int)


def cmd_simulate_book(args) -> int:
    prices, counts = _read_counts(args.counts)
    rho = RhoLogitParams.parse(args.rho) if args.rho else None
    snap = simulate_book(prices, counts, args.mu, args.sigma, args.seed, rho, args.lam)
    config = _effective(args)
    if _fmt(args, "csv") == "json":
        payload = {"q": prices.tolist(), "v_plus": snap.v_plus.tolist(), "v_minus": snap.v_minus.tolist()}
        write_atomic(args.out, _json_doc(config, payload))
    else:
        rows = zip(prices, snap.v_plus, snap.v_minus, snap.s_plus, snap.s_minus)
        write_atomic(args.out, _csv_table(["q", "v_plus", "v_minus", "s_plus", "s_minus"], rows, config))
    return 0


def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_boolean_market(args) -> int:
    spec = BooleanMarketSpec.from_json(_load_json(args.spec))
    res = run_boolean_market(spec)
    doc = {"k_inf": res.k_inf, "final_price": float(res.final_price),
           "final_price_exact": str(res.final_price), "consensus": res.consensus,
           "final_info": [list(s) for s in sorted(res.final_info)]}
    if args.trace:
        doc["rounds"] = [{"k": r.k, "price": float(r.price), "price_exact": str(r.price),
                          "beliefs": [float(b) for b in r.beliefs],
                          "info_set": [list(s) for s in sorted(r.info_set)]} for r in res.rounds]
    write_atomic(args.out, _json_doc(_effective(args), doc))
    return 0


def cmd_self_resolving(args) -> int:
    mechanism, endowments, strategies = scenario_from_json(_load_json(args.spec))
    res = run_srm(mechanism, endowments, strategies)
    if args.settle == "bernoulli" and args.seed is None:
        raise DomainError("--seed is required for bernoulli settlement")
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    payouts = settle(res.final_price, res.positions, args.settle, rng)
    doc = {"k_inf": res.k_inf, "prices": res.prices, "pool": sorted(res.pool),
           "joins": [vars(j) for j in res.joins], "flagged_rounds": res.flagged_rounds,
           "payouts": payouts}
    if args.audit is not None:
        deviant = next((e for e in endowments if str(e) == args.audit), None)
        if deviant is None:
            raise DomainError(f"unknown expert {args.audit!r}")
        doc["audit"] = best_response_audit(mechanism, endowments, deviant)
    write_atomic(args.out, _json_doc(_effective(args), doc))
    return 0


# ------------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, help="worker processes where supported")

    parser = argparse.ArgumentParser(prog="predmarket", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="read order-book CSV into snapshots")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("aggregated", "events"), default="aggregated")
    p.add_argument("--every", type=int, help="emit a snapshot every N events")
    p.add_argument("--grid-from", help="aggregated CSV whose prices define the book grid")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("estimate", parents=[common], help="operational-time estimate series")
    p.add_argument("--input", required=True)
    p.add_argument("--volume-step", type=float, required=True)
    p.add_argument("--sigma0", type=float, default=0.05)
    p.add_argument("--maxiter", type=int, default=500)
    p.add_argument("--no-warm-start", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", parents=[common], help="thresholds and utilities at one point")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--pi", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", parents=[common], help="single-price order flow")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--rho-plus", type=float, required=True)
    p.add_argument("--rho-minus", type=float, required=True)
    p.add_argument("--votes", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.set_defaults(func=cmd_simulate, stochastic=True)

    p = sub.add_parser("simulate-book", parents=[common], help="whole-book order flow")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--rho", help="'k+,d+,k-,d-'")
    p.add_argument("--counts", required=True, help="CSV of q,count or q,v_plus,v_minus")
    p.set_defaults(func=cmd_simulate_book, stochastic=True)

    p = sub.add_parser("boolean-market", parents=[common], help="rounds of the Boolean market")
    p.add_argument("--spec", required=True)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_boolean_market)

    p = sub.add_parser("self-resolving", parents=[common], help="self-resolving market run")
    p.add_argument("--spec", required=True)
    p.add_argument("--audit", help="expert id for the best-response audit")
    p.add_argument("--settle", choices=("expected", "bernoulli"), default="expected")
    p.set_defaults(func=cmd_self_resolving)
    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run the subcommand and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "stochastic", False) and args.seed is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"predmarket {args.command}: error: --seed is required\n")
        return 2
    try:
        return args.func(args)
    except (DomainError, CsvFormatError, StructureError, ConfigurationError, ValueError,
            KeyError, OSError) as exc:
        sys.stderr.write(f"predmarket {args.command}: {exc}\n")
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
