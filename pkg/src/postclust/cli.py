"""Command-line entry point: ``postclust {test,simulate,report}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import io
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from postclust import __version__
from postclust.clustering import WardClusterer, euclidean_distance_matrix, ward_linkage
from postclust.dataset import DataError, drop_incomplete_rows, load_csv, zscale
from postclust.dip import dip_test_between
from postclust.harness import GENERATORS, ROBUSTNESS_DISTRIBUTIONS, ScenarioConfig, SimulationReport, run_scenario
from postclust.merging import merged_selective_p_value
from postclust.selective import METHODS, selective_p_value, t_test_p_value

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def manifest(command: str, args: argparse.Namespace, input_path=None) -> dict:
    """Everything needed to reproduce a run."""
    config = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "command": command,
        "config": config,
        "seed": args.seed,
        "version": __version__,
        "input_sha256": _sha256(input_path) if input_path else None,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _parse_where(items):
    conditions = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--where expects name=value, got {item!r}")
        conditions[key] = value
    return conditions


def _parse_pair(text):
    try:
        k, l = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--pair expects k,l, got {text!r}") from None
    if k == l:
        raise UsageError("--pair needs two different clusters")
    return min(k, l), max(k, l)


def run_tests(m, K, pairs, variables, methods, mc_samples, dip_reps, seed, variance="pair", equal_var=False):
    """Run ``methods`` on every pair x variable; one record per cell.

    Each cell draws from ``SeedSequence(seed, spawn_key=(k, l, g, slot))`` so
    the numbers do not depend on which subset of cells is requested.
    """
    clusterer = WardClusterer(K)
    part = clusterer(m)
    if pairs is None:
        pairs = list(itertools.combinations(range(1, K + 1), 2))
    for k, l in pairs:
        if not (1 <= k <= K and 1 <= l <= K):
            raise UsageError(f"pair {k},{l} out of range for K={K}")
    records = []
    for k, l in pairs:
        for g in variables:
            for method in methods:
                slot = 1 if method == "dip" else 0
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, l, g, slot)))
                rec = {"k": k, "l": l, "variable": m.column_names[g], "method": method}
                try:
                    if method == "direct":
                        res = selective_p_value(m, g, part, k, l, clusterer, N=mc_samples, rng=rng, variance=variance)
                    elif method == "merged":
                        res = merged_selective_p_value(m, g, part, k, l, clusterer, N=mc_samples, rng=rng,
                                                       variance=variance)
                    elif method == "dip":
                        res = dip_test_between(m, g, part, k, l, B=dip_reps, rng=rng)
                    else:
                        res = t_test_p_value(m.values[:, g], part, k, l, equal_var=equal_var)
                    rec.update(res.to_dict(), error=None)
                except ValueError as exc:
                    rec.update(p=None, statistic=None, error=str(exc))
                records.append(rec)
    return part, records


def _tsv_table(records, alpha) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["k", "l", "variable", "method", "p", "significant", "statistic", "warning"])
    for r in records:
        if r["p"] is None:
            w.writerow([r["k"], r["l"], r["variable"], r["method"], "NA", "", "", f"error: {r['error']}"])
            continue
        w.writerow([r["k"], r["l"], r["variable"], r["method"], f"{r['p']:.4f}",
                    "*" if r["p"] <= alpha else "", f"{r['statistic']:.4f}", r.get("warning") or ""])
    return buf.getvalue()


def cmd_test(args) -> int:
    if args.k < 2:
        raise UsageError("need at least two clusters")
    methods = METHODS if args.method == "all" else (args.method,)
    columns = args.columns.split(",") if args.columns else None
    m = load_csv(args.input, columns=columns, delimiter=args.delimiter)
    where = _parse_where(args.where)
    if where:
        m = m.where(**where)
    m = drop_incomplete_rows(m)
    if args.scale:
        m = zscale(m)
    if args.k > m.n:
        raise DataError(f"cannot cut {m.n} observations into {args.k} clusters")
    variables = [m.column_index(v) for v in args.variable] if args.variable else list(range(m.p))
    pairs = [_parse_pair(args.pair)] if args.pair else None
    part, records = run_tests(m, args.k, pairs, variables, methods, args.mc_samples, args.dip_reps,
                              args.seed, args.variance, args.equal_var)
    man = manifest("test", args, args.input)
    if args.dendrogram:
        Path(args.dendrogram).write_text(ward_linkage(euclidean_distance_matrix(m)).to_json(), encoding="utf-8")
    if args.format == "json":
        doc = {"manifest": man, "n": m.n, "cluster_sizes": [part.size(c) for c in range(1, part.K + 1)],
               "alpha": args.alpha, "results": records}
        _write(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        _write(_tsv_table(records, args.alpha), args.out)
        if args.out:
            Path(str(args.out) + ".manifest.json").write_text(json.dumps(man, indent=2) + "\n", encoding="utf-8")
    if all(r["p"] is None for r in records):
        print("error: every test failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _summary_tsv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    cols = ["generator", "delta", "K", "n", "n_reps", "method", "n_pvalues", "rejection_rate", "ks_to_uniform"]
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r[c] is None else (f"{r[c]:.4f}" if isinstance(r[c], float) else r[c]) for c in cols])
    return buf.getvalue()


def _summary_rows(report: SimulationReport) -> list:
    cfg = report.config
    return [
        {"generator": cfg.generator, "delta": float(cfg.delta), "K": cfg.K, "n": cfg.n, "n_reps": cfg.n_reps,
         "method": method, "n_pvalues": s["n"], "rejection_rate": s["rejection_rate"],
         "ks_to_uniform": s["ks_to_uniform"]}
        for method, s in report.summary.items()
    ]


def cmd_simulate(args) -> int:
    overrides = {
        "n": args.n, "p": args.p, "delta": args.delta, "K": args.k, "n_reps": args.reps,
        "alpha": args.alpha, "mc_samples": args.mc_samples, "dip_reps": args.dip_reps,
        "seed": args.seed, "comparisons": args.comparisons, "distribution": args.distribution,
        "variance": args.variance,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.methods:
        overrides["methods"] = tuple(sorted(set(args.methods.split(",")), key=lambda s: (s not in METHODS, s)))
    try:
        cfg = ScenarioConfig.preset(args.scenario, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = run_scenario(cfg, n_jobs=args.jobs)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.json").write_text(report.to_json() + "\n", encoding="utf-8")
    Path(f"{prefix}.tsv").write_text(report.to_tsv(), encoding="utf-8")
    man = manifest("simulate", args)
    man["runtime_seconds"] = report.runtime_seconds
    man["outputs"] = [f"{prefix}.json", f"{prefix}.tsv"]
    Path(f"{prefix}.manifest.json").write_text(json.dumps(man, indent=2) + "\n", encoding="utf-8")
    sys.stdout.write(_summary_tsv(_summary_rows(report)))
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.reports:
        raise UsageError("no report files given")
    reports = []
    for path in args.reports:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            reports.append(SimulationReport.from_dict(doc))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"cannot read report {path}: {exc}") from exc
    if len({r.config.generator for r in reports}) > 1:
        raise DataError("incompatible scenarios")
    rows = [row for r in sorted(reports, key=lambda r: (r.config.delta, r.config.K, r.config.n))
            for row in _summary_rows(r)]
    if args.format == "json":
        _write(json.dumps(rows, indent=2) + "\n", args.out)
    else:
        _write(_summary_tsv(rows), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="postclust", description="Post-clustering inference for one variable between two clusters.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test every cluster pair x variable of a CSV file")
    t.add_argument("--input", required=True, help="CSV file, header in the first row")
    t.add_argument("--columns", help="comma-separated numeric columns (default: every numeric column)")
    t.add_argument("--delimiter", default=",")
    t.add_argument("--where", action="append", metavar="NAME=VALUE", help="keep rows whose label column matches")
    t.add_argument("--scale", action="store_true", help="center and scale each column")
    t.add_argument("--k", type=int, required=True, help="number of clusters to cut")
    t.add_argument("--pair", help="only test this pair, e.g. 1,3")
    t.add_argument("--variable", action="append", help="only test this column (repeatable)")
    t.add_argument("--method", choices=METHODS + ("all",), default="all")
    t.add_argument("--mc-samples", type=int, default=2000)
    t.add_argument("--dip-reps", type=int, default=2000)
    t.add_argument("--variance", choices=("pair", "all"), default="pair")
    t.add_argument("--equal-var", action="store_true", help="pooled-variance t-test instead of Welch")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=DEFAULT_SEED)
    t.add_argument("--out", help="output file (default: stdout)")
    t.add_argument("--format", choices=("tsv", "json"), default="tsv")
    t.add_argument("--dendrogram", help="also write the full Ward dendrogram as JSON here")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="run a simulation scenario")
    s.add_argument("--scenario", required=True, choices=GENERATORS)
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--delta", type=float)
    s.add_argument("--k", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--mc-samples", type=int)
    s.add_argument("--dip-reps", type=int)
    s.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    s.add_argument("--comparisons", choices=("all", "extreme"))
    s.add_argument("--distribution", choices=ROBUSTNESS_DISTRIBUTIONS)
    s.add_argument("--variance", choices=("pair", "all"))
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--out", default="simulation", help="output prefix for .json, .tsv and .manifest.json")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="merge simulation reports into one power table")
    r.add_argument("reports", nargs="*", help="report JSON files")
    r.add_argument("--out")
    r.add_argument("--format", choices=("tsv", "json"), default="tsv")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"postclust {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"postclust {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - safety net
        print(f"postclust {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
