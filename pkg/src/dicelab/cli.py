"""Command-line entry point: ``dicelab <subcommand> ...``.

Exit codes: 0 success, 1 internal error, 2 missing or invalid input
artifact, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DiceLabError, GridTooSmall, MethodUnavailable, TooLarge, TruncationTooSmall
from .kernel import SpectrumCache, check_grid, estimate_limit_spectrum
from .limit import DEFAULT_L, DEFAULT_TAIL_BUDGET, LimitConfig, alpha_estimate, digraph_probability, limit_pair_samples
from .patterns import BUILTIN_PATTERNS, DigraphPattern, get_pattern, load_pattern_file
from .reference import load_reference
from .sampling import MODELS, MULTISET
from .tournament import (
    ExperimentConfig,
    finite_margin_samples,
    margin_ks_distance,
    model_scale,
    run_experiment,
    tie_rate_curve,
)

SCHEMA = "v1"
EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3
DEFAULT_GRID = (1600, 1800, 2048)


class ConfigError(Exception):
    """Invalid flag values or combinations."""


class InputError(Exception):
    """A required artifact is missing or unreadable."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


# ------------------------------------------------------------------ helpers


def _manifest(args, outputs, spectrum_versions=None) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "csv", "workers")}
    return {
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "spectrum_versions": spectrum_versions or {},
        "outputs": [str(p) for p in outputs],
        "package_version": __version__,
    }


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True, default=_jsonable) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x)}")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)


def _cache(args) -> SpectrumCache:
    return SpectrumCache(args.cache_dir)


def _load_limit(args):
    cache = _cache(args)
    try:
        lim = cache.load_limit()
    except FileNotFoundError as exc:
        raise InputError(f"{exc}; run `dicelab spectrum` first") from None
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"unreadable spectrum cache: {exc}") from None
    if args.L > lim.L:
        raise ConfigError(f"--L {args.L} exceeds the {lim.L} cached limit modes")
    return lim


def _pattern(args) -> DigraphPattern:
    if args.pattern_file:
        try:
            return load_pattern_file(args.pattern_file)
        except FileNotFoundError:
            raise InputError(f"pattern file {args.pattern_file} not found") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"bad pattern file: {exc}") from None
    try:
        return get_pattern(args.pattern)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def _metadata(start: float) -> dict:
    return {"wall_clock_seconds": round(time.time() - start, 3)}


# -------------------------------------------------------------- subcommands


def cmd_spectrum(args) -> int:
    try:
        grid = check_grid(args.n_grid, args.L)
    except GridTooSmall as exc:
        raise ConfigError(str(exc)) from None
    cache = _cache(args)
    lim = estimate_limit_spectrum(grid, args.L, cache)
    cache.save_limit(lim)
    if cache.computed:
        print(f"computed spectra for n = {cache.computed}", file=sys.stderr)
    ell = np.arange(1, lim.L + 1)
    band = ell[: min(50, lim.L)] * lim.sigmas[: min(50, lim.L)]
    print(f"limit spectrum from n_grid={list(grid)}, L={lim.L}, version={lim.version}")
    print(f"cache: {cache.root}")
    print(f"{'ell':>5} {'sigma_ell':>12} {'uncertainty':>12} {'ell*sigma':>10}")
    for i in sorted(set(range(min(10, lim.L))) | {lim.L // 2 - 1, lim.L - 1}):
        print(f"{i + 1:>5} {lim.sigmas[i]:>12.8f} {lim.uncertainty[i]:>12.2e} {(i + 1) * lim.sigmas[i]:>10.5f}")
    print(f"ell*sigma band for ell <= {band.size}: [{band.min():.5f}, {band.max():.5f}], ratio {band.max() / band.min():.3f}")
    print(f"sum sigma^2 = {np.sum(lim.sigmas ** 2):.6f} (tail estimate {lim.tail_variance():.3e})")
    return EXIT_OK


def cmd_limit(args) -> int:
    start = time.time()
    pattern = _pattern(args)
    lim = _load_limit(args)
    cfg = LimitConfig(L=args.L, tail_budget=args.tail_budget, workers=args.workers)
    try:
        est = digraph_probability(pattern, args.N, args.L, lim, args.seed, cfg)
    except TruncationTooSmall as exc:
        raise ConfigError(str(exc)) from None
    lo, hi = est.ci()
    doc = {
        "schema": SCHEMA,
        "kind": "limit",
        "manifest": _manifest(args, [args.out] if args.out else [], {"limit_spectrum": lim.version}),
        "pattern": pattern.to_json(),
        "p_hat": est.p_hat,
        "count": est.count,
        "N": est.n_samples,
        "ci95": [lo, hi],
        "ci95_halfwidth": est.ci95_halfwidth,
        "zero_events": est.zero_events,
        "L": args.L,
        "metadata": _metadata(start),
    }
    _emit(doc, args.out)
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig(model=args.model, n=args.n, m=args.m, N=args.N, seed=args.seed,
                               method=args.sampler, chunk=args.chunk, reservoir=0, workers=args.workers)
        cfg.validate()
    except (MethodUnavailable, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def cmd_experiment(args) -> int:
    start = time.time()
    cfg = _experiment_config(args)
    res = run_experiment(cfg)
    body = res.to_json()
    derived = {}
    for name, pat in BUILTIN_PATTERNS.items():
        if pat.m <= cfg.m:
            p = res.pattern_probability(pat)
            derived[name] = {"p_hat": p, "ci95_halfwidth": 1.96 * math.sqrt(max(p * (1 - p), 0.0) / cfg.N)}
    outputs = [p for p in (args.out, args.csv) if p]
    doc = {
        "schema": SCHEMA,
        "kind": "experiment",
        "manifest": _manifest(args, outputs),
        **body,
        "derived": derived,
        "metadata": _metadata(start),
    }
    _emit(doc, args.out)
    if args.csv:
        rows = [[r["code"], r["pattern"], r["orbit"], r["count"], repr(r["p_hat"]), repr(r["ci95"])] for r in body["patterns"]]
        _write_csv(args.csv, ["code", "pattern", "orbit", "count", "p_hat", "ci95"], rows)
    return EXIT_OK


def cmd_ties(args) -> int:
    start = time.time()
    try:
        rows = tie_rate_curve(args.model, args.n_grid, args.N, args.seed, args.sampler)
    except (MethodUnavailable, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    alpha = None
    versions = {}
    if args.alpha_N:
        lim = _load_limit(args)
        versions["limit_spectrum"] = lim.version
        a = alpha_estimate(lim, args.L, args.alpha_N, args.seed, tail_budget=args.tail_budget)
        alpha = {"alpha": a.alpha, "stderr": a.stderr, "N": a.N, "L": a.L, "truncation_bias": a.truncation_bias}
    target_factor = 1.0 if args.model == MULTISET else 2.0
    table = []
    for r in rows:
        entry = {"n": r.n, "dice": r.dice, "pairs": r.pairs, "ties": r.ties, "p_tie": r.p_tie,
                 "n_times_p": r.n_times_p, "ci95": list(r.ci95)}
        if alpha:
            target = target_factor * alpha["alpha"]
            entry["target"] = target
            entry["relative_error"] = r.n_times_p / target - 1
        table.append(entry)
    outputs = [p for p in (args.out, args.csv) if p]
    doc = {"schema": SCHEMA, "kind": "ties", "manifest": _manifest(args, outputs, versions), "model": args.model,
           "alpha": alpha, "rows": table, "metadata": _metadata(start)}
    _emit(doc, args.out)
    if args.csv:
        _write_csv(args.csv, ["n", "dice", "ties", "p_tie", "n_times_p"],
                   [[t["n"], t["dice"], t["ties"], repr(t["p_tie"]), repr(t["n_times_p"])] for t in table])
    return EXIT_OK


def cmd_ks(args) -> int:
    start = time.time()
    lim = _load_limit(args)
    cfg = _experiment_config(argparse.Namespace(**{**vars(args), "m": 2}))
    c = args.scale if args.scale is not None else model_scale(args.model)
    limit = limit_pair_samples(args.N, lim, args.seed, LimitConfig(L=args.L, tail_budget=args.tail_budget))
    finite = finite_margin_samples(cfg, c)
    ks = margin_ks_distance(cfg, c, limit, finite)
    threshold = load_reference()["ks_threshold"]
    doc = {"schema": SCHEMA, "kind": "ks", "manifest": _manifest(args, [args.out] if args.out else [],
                                                                 {"limit_spectrum": lim.version}),
           "model": args.model, "n": args.n, "N": args.N, "scale": c, "ks": ks, "threshold": threshold,
           "pass": ks <= threshold, "metadata": _metadata(start)}
    _emit(doc, args.out)
    return EXIT_OK


def _read_input(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise InputError(f"input {path} not found")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"input {path} is not JSON: {exc}") from None
    if doc.get("schema") != SCHEMA or "kind" not in doc:
        raise InputError(f"input {path} is not a dicelab {SCHEMA} result")
    return doc


def build_report(docs: list[tuple[str, dict]]) -> tuple[str, list[list]]:
    """Markdown report and a flat CSV table from loaded result documents."""
    lines = ["# dicelab report", ""]
    flat: list[list] = []
    limit = {d["pattern"]["name"] or json.dumps(d["pattern"]["edges"]): d for _, d in docs if d["kind"] == "limit"}
    exps = [d for _, d in docs if d["kind"] == "experiment"]
    if limit or exps:
        lines += ["## Pattern densities: finite n against the limit", "",
                  "| pattern | source | p_hat | ci95 half-width |", "|---|---|---|---|"]
        for name in sorted(limit):
            d = limit[name]
            lines.append(f"| {name} | limit N={d['N']} L={d['L']} | {d['p_hat']:.5f} | {d['ci95_halfwidth']:.5f} |")
            flat.append(["density", name, f"limit L={d['L']}", repr(d["p_hat"]), repr(d["ci95_halfwidth"])])
        for d in sorted(exps, key=lambda d: (d["config"]["model"], d["config"]["n"], d["config"]["m"])):
            c = d["config"]
            src = f"{c['model']} n={c['n']} m={c['m']} N={c['N']}"
            for name in sorted(d["derived"]):
                v = d["derived"][name]
                lines.append(f"| {name} | {src} | {v['p_hat']:.5f} | {v['ci95_halfwidth']:.5f} |")
                flat.append(["density", name, src, repr(v["p_hat"]), repr(v["ci95_halfwidth"])])
            if "intransitive_fraction" in d:
                lines.append(f"| intransitive triple | {src} | {d['intransitive_fraction']:.5f} | "
                             f"{d['intransitive_ci95']:.5f} |")
                flat.append(["density", "intransitive", src, repr(d["intransitive_fraction"]),
                             repr(d["intransitive_ci95"])])
        lines.append("")
    ties = [d for _, d in docs if d["kind"] == "ties"]
    if ties:
        lines += ["## Tie rate against the tie constant", "",
                  "| model | n | n * P[tie] | ci95 | target | relative error |", "|---|---|---|---|---|---|"]
        for d in sorted(ties, key=lambda d: d["model"]):
            for r in d["rows"]:
                tgt = f"{r['target']:.5f}" if "target" in r else "-"
                rel = f"{r['relative_error']:+.2%}" if "relative_error" in r else "-"
                lines.append(f"| {d['model']} | {r['n']} | {r['n_times_p']:.5f} | "
                             f"[{r['ci95'][0]:.5f}, {r['ci95'][1]:.5f}] | {tgt} | {rel} |")
                flat.append(["ties", d["model"], r["n"], repr(r["n_times_p"]), tgt])
        lines.append("")
    ks = [d for _, d in docs if d["kind"] == "ks"]
    if ks:
        lines += ["## Margin distribution KS distance", "",
                  "| model | n | scale c | KS | threshold | pass |", "|---|---|---|---|---|---|"]
        for d in sorted(ks, key=lambda d: (d["model"], d["n"], d["scale"])):
            lines.append(f"| {d['model']} | {d['n']} | {d['scale']} | {d['ks']:.5f} | {d['threshold']} | "
                         f"{'yes' if d['pass'] else 'no'} |")
            flat.append(["ks", d["model"], d["n"], repr(d["scale"]), repr(d["ks"])])
        lines.append("")
    lines += ["## Inputs", ""] + [f"- {p}" for p, _ in docs] + [""]
    return "\n".join(lines), flat


def cmd_report(args) -> int:
    docs = [(p, _read_input(p)) for p in args.inputs]
    text, flat = build_report(docs)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.csv:
        _write_csv(args.csv, ["section", "key", "source", "value", "extra"], flat)
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _positive_int(text: str) -> int:
    v = int(float(text))
    if v < 1 or v != float(text):
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_cache(p):
    p.add_argument("--cache-dir", default=None, help="spectrum cache (default: $DICE_LAB_CACHE or ~/.cache/dicelab)")


def _add_limit_flags(p):
    p.add_argument("--L", type=_positive_int, default=DEFAULT_L, help="number of limit modes")
    p.add_argument("--tail-budget", type=float, default=DEFAULT_TAIL_BUDGET,
                   help="largest allowed dropped-tail variance relative to the kept modes")


def _add_sampler_flags(p):
    p.add_argument("--model", choices=MODELS, default=MULTISET)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--sampler", default=None, help="sampling method (default depends on model and n)")
    p.add_argument("--chunk", type=_positive_int, default=20_000)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dicelab", description="Random dice tournaments and their Gaussian limit.")
    ap.add_argument("--version", action="version", version=f"dicelab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", help="compute and cache the kernel spectrum")
    p.add_argument("--n-grid", type=_positive_int, nargs="+", default=list(DEFAULT_GRID))
    p.add_argument("--L", type=_positive_int, default=DEFAULT_L)
    _add_cache(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("limit", help="digraph probability in the limit tournament")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--pattern", default="cycle3", help=f"one of {', '.join(BUILTIN_PATTERNS)}")
    g.add_argument("--pattern-file", default=None, help="JSON file with m and edges")
    p.add_argument("--N", type=_positive_int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", default=None)
    _add_limit_flags(p)
    _add_cache(p)
    p.set_defaults(func=cmd_limit)

    p = sub.add_parser("experiment", help="finite-n tournament experiment")
    _add_sampler_flags(p)
    p.add_argument("--m", type=_positive_int, default=3)
    p.add_argument("--N", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None, help="also write one CSV row per canonical pattern")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ties", help="tie rate times n over a grid of n")
    p.add_argument("--model", choices=MODELS, default=MULTISET)
    p.add_argument("--n-grid", type=_positive_int, nargs="+", default=[100, 200, 400])
    p.add_argument("--N", type=_positive_int, default=4000, help="dice per n; all pairs are compared")
    p.add_argument("--sampler", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha-N", type=int, default=1_000_000, help="limit draws for the tie constant (0 to skip)")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    _add_limit_flags(p)
    _add_cache(p)
    p.set_defaults(func=cmd_ties)

    p = sub.add_parser("ks", help="KS distance between scaled finite-n margins and the limit")
    _add_sampler_flags(p)
    p.add_argument("--N", type=_positive_int, default=100_000)
    p.add_argument("--scale", type=float, default=None, help="override the margin scale c")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", default=None)
    _add_limit_flags(p)
    _add_cache(p)
    p.set_defaults(func=cmd_ks)

    p = sub.add_parser("report", help="consolidate result JSON files into markdown and CSV")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", default=None, help="markdown path (default: stdout)")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"dicelab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, TooLarge) as exc:
        print(f"dicelab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DiceLabError as exc:
        print(f"dicelab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # surfaced as an internal failure, with the message
        print(f"dicelab: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
