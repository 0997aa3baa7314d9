"""Command-line front end.

    exchmlmc estimate    --config run.json [--seed S] [--out DIR] [--threads N]
    exchmlmc convergence --config run.json ...
    exchmlmc cdf         --config run.json ...
    exchmlmc oracle expected-payoff --config run.json [--n N]
    exchmlmc oracle level-moments   --config run.json --level L [--kind K]
    exchmlmc oracle tail            --n N --L L --K K
    exchmlmc oracle fourth-moment   --n N --L L

Exit codes: 0 success, 2 validation error, 3 sample budget exhausted.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, oracle
from . import rng as rngmod
from .config import ConfigError, RunConfig, load_config
from .loss_models import BetaFactor
from .mlmc import BudgetExhausted, EstimatorKind, MlmcResult, adaptive_mlmc

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3

log = logging.getLogger("exchmlmc")

LEVEL_HEADER = ("level", "n", "mean", "variance", "cost")
SK_HEADER = ("k", "S_k", "stderr")
RATE_HEADER = ("kind", "quantity", "slope", "intercept", "residual", "levels")


def _stamp(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash, "seed": cfg.seed}


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, cfg: RunConfig, header, rows):
    with path.open("w", newline="") as fh:
        fh.write(f"# config_hash={cfg.config_hash} seed={cfg.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _level_rows(result: MlmcResult):
    return [(s.level, s.n, s.mean, s.variance, s.cost) for s in result.levels]


def _sk_rows(result: MlmcResult):
    return [(p.k, p.s_k, p.stderr) for p in diagnostics.s_k_curve(result)]


def _run(cfg: RunConfig, kind: EstimatorKind, threads: int) -> MlmcResult:
    return adaptive_mlmc(cfg.model, cfg.payoff, cfg.geometry, cfg.gamma, kind, cfg.pilot_n, cfg.seed, cfg.budget, threads)


def _result_block(cfg: RunConfig, result: MlmcResult) -> dict:
    block = result.as_dict()
    if cfg.quote is not None:
        block["reported_loss"] = cfg.quote.reported_loss(result.estimate)
        block["partial_reported_losses"] = [cfg.quote.reported_loss(g) for g in result.partial_estimates()]
    block["s_k"] = [
        {"k": p.k, "S_k": p.s_k, "stderr": p.stderr, "coverage": p.coverage} for p in diagnostics.s_k_curve(result)
    ]
    return block


def _base_report(cfg: RunConfig, command: str) -> dict:
    report = {"command": command, "config": cfg.raw, **_stamp(cfg)}
    if isinstance(cfg.model, BetaFactor) and (cfg.model.alpha, cfg.model.beta) == (2, 2):
        report["note"] = "Beta(2,2) factor is a test distribution, not a calibrated model"
    return report


def cmd_estimate(cfg: RunConfig, threads: int = 1) -> MlmcResult:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    result = _run(cfg, cfg.estimator, threads)
    report = _base_report(cfg, "estimate")
    report["result"] = _result_block(cfg, result)
    _write_json(cfg.output_dir / "report.json", report)
    _write_csv(cfg.output_dir / "levels.csv", cfg, LEVEL_HEADER, _level_rows(result))
    _write_csv(cfg.output_dir / "sk.csv", cfg, SK_HEADER, _sk_rows(result))
    return result


def _fit_or_reason(fn, result):
    try:
        return fn(result)
    except ValueError as exc:
        return str(exc)


def cmd_convergence(cfg: RunConfig, threads: int = 1) -> dict:
    """Run both estimators and emit level statistics, S_k and rate fits."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    report = _base_report(cfg, "convergence")
    rate_rows = []
    results = {}
    for kind in EstimatorKind:
        result = _run(cfg, kind, threads)
        results[kind.value] = result
        _write_csv(cfg.output_dir / f"levels_{kind.value}.csv", cfg, LEVEL_HEADER, _level_rows(result))
        _write_csv(cfg.output_dir / f"sk_{kind.value}.csv", cfg, SK_HEADER, _sk_rows(result))
        block = _result_block(cfg, result)
        block["rates"] = {}
        for quantity, fn in (("variance", diagnostics.variance_rate), ("mean", diagnostics.mean_rate), ("s_k", diagnostics.s_k_rate)):
            fit = _fit_or_reason(fn, result)
            if isinstance(fit, str):
                block["rates"][quantity] = {"excluded": fit}
            else:
                block["rates"][quantity] = {"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual, "levels": list(fit.levels)}
                rate_rows.append((kind.value, quantity, fit.slope, fit.intercept, fit.residual, " ".join(map(str, fit.levels))))
        report[kind.value] = block
    _write_csv(cfg.output_dir / "rates.csv", cfg, RATE_HEADER, rate_rows)
    _write_json(cfg.output_dir / "report.json", report)
    return results


def sample_factor_draws(cfg: RunConfig, n: int) -> np.ndarray:
    block = 2**16
    out = np.empty(n)
    for i, start in enumerate(range(0, n, block)):
        stop = min(n, start + block)
        gen = rngmod.substream(cfg.seed, rngmod.STREAM_FACTOR, i)
        out[start:stop] = cfg.model.sample_factor(gen, stop - start)
    return out


def cmd_cdf(cfg: RunConfig, threads: int = 1) -> np.ndarray:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    samples = sample_factor_draws(cfg, cfg.cdf_samples)
    table = diagnostics.empirical_cdf(samples, np.linspace(0.0, 1.0, cfg.cdf_grid))
    _write_csv(cfg.output_dir / "cdf.csv", cfg, ("l", "F"), [(float(a), float(b)) for a, b in table])
    report = _base_report(cfg, "cdf")
    report["samples"] = cfg.cdf_samples
    report["mean"] = float(samples.mean())
    try:
        report["ks_distance"] = diagnostics.ks_distance(samples, cfg.model.cdf)
    except NotImplementedError:
        pass
    _write_json(cfg.output_dir / "cdf_report.json", report)
    return table


def cmd_oracle(args) -> dict:
    q = args.query
    if q == "tail":
        g, weak = oracle.ld_bound(args.n, args.L, args.K)
        return {
            "query": q, "N": args.n, "L": args.L, "K": args.K,
            "upper_tail": oracle.binomial_upper_tail(args.n, args.L, args.K),
            "deviation_probability": oracle.deviation_probability(args.n, args.L, args.K),
            "rate_function": oracle.rate_function(args.L, args.K),
            "ld_bound": g, "quadratic_bound": weak,
        }
    if q == "fourth-moment":
        return {
            "query": q, "N": args.n, "L": args.L,
            "closed_form": oracle.exact_fourth_central_moment_of_loss(args.L, args.n),
            "enumerated": oracle.binomial_central_moment(args.L, args.n, 4),
        }
    if args.config is None:
        raise ConfigError(f"oracle {q} needs --config")
    cfg = load_config(args.config, args.seed)
    if q == "expected-payoff":
        N = args.n if args.n is not None else cfg.geometry.size(cfg.geometry.K)
        out = {"query": q, "N": N, "expected_payoff": oracle.exact_expected_payoff(cfg.model, N, cfg.payoff)}
        try:
            out["limit_expected_payoff"] = oracle.expected_limit_payoff(cfg.model, cfg.payoff)
        except TypeError:
            pass
        return {**out, **_stamp(cfg)}
    if q == "level-moments":
        kind = EstimatorKind(args.kind or cfg.estimator)
        m = oracle.exact_level_moments(cfg.model, args.level, cfg.geometry, cfg.payoff, kind)
        return {"query": q, "level": args.level, "kind": kind.value, "mean": m.mean, "variance": m.variance, "fourth_moment": m.fourth_moment, **_stamp(cfg)}
    raise ConfigError(f"unknown oracle query {q}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exchmlmc", description="Multilevel Monte Carlo for exchangeable Bernoulli losses.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads; affects speed only")
        p.add_argument("-v", "--verbose", action="store_true")

    for name in ("estimate", "convergence", "cdf"):
        common(sub.add_parser(name))
    p = sub.add_parser("oracle")
    p.add_argument("query", choices=["expected-payoff", "level-moments", "tail", "fourth-moment"])
    common(p, config_required=False)
    p.add_argument("--n", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--K", type=float)
    p.add_argument("--level", type=int)
    p.add_argument("--kind", choices=[k.value for k in EstimatorKind])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "oracle":
            if args.query in ("tail", "fourth-moment") and (args.n is None or args.L is None or (args.query == "tail" and args.K is None)):
                raise ConfigError(f"oracle {args.query} needs --n, --L" + (" and --K" if args.query == "tail" else ""))
            if args.query == "level-moments" and args.level is None:
                raise ConfigError("oracle level-moments needs --level")
            out = cmd_oracle(args)
            text = json.dumps(out, indent=2, sort_keys=True)
            print(text)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "oracle.json").write_text(text + "\n")
            return EXIT_OK
        cfg = load_config(args.config, args.seed, args.out)
        command = {"estimate": cmd_estimate, "convergence": cmd_convergence, "cdf": cmd_cdf}[args.command]
        result = command(cfg, args.threads)
        if isinstance(result, MlmcResult):
            print(f"estimate {result.estimate!r} (sd {result.achieved_variance ** 0.5:.3g}, gamma {result.gamma:g})")
        print(f"wrote {cfg.output_dir}")
        return EXIT_OK
    except (ConfigError, ValueError, oracle.EnumerationTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
