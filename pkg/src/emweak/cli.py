"""Command-line front end.

Subcommands: rate, check, modulus, svc, cross-check. Machine-readable
results go to stdout or to files named from ``--out``; progress and
diagnostics go to stderr.

Exit codes: 0 success (verdict PASS or NOT-APPLICABLE), 1 configuration
or input error, 2 failed verdict.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from emweak.config import ConfigError, ExperimentConfig
from emweak.core import EmweakError
from emweak.drifts import MAX_SVC_DEPTH, DEFAULT_SVC_DEPTH, svc_locate, svc_value
from emweak.experiment import FAIL, girsanov_cross_check, rate_vs_theory, weak_error_curve
from emweak.girsanov import check_lambda_horizon, check_weak_rate_condition
from emweak.regularity import UnsupportedDriftError, h2_fit, modulus_curve

log = logging.getLogger("emweak")

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2


def fmt(v) -> str:
    """17 significant digits, '.' decimal, no locale."""
    if v is None:
        return ""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def short(v) -> str:
    """Shortest repr that round-trips to the same float."""
    v = float(v)
    return fmt(v) if not math.isfinite(v) else repr(v)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(fmt(v))
    return obj


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    workers = args.workers
    if workers is None and os.environ.get("SDE_WORKERS"):
        try:
            workers = int(os.environ["SDE_WORKERS"])
        except ValueError:
            raise ConfigError("SDE_WORKERS must be an integer", "n_workers") from None
    return cfg.replace(master_seed=args.seed, n_workers=workers, output=args.out, n_paths=args.paths)


def cmd_rate(cfg: ExperimentConfig) -> int:
    drift, sigma, f = cfg.drift_spec(), cfg.sigma_spec(), cfg.test_function()
    t0 = time.perf_counter()
    log.info("rate: drift=%s f=%s T=%s paths=%d", drift.name, f.name, cfg.T, cfg.n_paths)
    report = weak_error_curve(
        drift, sigma, f, float(cfg.T), cfg.deltas(), cfg.n_paths, cfg.master_seed,
        x0=tuple(cfg.x0), delta_ref=cfg.delta_ref(), n_workers=cfg.n_workers, n_boot=cfg.n_boot,
    )
    verdict = rate_vs_theory(report)
    log.info("rate: done in %.1fs, verdict %s", time.perf_counter() - t0, verdict.status)
    with open(f"{cfg.output}.rate.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "error", "ci_low", "ci_high", "n_paths"])
        for i, d in enumerate(report.delta_grid):
            w.writerow([fmt(d), fmt(report.errors[i]), fmt(report.ci_low[i]),
                        fmt(report.ci_high[i]), report.n_paths])
    payload = report.to_dict()
    payload["verdict"] = verdict.status
    payload["verdict_margin"] = verdict.margin
    payload["verdict_reason"] = verdict.reason
    payload["config"] = cfg.to_dict()
    with open(f"{cfg.output}.report.json", "w", encoding="utf-8") as fh:
        json.dump(_json_safe(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"verdict={verdict.status} fitted_rate={fmt(report.fitted_rate)}")
    return EXIT_FAIL if verdict.status == FAIL else EXIT_OK


def cmd_check(cfg: ExperimentConfig) -> int:
    drift, sigma = cfg.drift_spec(), cfg.sigma_spec()
    T, p0 = float(cfg.T), cfg.p0_value()
    l2 = drift.effective_l2
    thm = check_weak_rate_condition(T, l2, sigma, p0)
    lem = check_lambda_horizon(T, float(cfg.lam), l2, sigma)
    mh = "inf" if math.isinf(thm.max_horizon) else f"{thm.max_horizon:.6f}"
    print(f"theorem21={'pass' if thm.passed else 'fail'} max_horizon={mh} "
          f"lhs={short(thm.lhs)} margin={short(thm.margin)} T={short(T)} p0={short(p0)} l2={short(l2)}")
    print(f"lemma31={'pass' if lem.passed else 'fail'} lhs={short(lem.lhs)} "
          f"margin={short(lem.margin)} lambda={short(cfg.lam)} T={short(T)}")
    return EXIT_OK


def cmd_modulus(cfg: ExperimentConfig) -> int:
    drift = cfg.drift_spec()
    if drift.dim != 1:
        raise ConfigError("modulus needs a 1-d drift", "drift")
    if drift.constant:
        print("error: constant drift, modulus is identically zero (degenerate)", file=sys.stderr)
        return EXIT_CONFIG
    curve = modulus_curve(drift, cfg.shifts())
    if curve.degenerate:
        print("error: modulus vanishes on the shift grid (degenerate)", file=sys.stderr)
        return EXIT_CONFIG
    log.info("modulus: fitted exponent %.4f, running H2 fit", curve.fitted_exponent)
    fit = h2_fit(drift, cfg.p0_value(), n_samples=cfg.h2_samples, seed=cfg.master_seed,
                 phi_model=cfg.phi_model)
    is_svc = drift.name == "svc"
    with open(f"{cfg.output}.modulus.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "m_u", "bound_4u"])
        for u, m in zip(curve.shifts, curve.values):
            w.writerow([fmt(u), fmt(m), fmt(4 * u) if is_svc else ""])
        w.writerow(["fitted_exponent", fmt(curve.fitted_exponent), ""])
        w.writerow(["alpha_hat", fmt(fit.alpha_hat), ""])
    print(f"fitted_exponent={fmt(curve.fitted_exponent)} alpha_hat={fmt(fit.alpha_hat)}"
          + (f" bound_4u_ok={str(curve.bound_4u_ok).lower()}" if is_svc else ""))
    return EXIT_OK


def cmd_svc(x: float, depth: int) -> int:
    if depth > MAX_SVC_DEPTH or depth < 1:
        print(f"error: depth must lie in 1..{MAX_SVC_DEPTH}", file=sys.stderr)
        return EXIT_CONFIG
    loc = svc_locate(x, depth)
    line = f"value={fmt(svc_value(loc))} tag={loc.tag}"
    if loc.interval is not None:
        line += f" interval={loc.interval}"
    print(line)
    return EXIT_OK


def cmd_cross_check(cfg: ExperimentConfig) -> int:
    drift, sigma, f = cfg.drift_spec(), cfg.sigma_spec(), cfg.test_function()
    delta = math.ldexp(float(cfg.T), -cfg.cross_delta_exp)
    rec = girsanov_cross_check(drift, sigma, f, float(cfg.T), delta, cfg.n_paths,
                               cfg.master_seed, tuple(cfg.x0), cfg.n_workers)
    if rec.skipped:
        print(f"skipped=true reason={rec.reason!r}")
        return EXIT_OK
    print(f"direct={short(rec.direct)} direct_se={short(rec.direct_se)} weighted={short(rec.weighted)} "
          f"weighted_se={short(rec.weighted_se)} z={short(rec.z_score)} pass={str(rec.passed).lower()}")
    return EXIT_OK if rec.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emweak", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("rate", "check", "modulus", "cross-check"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", metavar="PREFIX")
        sp.add_argument("--paths", type=int)
    sp = sub.add_parser("svc", help="evaluate the fat Cantor drift at a point")
    sp.add_argument("x", type=float)
    sp.add_argument("--depth", type=int, default=DEFAULT_SVC_DEPTH)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(name)s: %(message)s")
    if args.command == "svc":
        return cmd_svc(args.x, args.depth)
    try:
        cfg = load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handlers = {"rate": cmd_rate, "check": cmd_check, "modulus": cmd_modulus,
                "cross-check": cmd_cross_check}
    try:
        return handlers[args.command](cfg)
    except (ConfigError, UnsupportedDriftError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmweakError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
