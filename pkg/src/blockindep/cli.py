"""Random-matrix corrected tests of independence between two blocks of a Gaussian vector.

Subcommands: calibrate, test, null-sim, power-sim, density, solve-lsd.
Results go to stdout (or ``--out``), logs to stderr. Exit status is 0 on
success, 2 on usage errors and 1 on numerical or runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import calibrate, calibration_for
from .core import STATISTICS, DimensionError, Dims, MeanMode, PartitionedCov, RatioSet, load_csv, ratios, validate
from .rng import McConfig
from .spectral import fisher_lsd
from .statistics import decide, decide_mc, fisher_pair, mc_null_draws, raw_statistic, sample_cov
from .stieltjes import SpectrumG, invert_to_density, lsd_grid

log = logging.getLogger("blockindep")

SCHEMA_VERSION = 1
DEFAULT_YANG_T = 10.0


class UsageError(ValueError):
    """Invalid flag values or combinations; exit status 2."""


# ---------------------------------------------------------------------------
# helpers


def _span(text: str, *, integer_last: bool = True) -> tuple[float, float, int]:
    try:
        a, b, k = text.split(":")
        return float(a), float(b), int(k) if integer_last else float(k)
    except ValueError:
        raise UsageError(f"expected start:stop:count, got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError:
        raise UsageError(f"expected lo:hi, got {text!r}") from None


def _dims(args) -> Dims:
    if args.n is None or args.p is None or args.p1 is None:
        raise UsageError("--n, --p and --p1 are required")
    d = Dims(args.n, args.p, args.p1)
    validate(d)
    return d


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(rows[0].keys())
        for row in rows:
            w.writerow(_fmt(v) for v in row.values())
    return buf.getvalue()


def _json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _load_config(path: str) -> dict:
    """JSON object or ``key = value`` lines; keys use flag names (dashes or underscores)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
    return {k.lstrip("-").replace("-", "_"): v for k, v in raw.items()}


def _apply_config(parser: argparse.ArgumentParser, cfg: dict) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for k, v in cfg.items():
        if k not in actions:
            raise UsageError(f"unknown config key {k!r}")
        act = actions[k]
        if isinstance(v, str) and act.type is not None:
            v = act.type(v)
        elif isinstance(v, str) and isinstance(act, argparse._StoreTrueAction):
            v = v.lower() in ("1", "true", "yes", "on")
        defaults[k] = v
    parser.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# subcommands


def cmd_calibrate(args) -> int:
    d = _dims(args).effective(args.mean)
    consts = {"schema_version": SCHEMA_VERSION, **calibrate(d)}
    if args.format == "json":
        _emit(_json(consts), args.out)
    else:
        width = max(len(k) for k in consts)
        _emit("".join(f"{k:<{width}}  {_fmt(v)}\n" for k, v in consts.items()), args.out)
    return 0


def _parse_test_stats(args) -> list[str]:
    items = [s.strip().upper() for s in args.stat.split(",") if s.strip()]
    if items == ["ALL"]:
        items = list(STATISTICS)
    for s in items:
        if s not in STATISTICS:
            raise UsageError(f"unknown statistic {s!r}; choose from {', '.join(STATISTICS)} or all")
    if "YANG" in items and args.yang_t is None:
        log.warning("--stat yang without --yang-t: using t = %g", DEFAULT_YANG_T)
        args.yang_t = DEFAULT_YANG_T
    return items


def cmd_test(args) -> int:
    if args.data is None or args.p1 is None:
        raise UsageError("--data and --p1 are required")
    stats = _parse_test_stats(args)
    X = load_csv(args.data, header=args.header, delimiter=args.delimiter)
    n, p = X.shape
    mean = MeanMode(args.mean)
    dims = Dims(n, p, args.p1)
    validate(dims)
    eff = dims.effective(mean)
    validate(eff)
    S = PartitionedCov.from_matrix(sample_cov(X, mean), args.p1)
    fp = fisher_pair(S, eff)
    r = ratios(eff)
    outcomes = []
    for sid in stats:
        t = args.yang_t if sid == "YANG" else 0.0
        raw = raw_statistic(sid, S, eff, fp=fp, t=t)
        if sid in ("JIANG", "YANG"):
            mc = McConfig(reps=args.reps, seed=args.seed, alpha=args.alpha)
            if mc.reps < 200:
                raise UsageError("--reps must be at least 200 for simulated critical values")
            draws = mc_null_draws(sid, eff, mc, t=t)
            rec = decide_mc(raw, draws, args.alpha, sid).to_dict()
            if sid == "YANG":
                rec["t"] = t
        else:
            rec = decide(raw, calibration_for(sid, r), eff, args.alpha).to_dict()
        outcomes.append(rec)
    payload = {"schema_version": SCHEMA_VERSION, "n": n, "p": p, "p1": args.p1, "mean": mean.value}
    payload["results"] = outcomes if len(stats) > 1 or args.stat.lower() == "all" else outcomes[0]
    _emit(_json(payload), args.out)
    return 0


def _mc(args) -> McConfig:
    return McConfig(reps=args.reps, seed=args.seed, alpha=args.alpha, parallelism=args.jobs)


def cmd_null_sim(args) -> int:
    from .simulate import NullScenario, parse_stats, run_null

    dims = _dims(args)
    scen = NullScenario(
        dims,
        block1_range=_pair(args.block1),
        block2_range=_pair(args.block2),
        seed=args.seed if args.scenario_seed is None else args.scenario_seed,
        mean_mode=MeanMode(args.mean),
    )
    res = run_null(scen, parse_stats(args.stat, args.yang_t), _mc(args), calib_reps=args.calib_reps)
    rows = res.rows()
    if args.format == "json":
        _emit(_json({"schema_version": SCHEMA_VERSION, "seed": args.seed, "results": rows}), args.out)
    else:
        _emit(_csv(rows), args.out)
    if args.hist:
        hist = []
        for s in res.stats:
            centers, counts = res.histogram(s.label)
            hist += [{"statistic": s.label, "bin_center": c, "count": k} for c, k in zip(centers, counts)]
        Path(args.hist).write_text(_csv(hist))
        log.info("wrote %s", args.hist)
    return 0


def cmd_power_sim(args) -> int:
    from .simulate import AltScenario, parse_stats, run_power

    dims = _dims(args)
    a, b, k = _span(args.rho)
    if k < 1:
        raise UsageError("rho grid needs at least one point")
    grid = np.linspace(a, b, k)
    template = AltScenario(
        dims,
        sigma=args.sigma,
        sparsity=args.sparsity,
        seed=args.seed if args.scenario_seed is None else args.scenario_seed,
        mean_mode=MeanMode(args.mean),
    )
    res = run_power(template, grid, parse_stats(args.stat, args.yang_t), _mc(args), calib_reps=args.calib_reps)
    rows = res.rows()
    if args.format == "json":
        summary = {
            "schema_version": SCHEMA_VERSION,
            "seed": args.seed,
            "n": dims.n,
            "p": dims.p,
            "p1": dims.p1,
            "sigma": args.sigma,
            "sparsity": args.sparsity,
            "rho": grid.tolist(),
            "lambda_max_R": res.lambda_max_r.tolist(),
            "monotone_excess_se": {s.label: res.monotone_excess(s.label) for s in res.stats},
            "results": rows,
        }
        _emit(_json(summary), args.out)
    else:
        _emit(_csv(rows), args.out)
    for s in res.stats:
        log.info("%s: max deviation from isotonic fit %.2f SE", s.label, res.monotone_excess(s.label))
    return 0


def _ratio_args(args) -> RatioSet:
    if args.gamma1 is not None or args.gamma2 is not None:
        if args.gamma1 is None or args.gamma2 is None:
            raise UsageError("give both --gamma1 and --gamma2")
        if args.gamma1 <= 0 or not 0 < args.gamma2 < 1:
            raise UsageError("need gamma1 > 0 and 0 < gamma2 < 1")
        return RatioSet.from_gammas(args.gamma1, args.gamma2, getattr(args, "c1", None), getattr(args, "c", None))
    return ratios(_dims(args))


def cmd_density(args) -> int:
    lsd = fisher_lsd(_ratio_args(args))
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    x = np.linspace(lsd.a, lsd.b, args.points)
    q = lsd.density(x)
    _emit(_csv([{"x": xi, "density": qi} for xi, qi in zip(x, q)]), args.out)
    log.info("support [%g, %g], atom at 0 of mass %g", lsd.a, lsd.b, lsd.mass0)
    return 0


def cmd_solve_lsd(args) -> int:
    if args.gamma1 is None or args.gamma2 is None:
        raise UsageError("--gamma1 and --gamma2 are required")
    r = _ratio_args(args)
    G = SpectrumG.load(args.G)
    lo, hi, k = _span(args.grid)
    if k < 2 or not hi > lo:
        raise UsageError("grid needs xmin < xmax and at least two points")
    if not 1e-6 <= args.eps <= 1e-2:
        raise UsageError("--eps must lie in [1e-6, 1e-2]")
    dens = invert_to_density(lsd_grid(r, G, np.linspace(lo, hi, k), eps=args.eps))
    _emit(_csv([{"x": xi, "density": qi} for xi, qi in zip(dens.x, dens.density)]), args.out)
    log.info("mass on grid %.6f (expected %.6f)", dens.mass, 1.0 - dens.mass0)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_dims(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, help="sample size")
    p.add_argument("--p", type=int, help="total dimension")
    p.add_argument("--p1", type=int, help="dimension of the first block")
    p.add_argument("--mean", choices=[m.value for m in MeanMode], default=MeanMode.KNOWN_ZERO.value,
                   help="known-zero mean, or estimated mean with n replaced by n-1 (default: %(default)s)")


def _add_mc(p: argparse.ArgumentParser, stat_default: str) -> None:
    p.add_argument("--stat", default=stat_default,
                   help="comma list from LR,W,LH,BNP,JIANG,YANG[:t],all (default: %(default)s)")
    p.add_argument("--yang-t", type=float, nargs="+", default=[10.0, 40.0],
                   help="ridge values for a bare YANG entry (default: 10 40)")
    p.add_argument("--reps", type=int, default=1000, help="replications per scenario (default: %(default)s)")
    p.add_argument("--calib-reps", type=int, default=None,
                   help="null replications for simulated JIANG/YANG critical values (default: --reps)")
    p.add_argument("--seed", type=int, default=0, help="64-bit seed for the replication streams (default: %(default)s)")
    p.add_argument("--scenario-seed", type=int, default=None,
                   help="seed for population matrices and sparsity masks (default: --seed)")
    p.add_argument("--alpha", type=float, default=0.05, help="nominal level (default: %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes; results do not depend on it (default: %(default)s)")
    p.add_argument("--format", choices=["csv", "json"], default="csv", help="output format (default: %(default)s)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="blockindep", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--config", help="JSON or key=value file with flag defaults; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("calibrate", help="centering and scaling constants for (n, p, p1)")
    _add_dims(p)
    p.add_argument("--format", choices=["json", "text"], default="json", help="output format (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_calibrate)
    subs["calibrate"] = p

    p = sub.add_parser("test", help="test independence of the first p1 columns from the rest")
    p.add_argument("--data", help="CSV file, one observation per row")
    p.add_argument("--p1", type=int, help="number of leading columns forming the first block")
    p.add_argument("--stat", default="lh", help="lr, w, lh, bnp, jiang, yang, a comma list, or all (default: %(default)s)")
    p.add_argument("--alpha", type=float, default=0.05, help="nominal level (default: %(default)s)")
    p.add_argument("--mean", choices=[m.value for m in MeanMode], default=MeanMode.KNOWN_ZERO.value,
                   help="known-zero mean, or estimated mean with n replaced by n-1 (default: %(default)s)")
    p.add_argument("--yang-t", type=float, default=None, help=f"ridge t >= 0 for YANG (default: {DEFAULT_YANG_T:g}, with a warning)")
    p.add_argument("--reps", type=int, default=1000,
                   help="null replications (identity covariance) for JIANG/YANG critical values (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed for the null replications (default: %(default)s)")
    p.add_argument("--header", action="store_true", help="skip one header line")
    p.add_argument("--delimiter", default=",", help="field delimiter (default: comma)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_test)
    subs["test"] = p

    p = sub.add_parser("null-sim", help="empirical levels under a block-diagonal population")
    _add_dims(p)
    _add_mc(p, "LR,W,LH,BNP")
    p.add_argument("--block1", default="0:1", help="eigenvalue range lo:hi of the first block, drawn on (lo, hi] (default: %(default)s)")
    p.add_argument("--block2", default="1:10", help="eigenvalue range lo:hi of the second block (default: %(default)s)")
    p.add_argument("--hist", help="also write standardized-draw histograms (bin_center, count) to this CSV")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_null_sim)
    subs["null-sim"] = p

    p = sub.add_parser("power-sim", help="empirical power against an equicorrelated off-block alternative")
    _add_dims(p)
    _add_mc(p, "LR,W,LH,BNP,JIANG,YANG")
    p.add_argument("--rho", default="0:0.0325:14", help="correlation grid start:stop:count, rho = sigma12/sigma (default: %(default)s)")
    p.add_argument("--sigma", type=float, default=40.0, help="common diagonal scale of both blocks (default: %(default)s)")
    p.add_argument("--sparsity", type=float, default=0.0, help="fraction of off-block entries set to zero (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_power_sim)
    subs["power-sim"] = p

    p = sub.add_parser("density", help="limiting null spectral density of W T^-1 as (x, density) CSV")
    _add_dims(p)
    p.add_argument("--gamma1", type=float, help="limiting (p-p1)/p1; overrides --n/--p/--p1")
    p.add_argument("--gamma2", type=float, help="limiting (p-p1)/(n-p1)")
    p.add_argument("--points", type=int, default=200, help="number of grid points on [a, b] (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_density)
    subs["density"] = p

    p = sub.add_parser("solve-lsd", help="spectral density of W T^-1 under an alternative, by Stieltjes inversion")
    p.add_argument("--gamma1", type=float, help="(p-p1)/p1")
    p.add_argument("--gamma2", type=float, help="(p-p1)/(n-p1), in (0, 1)")
    p.add_argument("--c1", type=float, help="p1/n (default: implied by gamma1, gamma2)")
    p.add_argument("--c", type=float, help="p/n (default: implied by gamma1, gamma2)")
    p.add_argument("--G", default="null", help="'null' or CSV of eigenvalue[,weight] rows for the coupling spectrum (default: %(default)s)")
    p.add_argument("--grid", default="0:5:500", help="real grid xmin:xmax:npts (default: %(default)s)")
    p.add_argument("--eps", type=float, default=1e-4, help="height Im z of the evaluation line (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_solve_lsd)
    subs["solve-lsd"] = p
    return parser, subs


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            cmd = next((a for a in argv if a in subs), None)
            if cmd is not None:
                _apply_config(subs[cmd], _load_config(known.config))
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"blockindep: error: {exc}", file=sys.stderr)
        return 2

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, DimensionError) as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # numerical or I/O failure
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
