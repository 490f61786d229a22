"""Command-line interface: ``plmscad {fit,predict-g,simulate,basis-dump}``.

Exit codes: 0 success, 2 user/input error, 3 numerical/model error,
4 internal error.
"""

import argparse
import csv
import datetime
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .errors import PLMInputError, PLMNumericalError
from .optimizer import SolverOptions
from .plm import Dataset, FitConfig, fit_plm, predict_g
from .simulation import ESTIMATORS, G_SCENARIOS, RNG_ALGORITHM, ScenarioSpec, run_scenario, scenario_name
from .spline_basis import KnotPartition, SplineBasis, basis_matrix, make_quantile_partition

log = logging.getLogger("plmscad")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_INTERNAL = 0, 2, 3, 4
FIT_SCHEMA = "plmscad.fit/1"
PREDICT_SCHEMA = "plmscad.predict-g/1"
SIM_SCHEMA = "plmscad.simulate/1"
G_GRID_POINTS = 200
DUMP_POINTS = 500
STDOUT = "-"


class CliError(PLMInputError):
    """Bad flags, files or cell contents."""


# --- IO helpers -------------------------------------------------------------

def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(payload):
    # repr-based floats are shortest round-trip, hence lossless
    return json.dumps(_to_jsonable(payload), indent=2, sort_keys=False) + "\n"


def write_output(path, text):
    """Write ``text`` to ``path`` atomically, or to stdout for ``-``."""
    if path in (None, STDOUT):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".plmscad-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                         for v in row])
    return buf.getvalue()


def read_csv_columns(path):
    """Header plus a dict of raw string columns."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows or not rows[0]:
        raise CliError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise CliError(f"{path}: duplicate column names in header")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise CliError(f"{path}: row {i + 1} has {len(r)} fields, expected {len(header)}")
    return header, body


def _numeric_column(body, header, name):
    j = header.index(name)
    out = np.empty(len(body))
    for i, row in enumerate(body):
        cell = row[j].strip()
        try:
            out[i] = float(cell)
        except ValueError:
            raise CliError(f"non-numeric value {cell!r} at row {i + 1}, column {name!r}") from None
        if not math.isfinite(out[i]):
            raise CliError(f"non-finite value {cell!r} at row {i + 1}, column {name!r}")
    return out


def load_dataset(path, response, nonparam, exclude=()):
    header, body = read_csv_columns(path)
    for name in [response, nonparam, *exclude]:
        if name not in header:
            raise CliError(f"column {name!r} not found in {path}")
    if response == nonparam:
        raise CliError("response and nonparametric columns must differ")
    covariates = [h for h in header if h not in {response, nonparam, *exclude}]
    if not covariates:
        raise CliError("no covariate columns left for the linear part")
    y = _numeric_column(body, header, response)
    t = _numeric_column(body, header, nonparam)
    X = np.column_stack([_numeric_column(body, header, c) for c in covariates])
    return Dataset(y, X, t, covariates)


def _parse_list(text, cast=float):
    if text is None:
        return None
    try:
        return [cast(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise CliError(f"cannot parse list {text!r}") from None


def _lambda_grid(text):
    if text is None or str(text).strip().lower() == "auto":
        return None
    return tuple(_parse_list(text))


def fit_config_from_args(args):
    return FitConfig(
        spline_order=args.order,
        interior_knots=args.knots,
        penalty_family=args.penalty,
        a=args.a,
        lambda_grid=_lambda_grid(args.lambda_grid),
        solver=SolverOptions(),
    )


def format_estimate(estimate, se, digits=3):
    """``"0.645 (0.092)"`` for selected terms, ``"0 (-)"`` for dropped ones."""
    if estimate == 0 or se is None or not math.isfinite(se):
        return "0 (-)" if estimate == 0 else f"{estimate:.{digits}f} (-)"
    return f"{estimate:.{digits}f} ({se:.{digits}f})"


# --- commands ---------------------------------------------------------------

def fit_report(data, config, fit, args):
    lo, hi = fit.basis.domain
    grid = np.linspace(lo, hi, G_GRID_POINTS)
    coefficients = []
    for name, est, se, sel in zip(fit.column_names, fit.beta_hat, fit.std_errors, fit.selected):
        se_val = float(se) if sel and np.isfinite(se) else None
        coefficients.append({
            "name": name, "estimate": float(est), "std_error": se_val,
            "selected": bool(sel), "display": format_estimate(float(est), se_val),
        })
    return {
        "schema": FIT_SCHEMA,
        "version": __version__,
        "input": os.path.basename(args.input),
        "response": args.response,
        "nonparam": args.nonparam,
        "n": data.n,
        "p": data.p,
        "config": {
            "order": config.spline_order, "interior_knots": config.interior_knots,
            "penalty": config.penalty_family, "a": config.a,
            "lambda_grid": "auto" if config.lambda_grid is None else list(config.lambda_grid),
        },
        "coefficients": coefficients,
        "lambda_chosen": fit.lambda_chosen,
        "gcv_table": [{"lambda": lam, "gcv": g, "df": df} for lam, g, df in fit.gcv_table],
        "sigma2_hat": fit.sigma2_hat,
        "df": fit.df,
        "spline": {
            "order": fit.basis.order,
            "boundary": [lo, hi],
            "interior_knots": list(fit.basis.partition.interior_knots),
            "knot_vector": fit.basis.knots.tolist(),
            "alpha": fit.alpha_hat,
        },
        "g_grid": {"t": grid, "g": predict_g(fit, grid)},
        "fitted_g": predict_g(fit, data.nonparam),
        "residuals": fit.residuals,
    }


def cmd_fit(args):
    data = load_dataset(args.input, args.response, args.nonparam, _parse_list(args.exclude, str) or ())
    config = fit_config_from_args(args)
    fit = fit_plm(data, config)
    report = fit_report(data, config, fit, args)
    if args.format == "csv":
        rows = [(c["name"], c["estimate"], c["std_error"], c["display"]) for c in report["coefficients"]]
        text = _csv_text(["name", "estimate", "std_error", "display"], rows)
    else:
        text = dumps_json(report)
    write_output(args.output, text)
    return EXIT_OK


def cmd_predict_g(args):
    data = load_dataset(args.input, args.response, args.nonparam, _parse_list(args.exclude, str) or ())
    config = fit_config_from_args(args)
    fit = fit_plm(data, config)
    if args.at:
        t = np.asarray(_parse_list(args.at))
    else:
        t = np.linspace(*fit.basis.domain, G_GRID_POINTS)
    g = predict_g(fit, t)
    if args.format == "csv":
        text = _csv_text(["t", "g_hat"], zip(t.tolist(), g.tolist()))
    else:
        text = dumps_json({"schema": PREDICT_SCHEMA, "t": t, "g_hat": g})
    write_output(args.output, text)
    return EXIT_OK


def _load_sim_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise CliError(f"{path}: expected a JSON object")
    return cfg


def _sim_setting(args, cfg, key, default):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    return cfg.get(key.replace("-", "_"), default)


def simulation_plan(args):
    cfg = _load_sim_config(args.config)
    scenarios = _sim_setting(args, cfg, "scenario", "1")
    rhos = _sim_setting(args, cfg, "rho", "0")
    estimators = _sim_setting(args, cfg, "estimators", ",".join(ESTIMATORS))
    scenarios = [scenario_name(s) for s in (_parse_list(scenarios, str) if isinstance(scenarios, str)
                                            else scenarios)]
    rhos = _parse_list(rhos) if isinstance(rhos, str) else [float(r) for r in np.atleast_1d(rhos)]
    estimators = tuple(_parse_list(estimators, str) if isinstance(estimators, str) else estimators)
    n = int(_sim_setting(args, cfg, "n", 100))
    replicates = int(_sim_setting(args, cfg, "replicates", 100))
    seed = int(_sim_setting(args, cfg, "seed", ScenarioSpec.seed))
    for r in rhos:
        if not 0 <= r < 1:
            raise CliError(f"rho must lie in [0, 1), got {r}")
    if replicates < 1:
        raise CliError(f"replicates must be >= 1, got {replicates}")
    specs = [ScenarioSpec(n=n, rho=r, g_scenario=s, replicates=replicates, seed=seed,
                          estimators=estimators) for s in scenarios for r in rhos]
    config = FitConfig(
        spline_order=int(_sim_setting(args, cfg, "order", 4)),
        interior_knots=int(_sim_setting(args, cfg, "knots", 3)),
        a=float(_sim_setting(args, cfg, "a", 3.7)),
        lambda_grid=_lambda_grid(_sim_setting(args, cfg, "lambda_grid", None)),
    )
    return specs, config


def _table1_rows(summaries):
    for s in summaries:
        sc = G_SCENARIOS[s.scenario.g_scenario]
        for name, e in s.estimators.items():
            pct = None if e.pct_g_zeroed is None else 100 * e.pct_g_zeroed
            yield (sc, name, s.scenario.rho, *e.mean_beta, e.mean_correct_zeros,
                   e.median_correct_zeros, pct, 100 * e.median_model_error, 100 * e.sd_model_error)


def _table2_rows(summaries):
    for s in summaries:
        e = s.estimators.get("plm_scad")
        if e is None:
            continue
        pairs = [v for pair in zip(e.empirical_sd_beta, e.mean_se_beta or [None] * 4) for v in pair]
        yield (G_SCENARIOS[s.scenario.g_scenario], s.scenario.rho, *pairs)


TABLE1_HEADER = ["scenario", "estimator", "rho", "beta1", "beta2", "beta3", "beta4",
                 "K_bar", "K_tilde", "pct_g_zero", "MME_x100", "SD_ME_x100"]
TABLE2_HEADER = ["scenario", "rho", "SD_beta1", "se_beta1", "SD_beta2", "se_beta2",
                 "SD_beta3", "se_beta3", "SD_beta4", "se_beta4"]


def cmd_simulate(args):
    specs, config = simulation_plan(args)
    summaries = [run_scenario(spec, config) for spec in specs]
    body = {
        "runs": [s.to_dict() for s in summaries],
    }
    config_hash = hashlib.sha256(json.dumps(_to_jsonable(
        {"runs": [{"scenario": r["scenario"], "fit_config": r["fit_config"]} for r in body["runs"]]}),
        sort_keys=True).encode()).hexdigest()
    payload = {
        "schema": SIM_SCHEMA,
        "metadata": {
            "version": __version__,
            "seed": specs[0].seed,
            "rng_algorithm": RNG_ALGORITHM,
            "config_hash": config_hash,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
        **body,
    }
    json_text = dumps_json(payload)
    t1 = _csv_text(TABLE1_HEADER, _table1_rows(summaries))
    t2 = _csv_text(TABLE2_HEADER, _table2_rows(summaries))
    if args.output in (None, STDOUT):
        write_output(STDOUT, json_text if args.format == "json" else t1)
        return EXIT_OK
    write_output(os.path.join(args.output, "summary.json"), json_text)
    write_output(os.path.join(args.output, "table1.csv"), t1)
    write_output(os.path.join(args.output, "table2.csv"), t2)
    return EXIT_OK


def cmd_basis_dump(args):
    if args.order < 1 or args.knots < 0:
        raise CliError("need --order >= 1 and --knots >= 0")
    if args.input:
        if not args.nonparam:
            raise CliError("--input requires --nonparam")
        header, body = read_csv_columns(args.input)
        if args.nonparam not in header:
            raise CliError(f"column {args.nonparam!r} not found in {args.input}")
        partition = make_quantile_partition(_numeric_column(body, header, args.nonparam), args.knots)
    else:
        partition = KnotPartition.uniform(args.lower, args.upper, args.knots)
    basis = SplineBasis(args.order, partition)
    t = np.linspace(partition.lower_boundary, partition.upper_boundary, DUMP_POINTS)
    t[-1] = partition.upper_boundary
    B = basis_matrix(basis, t)
    header = ["t"] + [f"B{w + 1}" for w in range(basis.dimension)]
    write_output(args.output, _csv_text(header, (row for row in np.column_stack([t, B]).tolist())))
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def _add_fit_flags(p):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--output", default=STDOUT, help="output path, '-' for stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--response", required=True)
    p.add_argument("--nonparam", required=True, help="column entering through the spline")
    p.add_argument("--exclude", default=None, help="comma-separated columns to ignore")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--knots", type=int, default=3)
    p.add_argument("--penalty", choices=("scad", "lasso", "none"), default="scad")
    p.add_argument("--a", type=float, default=3.7)
    p.add_argument("--lambda-grid", default="auto", help="'auto' or comma-separated values")


def build_parser():
    parser = argparse.ArgumentParser(prog="plmscad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a partially linear model to CSV data")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict-g", help="refit and evaluate the nonparametric component")
    _add_fit_flags(p)
    p.add_argument("--at", default=None, help="comma-separated t values (default: 200-point grid)")
    p.set_defaults(func=cmd_predict_g)

    p = sub.add_parser("simulate", help="run the Monte Carlo comparison")
    p.add_argument("--config", default=None, help="JSON scenario file; flags override it")
    p.add_argument("--output", default=STDOUT, help="output directory, '-' for stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="stdout format when --output is '-'")
    p.add_argument("--scenario", default=None, help="comma-separated subset of 1,2")
    p.add_argument("--rho", default=None, help="comma-separated correlations in [0, 1)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--estimators", default=None, help=f"comma-separated subset of {','.join(ESTIMATORS)}")
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--knots", type=int, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--lambda-grid", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("basis-dump", help="tabulate the B-spline basis on a 500-point grid")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--knots", type=int, default=3)
    p.add_argument("--lower", type=float, default=0.0)
    p.add_argument("--upper", type=float, default=1.0)
    p.add_argument("--input", default=None, help="take quantile knots from this CSV")
    p.add_argument("--nonparam", default=None)
    p.add_argument("--output", default=STDOUT)
    p.set_defaults(func=cmd_basis_dump)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except PLMInputError as exc:
        print(f"plmscad: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PLMNumericalError as exc:
        print(f"plmscad: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"plmscad: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
