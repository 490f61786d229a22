"""Acceptance suite.

Monte Carlo targets run at n = 100, p = 10 with the default seed; every
penalized solve made while producing them is audited for monotone MM
descent. The deterministic property checks follow. Each test carries a
``criterion`` marker so that the terminal summary prints one PASS/FAIL
line per criterion.
"""

import contextlib
import functools
import json

import numpy as np
import pytest

import plmscad.plm as plm_module
from plmscad.cli import main
from plmscad.optimizer import solve_penalized
from plmscad.penalty import PenaltySpec, penalty_derivative, penalty_value
from plmscad.plm import Dataset, FitConfig, build_basis, fit_plm
from plmscad.projection import ProjectionContext
from plmscad.simulation import (
    PopulationModel,
    ScenarioSpec,
    default_config,
    run_replicates,
    summarize,
)
from plmscad.spline_basis import SplineBasis, basis_matrix, make_quantile_partition

TRUTH = np.array([1.0, 2.0, 3.0, 4.0])
SLACK = 1.10
DESCENT_SLACK = 1e-10


# --- instrumented Monte Carlo cells -------------------------------------------

class DescentAudit:
    def __init__(self):
        self.solves = 0
        self.iterations = 0
        self.violations = 0
        self.worst_increase = -np.inf

    def record(self, trace):
        steps = np.diff(np.asarray(trace, dtype=float))
        self.solves += 1
        self.iterations += steps.size
        if steps.size:
            self.worst_increase = max(self.worst_increase, float(steps.max()))
            self.violations += int(np.sum(steps > DESCENT_SLACK))


AUDIT = DescentAudit()


@contextlib.contextmanager
def audited_solver():
    original = plm_module.solve_penalized

    def traced(*args, **kwargs):
        kwargs["record_trace"] = True
        result = original(*args, **kwargs)
        AUDIT.record(result.objective_trace)
        return result

    plm_module.solve_penalized = traced
    try:
        yield
    finally:
        plm_module.solve_penalized = original


@functools.lru_cache(maxsize=None)
def cell(scenario, rho, estimators, replicates=100, n=100, knots=3):
    """Replicate results for one design cell, computed once per session."""
    spec = ScenarioSpec(n=n, rho=rho, g_scenario=scenario, replicates=replicates, estimators=estimators)
    model = PopulationModel(rho=rho)
    config = default_config(n, knots)
    with audited_solver():
        results = run_replicates(spec, config, model, workers=1)
    return model, results


def estimator_results(results, name, estimators, first=None):
    j = estimators.index(name)
    rows = results if first is None else results[:first]
    return [rep[j] for rep in rows]


BASE = ("plm", "plm_scad")
LS = ("ls_scad", "plm")
PLM_ONLY = ("plm",)


def base_cell():
    # 200 replicates; the first 100 are the standard N = 100 run
    return cell("cos_t", 0.0, BASE, replicates=200)


def plm_cell(scenario, rho):
    if scenario == "cos_t" and rho == 0.0:
        model, results = base_cell()
        return model, estimator_results(results, "plm", BASE, first=100)
    if scenario == "cos_t" and rho == 0.8:
        model, results = cell("cos_t", 0.8, BASE)
        return model, estimator_results(results, "plm", BASE)
    if scenario == "cos_2pi_t" and rho == 0.8:
        model, results = cell("cos_2pi_t", 0.8, LS)
        return model, estimator_results(results, "plm", LS)
    model, results = cell(scenario, rho, PLM_ONLY)
    return model, estimator_results(results, "plm", PLM_ONLY)


def ladder():
    out = {}
    for n in (100, 400, 1600):
        knots = default_config(n, "grow").interior_knots
        model, results = cell("cos_t", 0.0, ("plm_scad",), n=n, knots=knots)
        out[n] = summarize([rep[0] for rep in results], model)
    return out


def fmt(values):
    return "(" + ", ".join(f"{v:.4f}" for v in values) + ")"


def check_all(notes, checks):
    for label, ok in checks.items():
        notes.append(f"[{'ok' if ok else 'MISS'}] {label}")
    failed = [label for label, ok in checks.items() if not ok]
    assert not failed, "; ".join(failed)


# --- Monte Carlo criteria -----------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(1, "SCAD fit, g = cos(t), rho = 0: means, zero counts, model error")
def test_scad_independent_design(notes):
    model, results = base_cell()
    s = summarize(estimator_results(results, "plm_scad", BASE, first=100), model)
    check_all(notes, {
        f"mean beta {fmt(s.mean_beta)} within 0.05 of (1, 2, 3, 4)":
            np.all(np.abs(np.array(s.mean_beta) - TRUTH) <= 0.05),
        f"mean correct zeros {s.mean_correct_zeros:.2f} in [4.0, 5.3]": 4.0 <= s.mean_correct_zeros <= 5.3,
        f"median correct zeros {s.median_correct_zeros:g} == 5": s.median_correct_zeros == 5,
        f"median model error {s.median_model_error:.4f} in [0.03, 0.12]": 0.03 <= s.median_model_error <= 0.12,
    })


@pytest.mark.slow
@pytest.mark.criterion(2, "SCAD fit, g = cos(t), rho = 0.8: means and model error")
def test_scad_correlated_design(notes):
    model, results = cell("cos_t", 0.8, BASE)
    s = summarize(estimator_results(results, "plm_scad", BASE), model)
    check_all(notes, {
        f"mean beta {fmt(s.mean_beta)} within 0.08 of (1, 2, 3, 4)":
            np.all(np.abs(np.array(s.mean_beta) - TRUTH) <= 0.08),
        f"median model error {s.median_model_error:.4f} in [0.06, 0.25]": 0.06 <= s.median_model_error <= 0.25,
    })


@pytest.mark.slow
@pytest.mark.criterion(3, "linear SCAD with T as a covariate, g = cos(2 pi t), rho = 0.8: bias")
def test_linear_scad_misspecification_bias(notes):
    model, results = cell("cos_2pi_t", 0.8, LS)
    s = summarize(estimator_results(results, "ls_scad", LS), model)
    check_all(notes, {
        f"mean beta1 {s.mean_beta[0]:.4f} < 0.8": s.mean_beta[0] < 0.8,
        f"mean beta2 {s.mean_beta[1]:.4f} > 2.2": s.mean_beta[1] > 2.2,
    })


@pytest.mark.slow
@pytest.mark.criterion(4, "unpenalized profile fit: no zeros, same estimates under both g")
def test_unpenalized_cells(notes):
    checks = {}
    for rho in (0.0, 0.2, 0.5, 0.8):
        means, noise = [], []
        for scenario in ("cos_t", "cos_2pi_t"):
            model, res = plm_cell(scenario, rho)
            s = summarize(res, model)
            checks[f"{scenario}, rho={rho}: mean correct zeros {s.mean_correct_zeros:g} == 0"] = \
                s.mean_correct_zeros == 0
            means.append(np.array(s.mean_beta))
            noise.append(np.array(s.empirical_sd_beta) ** 2 / s.replicates)
        gap = np.abs(means[0] - means[1])
        bound = 2 * np.sqrt(noise[0] + noise[1])
        checks[f"rho={rho}: |mean beta difference| {fmt(gap)} <= 2 MC SE {fmt(bound)}"] = np.all(gap <= bound)
    check_all(notes, checks)


@pytest.mark.slow
@pytest.mark.criterion(5, "reported standard errors vs empirical SD, rho = 0")
def test_standard_error_calibration(notes):
    model, results = base_cell()
    s = summarize(estimator_results(results, "plm_scad", BASE, first=100), model)
    se, sd = np.array(s.mean_se_beta), np.array(s.empirical_sd_beta)
    ratio = se / sd
    over = int(np.sum(ratio > 1.25))
    check_all(notes, {
        f"mean se {fmt(se)} within 25% of SD {fmt(sd)} (ratios {fmt(ratio)})": np.all(np.abs(ratio - 1) <= 0.25),
        f"coordinates overestimating by more than 25%: {over} <= 1": over <= 1,
    })


@pytest.mark.slow
@pytest.mark.criterion(6, "95% interval coverage over 200 replicates, rho = 0")
def test_interval_coverage(notes):
    _, results = base_cell()
    fits = estimator_results(results, "plm_scad", BASE)
    B = np.array([r.beta_hat[:4] for r in fits])
    SE = np.array([r.std_errors[:4] for r in fits])
    # an unselected coefficient has no interval, which counts as a miss
    covered = np.where(np.isfinite(SE), np.abs(B - TRUTH) <= 1.96 * SE, False)
    coverage = covered.mean(axis=0)
    check_all(notes, {
        f"coverage {fmt(coverage)} over {len(fits)} replicates in [0.88, 0.99]":
            np.all((coverage >= 0.88) & (coverage <= 0.99)),
    })


@pytest.mark.slow
@pytest.mark.criterion(7, "trends along n = 100, 400, 1600 (10% slack)")
def test_sample_size_trends(notes):
    s = ladder()
    ns = sorted(s)
    me = [s[n].median_model_error for n in ns]
    sel = [s[n].exact_selection_rate for n in ns]
    rmse = [s[n].median_g_rmse for n in ns]
    check_all(notes, {
        f"median model error {fmt(me)} decreasing": all(b < SLACK * a for a, b in zip(me, me[1:])),
        f"exact selection rate {fmt(sel)} nondecreasing": all(b >= a - 0.10 for a, b in zip(sel, sel[1:])),
        f"median g RMSE {fmt(rmse)} decreasing": all(b < SLACK * a for a, b in zip(rmse, rmse[1:])),
    })


# --- deterministic criteria ---------------------------------------------------

def direct_profile_ols(data, config):
    basis = build_basis(data.nonparam, config)
    Z = basis_matrix(basis, data.nonparam)
    Xr = data.design - Z @ np.linalg.lstsq(Z, data.design, rcond=None)[0]
    Yr = data.response - Z @ np.linalg.lstsq(Z, data.response, rcond=None)[0]
    return np.linalg.lstsq(Xr, Yr, rcond=None)[0]


@pytest.mark.criterion(8, "unpenalized fit equals direct profile least squares (1e-8)")
def test_unpenalized_collapse(notes):
    config = FitConfig(penalty_family="none")
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, p = int(rng.integers(60, 200)), int(rng.integers(1, 8))
        t = rng.uniform(-1, 2, n)
        X = rng.standard_normal((n, p)) + np.cos(t)[:, None] * rng.uniform(0, 2, p)
        y = X @ rng.normal(0, 2, p) + np.exp(t / 2) + rng.standard_normal(n)
        data = Dataset(y, X, t)
        with audited_solver():
            fit = fit_plm(data, config)
        worst = max(worst, float(np.max(np.abs(fit.beta_hat - direct_profile_ols(data, config)))))
    check_all(notes, {f"max |difference| over 20 instances {worst:.2e} <= 1e-8": worst <= 1e-8})


def grid_minimum_2d(X, y, spec, step=0.01, bound=5.0):
    axis = np.arange(-bound, bound + step / 2, step)
    b1, b2 = np.meshgrid(axis, axis, indexing="ij")
    G, c, yy = X.T @ X, X.T @ y, y @ y
    rss = yy - 2 * (b1 * c[0] + b2 * c[1]) + G[0, 0] * b1 ** 2 + 2 * G[0, 1] * b1 * b2 + G[1, 1] * b2 ** 2
    return float((rss + len(y) * (penalty_value(spec, b1) + penalty_value(spec, b2))).min())


def grid_minimizer_1d(z, spec, step=1e-4):
    grid = np.arange(-abs(z) - 1, abs(z) + 1 + step, step)
    return grid[np.argmin((z - grid) ** 2 + penalty_value(spec, grid))]


@pytest.mark.criterion(9, "optimizer against brute-force grid oracles")
def test_optimizer_oracles(notes):
    worst_gap, worst_coord = -np.inf, 0.0
    for seed in range(25):
        rng = np.random.default_rng(1000 + seed)
        X = rng.standard_normal((30, 2))
        y = X @ rng.uniform(-2.5, 2.5, 2) + rng.standard_normal(30)
        spec = PenaltySpec("scad", float(rng.uniform(0.05, 1.5)))
        res = solve_penalized(X, y, spec)
        worst_gap = max(worst_gap, res.final_objective - grid_minimum_2d(X, y, spec))

        n = 40
        Q = np.linalg.qr(rng.standard_normal((n, 5)))[0] * np.sqrt(n)
        yo = Q @ rng.uniform(-3, 3, 5) + rng.standard_normal(n)
        for family in ("scad", "lasso"):
            spec_o = PenaltySpec(family, float(rng.uniform(0.1, 1.5)))
            coef = solve_penalized(Q, yo, spec_o).coefficients
            expected = [grid_minimizer_1d(z, spec_o) for z in Q.T @ yo / n]
            worst_coord = max(worst_coord, float(np.max(np.abs(coef - expected))))
    check_all(notes, {
        f"2-D: worst (objective - grid minimum) {worst_gap:.3e} <= 1e-6": worst_gap <= 1e-6,
        f"orthonormal: worst coordinate gap {worst_coord:.2e} <= 2e-3": worst_coord <= 2e-3,
    })


def fd_derivatives(basis, x, h):
    B = basis_matrix(basis, np.array([x - h, x, x + h]))
    return (B[2] - B[0]) / (2 * h), (B[2] - 2 * B[1] + B[0]) / h ** 2


@pytest.mark.criterion(11, "spline basis suite")
def test_spline_suite(notes):
    rng = np.random.default_rng(11)
    unity = interp = repro = cont = 0.0
    for order in (1, 2, 3, 4, 5):
        for M in (0, 1, 3, 6):
            t = np.sort(rng.uniform(-2, 3, 150))
            basis = SplineBasis(order, make_quantile_partition(t, M))
            B = basis_matrix(basis, t)
            unity = max(unity, float(np.max(np.abs(B.sum(axis=1) - 1))))
            lo, hi = basis_matrix(basis, list(basis.domain))
            interp = max(interp, float(np.max(np.abs(lo - np.eye(basis.dimension)[0]))),
                         float(np.max(np.abs(hi - np.eye(basis.dimension)[-1]))))
            for d in range(order):
                coef = np.linalg.lstsq(B, t ** d, rcond=None)[0]
                repro = max(repro, float(np.sum((B @ coef - t ** d) ** 2)) / t.size)
            if order == 4:
                h = 1e-5
                for knot in basis.partition.interior_knots:
                    sides = []
                    for sign in (-1, 1):
                        d1a, d2a = fd_derivatives(basis, knot + sign * 2 * h, h)
                        d1b, d2b = fd_derivatives(basis, knot + sign * 4 * h, h)
                        sides.append((2 * d1a - d1b, 2 * d2a - d2b))
                    (l1, l2), (r1, r2) = sides
                    cont = max(cont, float(np.max(np.abs(l1 - r1) / np.maximum(1, np.abs(l1)))),
                               float(np.max(np.abs(l2 - r2) / np.maximum(1, np.abs(l2)))))
    check_all(notes, {
        f"partition of unity max error {unity:.1e} <= 1e-12": unity <= 1e-12,
        f"endpoint interpolation max error {interp:.1e} <= 1e-12": interp <= 1e-12,
        f"polynomial reproduction max RSS/n {repro:.1e} <= 1e-9": repro <= 1e-9,
        f"first/second derivative jump at knots (relative) {cont:.1e} <= 1e-4": cont <= 1e-4,
    })


@pytest.mark.criterion(12, "penalty suite")
def test_penalty_suite(notes):
    joint_gap = fd_gap = tail = 0.0
    for lam in (0.1, 0.7, 2.0):
        for a in (2.5, 3.7, 6.0):
            spec = PenaltySpec("scad", lam, a)
            for joint in (lam, a * lam):
                left, right = np.nextafter(joint, 0), np.nextafter(joint, np.inf)
                vals = penalty_value(spec, np.array([left, joint, right]))
                joint_gap = max(joint_gap, float(np.ptp(vals)))
            h = 1e-6
            grid = np.linspace(lam / 50, (a + 2) * lam, 100)
            grid = grid[(np.abs(grid - lam) > 2 * h) & (np.abs(grid - a * lam) > 2 * h)]
            fd = (penalty_value(spec, grid + h) - penalty_value(spec, grid - h)) / (2 * h)
            fd_gap = max(fd_gap, float(np.max(np.abs(fd - penalty_derivative(spec, grid)))))
            beyond = a * lam * np.linspace(1.0001, 10, 50)
            tail = max(tail, float(np.max(np.abs(penalty_derivative(spec, beyond)))))
    check_all(notes, {
        f"value jump across joints {joint_gap:.1e} <= 1e-12": joint_gap <= 1e-12,
        f"derivative vs central difference {fd_gap:.1e} <= 1e-5": fd_gap <= 1e-5,
        f"derivative beyond a*lambda {tail:g} == 0": tail == 0,
    })


@pytest.mark.criterion(13, "projection suite")
def test_projection_suite(notes):
    worst = {"idempotence": 0.0, "complementarity": 0.0, "norm reduction": 0.0, "symmetry": 0.0}
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, q = int(rng.integers(20, 120)), int(rng.integers(1, 10))
        Z = rng.standard_normal((n, q))
        if seed % 4 == 0 and q > 1:
            Z[:, -1] = Z[:, 0] - 2 * Z[:, 1 % q]
        ctx = ProjectionContext(Z)
        A = rng.standard_normal((n, 3))
        u, v = rng.standard_normal(n), rng.standard_normal(n)
        PA = ctx.project(A)
        scale = np.linalg.norm(A)
        worst["idempotence"] = max(worst["idempotence"], np.linalg.norm(ctx.project(PA) - PA) / scale)
        worst["complementarity"] = max(worst["complementarity"],
                                       np.linalg.norm(PA + ctx.residualize(A) - A) / scale)
        worst["norm reduction"] = max(worst["norm reduction"],
                                      (np.linalg.norm(ctx.residualize(u)) - np.linalg.norm(u)) / np.linalg.norm(u))
        worst["symmetry"] = max(worst["symmetry"], abs(ctx.project(u) @ v - u @ ctx.project(v))
                                / (np.linalg.norm(u) * np.linalg.norm(v)))
    check_all(notes, {f"{k} relative error {val:.1e} <= 1e-10": val <= 1e-10 for k, val in worst.items()})


@pytest.mark.criterion(14, "simulate command is deterministic")
def test_simulate_determinism(notes, tmp_path, monkeypatch):
    monkeypatch.setenv("PLMSCAD_THREADS", "1")
    flags = ["simulate", "--replicates", "3", "--rho", "0,0.8", "--scenario", "1,2"]
    outputs = []
    for name in ("first", "second"):
        with audited_solver():
            assert main([*flags, "--output", str(tmp_path / name)]) == 0
        outputs.append(tmp_path / name)
    a, b = (d / "summary.json" for d in outputs)
    strip = lambda path: [ln for ln in path.read_bytes().splitlines() if b'"timestamp"' not in ln]
    same_summary = strip(a) == strip(b)
    same_tables = all((outputs[0] / f).read_bytes() == (outputs[1] / f).read_bytes()
                      for f in ("table1.csv", "table2.csv"))
    stamps = [json.loads(p.read_text())["metadata"]["timestamp"] for p in (a, b)]
    check_all(notes, {
        "summary.json identical apart from the timestamp line": same_summary,
        "table1.csv and table2.csv byte-identical": same_tables,
        "timestamps present": all(stamps),
    })


@pytest.mark.slow
@pytest.mark.criterion(10, "MM objective never increases in any audited solve")
def test_monotone_descent_audit(notes):
    # make sure every Monte Carlo cell ran under the audit, even when this test runs alone
    base_cell()
    for scenario in ("cos_t", "cos_2pi_t"):
        for rho in (0.0, 0.2, 0.5, 0.8):
            plm_cell(scenario, rho)
    ladder()
    notes.append(f"{AUDIT.solves} solves, {AUDIT.iterations} MM iterations, "
                 f"largest objective increase {AUDIT.worst_increase:.2e}")
    assert AUDIT.solves > 0
    check_all(notes, {f"iterations with increase above {DESCENT_SLACK:g}: {AUDIT.violations}":
                      AUDIT.violations == 0})
