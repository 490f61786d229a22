"""Seeded Monte Carlo study for the partially linear SCAD estimator.

Data follow the ten-covariate design with AR(rho) errors, ``beta = (1, 2,
3, 4, 0, ..., 0)`` and ``g(t) = cos(t)`` or ``cos(2 pi t)``. Five
estimators are compared: linear SCAD treating ``T`` as a covariate,
unpenalized profile least squares, exhaustive AIC subset selection,
LASSO and SCAD.
"""

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, PLMNumericalError
from .optimizer import SolverOptions
from .plm import Dataset, FitConfig, fit_plm, predict_g, profile_penalized_fit
from .projection import ProjectionContext

ESTIMATORS = ("ls_scad", "plm", "plm_aic", "plm_lasso", "plm_scad")
G_SCENARIOS = {"cos_t": 1, "cos_2pi_t": 2}
RNG_ALGORITHM = "numpy.random.Philox (4x64-10) seeded by SeedSequence([seed, n, replicate])"
AIC_MAX_SUBSETS = 2 ** 20
N_SIGNAL = 4
G_GRID_POINTS = 200
THREADS_ENV = "PLMSCAD_THREADS"


def g_function(name):
    if name == "cos_t":
        return np.cos
    if name == "cos_2pi_t":
        return lambda t: np.cos(2 * np.pi * t)
    raise ConfigurationError(f"unknown g scenario {name!r}")


def scenario_name(value):
    """Accept ``1``/``2`` or the symbolic scenario names."""
    if value in G_SCENARIOS:
        return value
    for name, number in G_SCENARIOS.items():
        if str(value) == str(number):
            return name
    raise ConfigurationError(f"unknown g scenario {value!r}")


def _sin_2t(t):
    return np.sin(2 * t)


def _inv_square_shift(t):
    return (0.5 + t) ** -2


def _quartic(t):
    return (t - 0.7) ** 4


def _ratio(t):
    return t / (1 + t ** 2)


def _sqrt_shift(t):
    return np.sqrt(1 + t)


def _log_affine(t):
    return np.log(3 * t + 8)


def _theta_functions():
    # module-level callables so that models pickle into worker processes
    return (_sin_2t, _inv_square_shift, np.exp, np.zeros_like, _quartic,
            _ratio, _sqrt_shift, _log_affine, np.zeros_like, np.zeros_like)


def ar_covariance(p, rho):
    idx = np.arange(p)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


@dataclass(frozen=True)
class PopulationModel:
    """Conditional means ``E[X_j | T = t]``, error covariance and truth."""

    rho: float = 0.0
    theta_functions: tuple = field(default_factory=_theta_functions, compare=False)
    beta_true: tuple = (1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    noise_sd: float = 1.0

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ConfigurationError(f"rho must lie in [0, 1), got {self.rho}")
        if len(self.theta_functions) != len(self.beta_true):
            raise ConfigurationError("need one conditional-mean function per coefficient")

    @property
    def p(self):
        return len(self.beta_true)

    @property
    def error_cov(self):
        return ar_covariance(self.p, self.rho)

    def theta(self, t):
        t = np.asarray(t, dtype=float)
        return np.column_stack([f(t) for f in self.theta_functions])


@dataclass(frozen=True)
class ScenarioSpec:
    n: int = 100
    p: int = 10
    rho: float = 0.0
    g_scenario: str = "cos_t"
    replicates: int = 100
    seed: int = 20100101
    estimators: tuple = ESTIMATORS

    def __post_init__(self):
        object.__setattr__(self, "g_scenario", scenario_name(self.g_scenario))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if not 0 <= self.rho < 1:
            raise ConfigurationError(f"rho must lie in [0, 1), got {self.rho}")
        if self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")
        if self.n < 2:
            raise ConfigurationError("n must be >= 2")
        if self.seed < 0:
            raise ConfigurationError("seed must be a nonnegative integer")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise ConfigurationError(f"unknown estimators {sorted(unknown)}")


def replicate_rng(seed, n, replicate_index):
    """Generator for one replicate.

    The stream depends on ``(seed, n, replicate_index)`` only, so the same
    replicate shares its uniform and normal draws across ``rho`` values and
    ``g`` scenarios.
    """
    ss = np.random.SeedSequence([int(seed), int(n), int(replicate_index)])
    return np.random.Generator(np.random.Philox(ss))


def gen_replicate(model, spec, replicate_index):
    if not 0 <= replicate_index < spec.replicates:
        raise ConfigurationError(f"replicate index {replicate_index} out of range")
    if spec.p != model.p:
        raise ConfigurationError("scenario p does not match the population model")
    rng = replicate_rng(spec.seed, spec.n, replicate_index)
    n, p = spec.n, model.p
    t = rng.uniform(0.0, 1.0, size=n)
    z = rng.standard_normal((n, p))
    eps = rng.standard_normal(n)
    try:
        chol = np.linalg.cholesky(model.error_cov)
    except np.linalg.LinAlgError as exc:
        raise PLMNumericalError("AR covariance is not positive definite") from exc
    X = model.theta(t) + z @ chol.T
    y = X @ np.asarray(model.beta_true) + g_function(spec.g_scenario)(t) + model.noise_sd * eps
    return Dataset(y, X, t, [f"X{j + 1}" for j in range(p)])


@lru_cache(maxsize=1)
def _gauss_nodes(panels=500, per_panel=20):
    x, w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def population_cov_X(model):
    """``Cov(X) = Cov(theta(T)) + error_cov`` for ``T ~ Uniform[0, 1]``.

    The first term uses composite Gauss-Legendre quadrature with 10^4 nodes.
    """
    t, w = _gauss_nodes()
    th = model.theta(t)
    mean = w @ th
    centered = th - mean
    return (centered * w[:, None]).T @ centered + model.error_cov


def model_error(beta_hat, beta_true, cov_X):
    d = np.asarray(beta_hat, dtype=float) - np.asarray(beta_true, dtype=float)
    cov_X = np.asarray(cov_X, dtype=float)
    if d.ndim != 1 or cov_X.shape != (d.size, d.size):
        raise ConfigurationError(f"dimension mismatch: beta {d.shape}, cov {cov_X.shape}")
    return float(d @ cov_X @ d)


@dataclass
class EstimatorResult:
    name: str
    beta_hat: np.ndarray
    std_errors: np.ndarray = None
    t_coefficient: float = None
    lambda_chosen: float = None
    sigma2_hat: float = None
    g_rmse: float = None
    fit: object = field(default=None, repr=False)


def _profile_aic(data, config):
    """Exhaustive AIC search over column subsets of the residualized design."""
    from .plm import build_basis
    from .spline_basis import basis_matrix

    n, p = data.design.shape
    if 2 ** p > AIC_MAX_SUBSETS:
        raise ConfigurationError(f"exhaustive AIC search refused for p = {p} (2^p > 2^20)")
    basis = build_basis(data.nonparam, config)
    ctx = ProjectionContext(basis_matrix(basis, data.nonparam))
    Xr = ctx.residualize(data.design)
    Yr = ctx.residualize(data.response)
    G, c, yy = Xr.T @ Xr, Xr.T @ Yr, float(Yr @ Yr)

    best = (n * np.log(yy / n), ())
    for k in range(1, p + 1):
        for subset in itertools.combinations(range(p), k):
            idx = list(subset)
            coef = np.linalg.solve(G[np.ix_(idx, idx)], c[idx])
            rss = yy - float(c[idx] @ coef)
            score = n * np.log(max(rss, np.finfo(float).tiny) / n) + 2 * k
            if score < best[0]:
                best = (score, subset)
    beta = np.zeros(p)
    idx = list(best[1])
    if idx:
        beta[idx] = np.linalg.solve(G[np.ix_(idx, idx)], c[idx])
    alpha = ctx.solve_spline_coeffs(data.response - data.design @ beta)
    return beta, basis, alpha


def _g_rmse(fit, g):
    lo, hi = fit.basis.domain
    grid = np.linspace(lo, hi, G_GRID_POINTS)
    diff = predict_g(fit, grid) - g(grid)
    diff -= diff.mean()
    return float(np.sqrt(np.mean(diff ** 2)))


def run_estimator(name, data, config=None, g_true=None):
    """Fit one comparison estimator and return its coefficient record."""
    config = config or FitConfig()
    if name == "ls_scad":
        ctx = ProjectionContext(np.ones((data.n, 1)))
        X = np.column_stack([data.design, data.nonparam])
        fit = profile_penalized_fit(
            ctx, X, data.response, _with_family(config, "scad"), data.column_names + ["T"])
        return EstimatorResult(name, fit.beta_hat[:-1], fit.std_errors[:-1],
                               t_coefficient=float(fit.beta_hat[-1]),
                               lambda_chosen=fit.lambda_chosen, sigma2_hat=fit.sigma2_hat, fit=fit)
    if name == "plm_aic":
        beta, _, _ = _profile_aic(data, config)
        return EstimatorResult(name, beta)
    family = {"plm": "none", "plm_lasso": "lasso", "plm_scad": "scad"}.get(name)
    if family is None:
        raise ConfigurationError(f"unknown estimator {name!r}")
    fit = fit_plm(data, _with_family(config, family))
    rmse = _g_rmse(fit, g_true) if g_true is not None else None
    return EstimatorResult(name, fit.beta_hat, fit.std_errors, lambda_chosen=fit.lambda_chosen,
                           sigma2_hat=fit.sigma2_hat, g_rmse=rmse, fit=fit)


def _with_family(config, family):
    if config.penalty_family == family:
        return config
    return FitConfig(config.spline_order, config.interior_knots, family, config.a,
                     config.lambda_grid, config.solver)


@dataclass
class EstimatorSummary:
    estimator: str
    replicates: int
    mean_beta: list
    mean_correct_zeros: float
    median_correct_zeros: float
    pct_g_zeroed: float
    median_model_error: float
    sd_model_error: float
    empirical_sd_beta: list
    mean_se_beta: list
    exact_selection_rate: float
    median_g_rmse: float = None


def summarize(replicate_results, model, cov_X=None):
    """Aggregate one estimator's replicate results.

    Zero counts are taken over the truly-zero coordinates; standard-error
    means skip replicates whose coefficient was not selected.
    """
    if not replicate_results:
        raise ConfigurationError("nothing to summarize")
    cov_X = population_cov_X(model) if cov_X is None else cov_X
    truth = np.asarray(model.beta_true)
    zero_idx = truth == 0
    B = np.array([r.beta_hat for r in replicate_results])
    zeros = np.sum(B[:, zero_idx] == 0, axis=1)
    false_zeros = np.sum(B[:, ~zero_idx] == 0, axis=1)
    me = np.array([model_error(b, truth, cov_X) for b in B])
    name = replicate_results[0].name
    k = min(N_SIGNAL, B.shape[1])

    pct_g = None
    if name == "ls_scad":
        pct_g = float(np.mean([r.t_coefficient == 0 for r in replicate_results]))

    se_mean = None
    if all(r.std_errors is not None for r in replicate_results):
        SE = np.array([r.std_errors[:k] for r in replicate_results])
        se_mean = []
        for col in SE.T:
            finite = col[np.isfinite(col)]
            se_mean.append(float(finite.mean()) if finite.size else None)

    rm = [r.g_rmse for r in replicate_results if r.g_rmse is not None]
    ddof = 1 if len(B) > 1 else 0
    return EstimatorSummary(
        estimator=name,
        replicates=len(replicate_results),
        mean_beta=B[:, :k].mean(axis=0).tolist(),
        mean_correct_zeros=float(zeros.mean()),
        median_correct_zeros=float(np.median(zeros)),
        pct_g_zeroed=pct_g,
        median_model_error=float(np.median(me)),
        sd_model_error=float(me.std(ddof=ddof)),
        empirical_sd_beta=B[:, :k].std(axis=0, ddof=ddof).tolist(),
        mean_se_beta=se_mean,
        exact_selection_rate=float(np.mean((zeros == zero_idx.sum()) & (false_zeros == 0))),
        median_g_rmse=float(np.median(rm)) if rm else None,
    )


@dataclass
class SimSummary:
    scenario: ScenarioSpec
    estimators: dict
    rng_algorithm: str = RNG_ALGORITHM
    fit_config: dict = None

    def to_dict(self):
        return {
            "scenario": asdict(self.scenario),
            "rng_algorithm": self.rng_algorithm,
            "fit_config": self.fit_config,
            "estimators": {k: asdict(v) for k, v in self.estimators.items()},
        }


def _config_dict(config):
    d = asdict(config)
    d["lambda_grid"] = None if config.lambda_grid is None else list(config.lambda_grid)
    return d


def _run_replicate(args):
    model, spec, config, index = args
    data = gen_replicate(model, spec, index)
    g = g_function(spec.g_scenario)
    return index, [run_estimator(name, data, config, g_true=g) for name in spec.estimators]


def resolve_workers(workers=None):
    """Worker count from the argument, else ``PLMSCAD_THREADS`` (0 = auto)."""
    if workers is None:
        raw = os.environ.get(THREADS_ENV, "0")
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def run_replicates(spec, config=None, model=None, workers=None):
    """All replicate results, ordered by replicate index."""
    config = config or FitConfig()
    model = model or PopulationModel(rho=spec.rho)
    tasks = [(model, spec, config, i) for i in range(spec.replicates)]
    workers = min(resolve_workers(workers), spec.replicates)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_run_replicate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        out = [_run_replicate(t) for t in tasks]
    out.sort(key=lambda item: item[0])
    return [res for _, res in out]


def run_scenario(spec, config=None, model=None, workers=None, results=None):
    """Run (or reuse) replicate results and summarize every estimator."""
    config = config or FitConfig()
    model = model or PopulationModel(rho=spec.rho)
    if results is None:
        results = run_replicates(spec, config, model, workers)
    cov_X = population_cov_X(model)
    per_estimator = {}
    for j, name in enumerate(spec.estimators):
        per_estimator[name] = summarize([rep[j] for rep in results], model, cov_X)
    return SimSummary(spec, per_estimator, fit_config=_config_dict(config))


def default_config(n, interior_knots=3, **kwargs):
    """Fit settings for a sample of size ``n``; ``interior_knots='grow'`` uses round(n^(1/7)) + 2."""
    if interior_knots == "grow":
        interior_knots = int(round(n ** (1 / 7))) + 2
    return FitConfig(interior_knots=interior_knots, solver=kwargs.pop("solver", SolverOptions()), **kwargs)
