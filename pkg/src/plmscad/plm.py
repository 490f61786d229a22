"""Penalized profile least squares for partially linear models.

Fits ``Y = X'beta + g(T) + eps`` with ``g`` in a B-spline space: ``X`` and
``Y`` are residualized against the basis, the residualized columns are
standardized, and the penalized problem is solved over a lambda grid
with GCV picking the winner.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateColumnError, DimensionError, ConfigurationError, GCVUndefinedError
from .optimizer import SolverOptions, ols_initializer, solve_penalized
from .penalty import DEFAULT_A, FAMILIES, PenaltySpec, _derivative_unchecked
from .projection import ProjectionContext
from .spline_basis import SplineBasis, basis_matrix, make_quantile_partition

DEFAULT_GRID_SIZE = 50
DEFAULT_GRID_RATIO = 1e-3
DEGENERATE_SD = 1e-12


@dataclass
class Dataset:
    response: np.ndarray
    design: np.ndarray
    nonparam: np.ndarray
    column_names: list = None

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=float).ravel()
        self.design = np.asarray(self.design, dtype=float)
        if self.design.ndim == 1:
            self.design = self.design[:, None]
        self.nonparam = np.asarray(self.nonparam, dtype=float).ravel()
        n = self.response.shape[0]
        if self.design.ndim != 2 or self.design.shape[0] != n or self.nonparam.shape[0] != n:
            raise DimensionError(
                f"inconsistent lengths: Y {self.response.shape}, X {self.design.shape}, "
                f"T {self.nonparam.shape}")
        if self.design.shape[1] < 1:
            raise DimensionError("design needs at least one column")
        for name, arr in (("response", self.response), ("design", self.design),
                          ("nonparam", self.nonparam)):
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"{name} contains non-finite values")
        if self.column_names is None:
            self.column_names = [f"X{j + 1}" for j in range(self.p)]
        self.column_names = list(self.column_names)
        if len(self.column_names) != self.p:
            raise DimensionError("column_names length must equal the number of columns")

    @property
    def n(self):
        return self.response.shape[0]

    @property
    def p(self):
        return self.design.shape[1]


@dataclass(frozen=True)
class FitConfig:
    """Estimator settings.

    ``lambda_grid=None`` requests the automatic grid: ``DEFAULT_GRID_SIZE``
    log-spaced values from ``max_j |x_j'y| / n`` down to
    ``DEFAULT_GRID_RATIO`` times that, on the standardized scale.
    """

    spline_order: int = 4
    interior_knots: int = 3
    penalty_family: str = "scad"
    a: float = DEFAULT_A
    lambda_grid: tuple = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.spline_order < 1:
            raise ConfigurationError("spline_order must be >= 1")
        if self.interior_knots < 0:
            raise ConfigurationError("interior_knots must be >= 0")
        if self.penalty_family not in FAMILIES:
            raise ConfigurationError(f"unknown penalty family {self.penalty_family!r}")
        if self.lambda_grid is not None:
            grid = tuple(sorted(float(v) for v in self.lambda_grid))
            if not grid:
                raise ConfigurationError("lambda grid is empty")
            if grid[0] < 0 or not all(np.isfinite(grid)):
                raise ConfigurationError("lambda grid values must be finite and >= 0")
            object.__setattr__(self, "lambda_grid", grid)
        PenaltySpec(self.penalty_family, 0.0, self.a)


@dataclass
class PLMFit:
    beta_hat: np.ndarray
    selected: np.ndarray
    alpha_hat: np.ndarray
    lambda_chosen: float
    gcv_table: list
    sigma2_hat: float
    std_errors: np.ndarray  # NaN where the coefficient is not selected
    basis: SplineBasis
    residuals: np.ndarray
    df: float = 0.0
    column_names: list = None
    scale: np.ndarray = None
    converged: bool = True
    iterations: int = 0
    objective_trace: list = field(default_factory=list, repr=False)

    def predict_g(self, t):
        return predict_g(self, t)


def gcv_score(rss, n, df):
    """``(rss / n) / (1 - df / n)^2``."""
    if not df < n:
        raise GCVUndefinedError(f"GCV undefined: df = {df} >= n = {n}")
    return (rss / n) / (1.0 - df / n) ** 2


def sigma2_estimate(rss, n, df):
    if not df < n:
        raise GCVUndefinedError(f"variance estimate undefined: df = {df} >= n = {n}")
    return rss / (n - df)


def _penalty_weights(spec, beta_active):
    mag = np.abs(np.asarray(beta_active, dtype=float))
    if not spec.active or mag.size == 0:
        return np.zeros(mag.size)
    return _derivative_unchecked(spec, mag) / mag


def _bread(Xa, n, spec, beta_active):
    # half weights: the objective is ||.||^2 + n*sum p, whose Hessian/2 is X'X + (n/2) Sigma
    G = Xa.T @ Xa
    H = G + 0.5 * n * np.diag(_penalty_weights(spec, beta_active))
    cond = np.linalg.cond(H) if H.size else 1.0
    if not np.isfinite(cond) or cond > 1e14:
        raise GCVUndefinedError(f"singular bread matrix (condition estimate {cond:.3g})")
    return G, H


def effective_df(Xr_active, n, spec, beta_active, q):
    """Spline dimension plus the trace of the ridge-type hat matrix."""
    Xa = np.asarray(Xr_active, dtype=float).reshape(n, -1)
    if Xa.shape[1] == 0:
        return float(q)
    G, H = _bread(Xa, n, spec, beta_active)
    return float(q + np.trace(np.linalg.solve(H, G)))


def standard_errors(Xr_active, n, spec, beta_active, sigma2, scale=None):
    """Sandwich standard errors ``sqrt(diag(sigma2 H^-1 G H^-1))``.

    ``scale`` holds the column standard deviations used for standardizing;
    the returned errors are divided by it to land on the original scale.
    """
    Xa = np.asarray(Xr_active, dtype=float).reshape(n, -1)
    if Xa.shape[1] == 0:
        raise DimensionError("standard errors need a nonempty active set")
    G, H = _bread(Xa, n, spec, beta_active)
    Hinv = np.linalg.inv(H)
    cov = sigma2 * Hinv @ G @ Hinv
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if scale is not None:
        se = se / np.asarray(scale, dtype=float)
    return se


def default_lambda_grid(Xs, Yr, size=DEFAULT_GRID_SIZE, ratio=DEFAULT_GRID_RATIO):
    n = Xs.shape[0]
    lam_max = float(np.max(np.abs(Xs.T @ Yr)) / n)
    if lam_max <= 0:
        return (0.0,)
    return tuple(np.geomspace(lam_max * ratio, lam_max, size))


def standardize_columns(Xr, names, reference_sd=None):
    """Center and scale residualized columns to unit sample SD.

    A column whose residual SD falls below ``DEGENERATE_SD`` (relative to
    ``reference_sd`` when that exceeds one) is rejected.
    """
    n = Xr.shape[0]
    center = Xr.mean(axis=0)
    sd = Xr.std(axis=0, ddof=1) if n > 1 else np.zeros(Xr.shape[1])
    ref = np.ones_like(sd) if reference_sd is None else np.maximum(1.0, reference_sd)
    for j, s in enumerate(sd):
        if not s >= DEGENERATE_SD * ref[j]:
            raise DegenerateColumnError(
                f"column {names[j]!r} is (numerically) explained by the spline basis "
                f"after residualization (sd = {s:.3g}); it is not identifiable",
                column=names[j])
    return (Xr - center) / sd, sd


def profile_penalized_fit(ctx, X, Y, config, names, basis=None, record_trace=False):
    """Core pipeline against an arbitrary projection context.

    Steps 2-8 of the estimator: residualize, standardize, grid search by
    GCV, refit, unstandardize, recover basis coefficients, and compute
    variance and standard errors. ``fit_plm`` supplies a B-spline context;
    an intercept-only context gives ordinary penalized linear regression.
    """
    n, p = X.shape
    q = ctx.effective_rank
    if not n > p + q:
        raise GCVUndefinedError(f"need n > p + q for identifiability, got n={n}, p={p}, q={q}")

    Xr = ctx.residualize(X)
    Yr = ctx.residualize(Y)
    Xs, sd = standardize_columns(Xr, names, X.std(axis=0))
    G, c = Xs.T @ Xs, Xs.T @ Yr
    init = ols_initializer(Xs, Yr)

    grid = config.lambda_grid if config.lambda_grid is not None else default_lambda_grid(Xs, Yr)
    base = PenaltySpec(config.penalty_family, 0.0, config.a)
    if base.family == "none":
        grid = (0.0,)

    table = []
    for lam in grid:
        spec = base.with_lambda(lam)
        res = solve_penalized(Xs, Yr, spec, init, config.solver, gram=(G, c))
        active = res.coefficients != 0
        resid = Yr - Xs @ res.coefficients
        rss = float(resid @ resid)
        df = effective_df(Xs[:, active], n, spec, res.coefficients[active], q)
        table.append((float(lam), gcv_score(rss, n, df), df))

    # grid is ascending, so argmin's first-hit rule breaks ties toward small lambda
    best = int(np.argmin([row[1] for row in table]))
    lam = table[best][0]
    spec = base.with_lambda(lam)
    res = solve_penalized(Xs, Yr, spec, init, config.solver, gram=(G, c),
                          record_trace=record_trace)

    b_std = res.coefficients
    active = b_std != 0
    beta = np.where(active, b_std / sd, 0.0)
    alpha = ctx.solve_spline_coeffs(Y - X @ beta)
    residuals = Y - X @ beta - ctx.basis_matrix @ alpha
    resid_r = Yr - Xs @ b_std
    rss = float(resid_r @ resid_r)
    df = effective_df(Xs[:, active], n, spec, b_std[active], q)
    sigma2 = sigma2_estimate(rss, n, df)

    se = np.full(p, np.nan)
    if active.any():
        se[active] = standard_errors(Xs[:, active], n, spec, b_std[active], sigma2, scale=sd[active])

    return PLMFit(
        beta_hat=beta, selected=active, alpha_hat=alpha, lambda_chosen=lam,
        gcv_table=table, sigma2_hat=sigma2, std_errors=se, basis=basis,
        residuals=residuals, df=df, column_names=list(names), scale=sd,
        converged=res.converged, iterations=res.iterations_used,
        objective_trace=res.objective_trace,
    )


def build_basis(t_values, config):
    partition = make_quantile_partition(t_values, config.interior_knots)
    return SplineBasis(config.spline_order, partition)


def fit_plm(data, config=None, record_trace=False):
    """Fit the penalized partially linear model.

    Parameters
    ----------
    data : Dataset
    config : FitConfig, optional
    record_trace : bool
        Keep the MM objective trace of the final refit (for diagnostics).

    Returns
    -------
    PLMFit
        ``beta_hat`` and ``std_errors`` are on the original scale of ``X``;
        ``lambda_chosen`` and ``gcv_table`` refer to the standardized scale.
    """
    config = config or FitConfig()
    basis = build_basis(data.nonparam, config)
    ctx = ProjectionContext(basis_matrix(basis, data.nonparam))
    return profile_penalized_fit(ctx, data.design, data.response, config,
                                 data.column_names, basis=basis, record_trace=record_trace)


def predict_g(fit, t):
    """Estimated nonparametric component at ``t`` (scalar or array)."""
    if fit.basis is None:
        raise ConfigurationError("this fit has no spline component")
    t_arr = np.asarray(t, dtype=float)
    vals = basis_matrix(fit.basis, np.atleast_1d(t_arr).ravel()) @ fit.alpha_hat
    return float(vals[0]) if t_arr.ndim == 0 else vals.reshape(t_arr.shape)
