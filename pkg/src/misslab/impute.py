"""Chained-equations multiple imputation with Bayesian-normal and
predictive-mean-matching column methods.

The sampler follows the conventional fully conditional scheme: each missing
cell starts as a uniform draw from its column's observed values, then for a
fixed number of sweeps every incomplete column is revisited left to right,
a univariate model is fitted on rows observed in that column, and the
column's missing cells are redrawn. Rows flagged in ``ignore`` never enter
any model fit (nor the initial donor pool) but their cells are still
imputed, which is how a test set is completed without leaking into the
training fit. Cells flagged logically missing are never imputed at all:
they stay empty in every completed copy and enter the fits of *other*
columns through a neutral mean fill.

Chains are mutually independent with sub-seeds spawned from the
configuration seed, so results are reproducible and chain order is
irrelevant to the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .tabular import DataMatrix

METHODS = ("norm", "pmm")

DEFAULT_RIDGE = 1e-5


class CollinearityError(np.linalg.LinAlgError):
    """Normal equations singular even after ridging."""

    def __init__(self, columns):
        self.columns = tuple(int(c) for c in columns)
        super().__init__(
            "design is singular; collinear design columns: "
            + ", ".join(str(c) for c in self.columns)
        )


class UnimputableColumnError(ValueError):
    """A column with missing cells has no observed values to learn from."""

    def __init__(self, column, name=None):
        self.column = int(column)
        label = f"{name!r} (index {column})" if name is not None else str(column)
        super().__init__(
            f"column {label} has no observed values among fitting rows"
        )


@dataclass(frozen=True)
class ImputationConfig:
    """Settings for :func:`fcs_impute`.

    ``ignore`` is a per-row boolean mask of rows excluded from model
    fitting but still imputed. ``method`` may be one name for all columns
    or one per column.
    """

    m: int = 5
    maxit: int = 5
    method: str | tuple[str, ...] = "pmm"
    donors: int = 5
    ridge: float = DEFAULT_RIDGE
    ignore: tuple[bool, ...] | None = None
    seed: int | np.random.SeedSequence | None = None

    def methods_for(self, p: int) -> tuple[str, ...]:
        if isinstance(self.method, str):
            methods = (self.method,) * p
        else:
            methods = tuple(self.method)
            if len(methods) != p:
                raise ValueError("need one method per column")
        for meth in methods:
            if meth not in METHODS:
                raise ValueError(f"unknown method {meth!r}; choose from {METHODS}")
        return methods

    def validate(self, n: int) -> None:
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.maxit < 1:
            raise ValueError("maxit must be a positive integer")
        if self.donors < 1:
            raise ValueError("donors must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.ignore is not None and len(self.ignore) != n:
            raise ValueError("ignore mask length must equal the row count")


@dataclass(frozen=True)
class RegressionDraw:
    """One Bayesian univariate regression draw."""

    values: np.ndarray
    beta_hat: np.ndarray
    beta_star: np.ndarray
    sigma: float


def _bayes_regression(y_obs, x_obs, ridge, rng):
    """Point estimate plus posterior parameter draw for one column model.

    Solves the ridged normal equations (ridge scaled by the diagonal), then
    draws the residual variance from its scaled inverse chi-square
    conditional and the coefficients from their normal conditional.
    """
    y_obs = np.asarray(y_obs, float)
    x_obs = np.asarray(x_obs, float)
    n, k = x_obs.shape
    if len(y_obs) != n:
        raise ValueError("response and design row counts differ")
    s = x_obs.T @ x_obs
    if ridge > 0:
        s = s + np.diag(ridge * np.diag(s))
    try:
        chol_s = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        _, r, piv = sla.qr(x_obs, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        tol = diag.max() * max(n, k) * np.finfo(float).eps if diag.size else 0.0
        rank = int((diag > tol).sum())
        raise CollinearityError(sorted(piv[rank:])) from None
    beta_hat = sla.cho_solve((chol_s, True), x_obs.T @ y_obs)
    dof = max(n - k, 1)
    rss = float(((y_obs - x_obs @ beta_hat) ** 2).sum())
    sigma = float(np.sqrt(rss / rng.chisquare(dof)))
    z = rng.standard_normal(k)
    # solve(L^T, z) has covariance (L L^T)^-1 = S^-1, as required.
    beta_star = beta_hat + sigma * sla.solve_triangular(chol_s.T, z, lower=False)
    return beta_hat, beta_star, sigma


def fit_norm_draw(
    y_obs, x_obs, x_mis, ridge: float = DEFAULT_RIDGE,
    rng: np.random.Generator | None = None,
) -> RegressionDraw:
    """Bayesian normal linear regression imputation for one column.

    Returns draws ``x_mis @ beta_star + sigma * noise`` together with the
    fitted and drawn coefficients.
    """
    rng = np.random.default_rng() if rng is None else rng
    x_mis = np.asarray(x_mis, float)
    beta_hat, beta_star, sigma = _bayes_regression(y_obs, x_obs, ridge, rng)
    values = x_mis @ beta_star + sigma * rng.standard_normal(x_mis.shape[0])
    return RegressionDraw(values, beta_hat, beta_star, sigma)


def fit_pmm_draw(
    y_obs, x_obs, x_mis, donors: int = 5, ridge: float = DEFAULT_RIDGE,
    rng: np.random.Generator | None = None,
) -> RegressionDraw:
    """Predictive mean matching imputation for one column.

    Matches on predictions: observed rows score with the point estimate,
    missing rows with the posterior draw. Each missing cell copies the
    observed value of one donor drawn uniformly from the ``donors`` closest
    matches; distance ties are broken uniformly at random.
    """
    rng = np.random.default_rng() if rng is None else rng
    y_obs = np.asarray(y_obs, float)
    x_mis = np.asarray(x_mis, float)
    n_obs = len(y_obs)
    if donors > n_obs:
        raise ValueError(
            f"donors={donors} exceeds the {n_obs} observed rows available"
        )
    beta_hat, beta_star, sigma = _bayes_regression(y_obs, x_obs, ridge, rng)
    eta_obs = np.asarray(x_obs, float) @ beta_hat
    eta_mis = x_mis @ beta_star
    n_mis = len(eta_mis)
    if n_mis == 0:
        return RegressionDraw(np.empty(0), beta_hat, beta_star, sigma)
    dist = np.abs(eta_obs[None, :] - eta_mis[:, None])
    # Random per-row permutation before a stable sort makes the donor set
    # uniform over distance ties.
    perm = rng.permuted(np.tile(np.arange(n_obs), (n_mis, 1)), axis=1)
    shuffled = np.take_along_axis(dist, perm, axis=1)
    order = np.argsort(shuffled, axis=1, kind="stable")[:, :donors]
    donor_idx = np.take_along_axis(perm, order, axis=1)
    pick = rng.integers(0, donors, size=n_mis)
    values = y_obs[donor_idx[np.arange(n_mis), pick]]
    return RegressionDraw(values, beta_hat, beta_star, sigma)


@dataclass(frozen=True)
class ImputationResult:
    """Completed copies plus per-sweep chain statistics.

    ``chain_means``/``chain_sds`` have shape (m, maxit, p) and are NaN for
    columns that were never imputed. ``fitted_models`` holds, per chain,
    the final-sweep point-estimate coefficients of each visited column
    (intercept first, then the other columns in storage order).
    """

    completed: tuple[np.ndarray, ...]
    chain_means: np.ndarray
    chain_sds: np.ndarray
    fitted_models: tuple[dict[int, np.ndarray], ...]
    visited_columns: tuple[int, ...]
    col_names: tuple[str, ...]

    @property
    def m(self) -> int:
        return len(self.completed)


def _design(work: np.ndarray, j: int) -> np.ndarray:
    n, p = work.shape
    out = np.empty((n, p))
    out[:, 0] = 1.0
    out[:, 1:] = np.delete(work, j, axis=1)
    return out


def fcs_impute(x: DataMatrix, cfg: ImputationConfig) -> ImputationResult:
    """Multiply impute ``x`` by fully conditional specification.

    Raises :class:`UnimputableColumnError` when a column has missing cells
    but no observed values among non-ignored rows, and ``ValueError`` on
    non-finite observed input; non-finite draws abort with the offending
    column and sweep named.
    """
    bits = x.missing.bits
    logical = x.missing.logical_bits()
    n, p = bits.shape
    cfg.validate(n)
    methods = cfg.methods_for(p)
    ignore = (
        np.zeros(n, dtype=bool)
        if cfg.ignore is None
        else np.asarray(cfg.ignore, dtype=bool)
    )

    observed_cells = bits == 0
    if not np.isfinite(x.values[observed_cells]).all():
        i, j = next(
            (int(a), int(b))
            for a, b in zip(*np.nonzero(observed_cells & ~np.isfinite(x.values)))
        )
        raise ValueError(f"non-finite observed value at row {i}, column {j}")

    imputable = (bits == 1) & (logical == 0)
    visit = tuple(j for j in range(p) if imputable[:, j].any())
    fit_rows = {j: (~ignore) & observed_cells[:, j] for j in visit}
    for j in visit:
        if not fit_rows[j].any():
            raise UnimputableColumnError(j, x.col_names[j])

    seed_seq = (
        cfg.seed
        if isinstance(cfg.seed, np.random.SeedSequence)
        else np.random.SeedSequence(cfg.seed)
    )
    chain_seeds = seed_seq.spawn(cfg.m)

    completed: list[np.ndarray] = []
    chain_means = np.full((cfg.m, cfg.maxit, p), np.nan)
    chain_sds = np.full((cfg.m, cfg.maxit, p), np.nan)
    fitted: list[dict[int, np.ndarray]] = []

    logical_cells = logical == 1
    mean_fill = np.zeros(p)
    for j in range(p):
        if logical_cells[:, j].any():
            pool = x.values[(~ignore) & observed_cells[:, j], j]
            if pool.size == 0:
                pool = x.values[observed_cells[:, j], j]
            mean_fill[j] = pool.mean() if pool.size else 0.0

    for chain_seed in chain_seeds:
        rng = np.random.default_rng(chain_seed)
        work = x.masked_values()
        for j in range(p):
            if logical_cells[:, j].any():
                work[logical_cells[:, j], j] = mean_fill[j]
        for j in visit:
            pool = x.values[fit_rows[j], j]
            work[imputable[:, j], j] = rng.choice(pool, size=imputable[:, j].sum())

        models: dict[int, np.ndarray] = {}
        for it in range(cfg.maxit):
            for j in visit:
                rows = fit_rows[j]
                design = _design(work, j)
                y_obs = work[rows, j]
                x_obs = design[rows]
                x_mis = design[imputable[:, j]]
                if methods[j] == "norm":
                    draw = fit_norm_draw(y_obs, x_obs, x_mis, cfg.ridge, rng)
                else:
                    # Sparse columns can have fewer observed rows than the
                    # requested pool; matching still works with what exists.
                    donors = min(cfg.donors, len(y_obs))
                    draw = fit_pmm_draw(
                        y_obs, x_obs, x_mis, donors, cfg.ridge, rng
                    )
                if not np.isfinite(draw.values).all():
                    raise FloatingPointError(
                        f"non-finite imputation for column "
                        f"{x.col_names[j]!r} at sweep {it + 1}"
                    )
                work[imputable[:, j], j] = draw.values
                chain_means[len(completed), it, j] = draw.values.mean()
                if draw.values.size >= 2:
                    chain_sds[len(completed), it, j] = draw.values.std(ddof=1)
                if it == cfg.maxit - 1:
                    models[j] = draw.beta_hat
        out = work.copy()
        out[logical_cells] = np.nan
        completed.append(out)
        fitted.append(models)

    return ImputationResult(
        completed=tuple(completed),
        chain_means=chain_means,
        chain_sds=chain_sds,
        fitted_models=tuple(fitted),
        visited_columns=visit,
        col_names=x.col_names,
    )


@dataclass(frozen=True)
class ChainDiagnostics:
    """Long-format imputation traces plus a between-chain spread."""

    rows: tuple[tuple[int, int, str, float, float], ...]
    between_chain: dict[str, float]
    flags: tuple[str, ...]


def chain_diagnostics(result: ImputationResult) -> ChainDiagnostics:
    """Tabulate per-sweep means/sds of the imputed cells per chain.

    Columns with no imputed cells produce no rows. With a single chain the
    between-chain spread is undefined and flagged.
    """
    m, maxit, _ = result.chain_means.shape
    rows = []
    for chain in range(m):
        for it in range(maxit):
            for j in result.visited_columns:
                rows.append(
                    (
                        chain,
                        it + 1,
                        result.col_names[j],
                        float(result.chain_means[chain, it, j]),
                        float(result.chain_sds[chain, it, j]),
                    )
                )
    between: dict[str, float] = {}
    flags: list[str] = []
    for j in result.visited_columns:
        name = result.col_names[j]
        if m < 2:
            between[name] = float("nan")
            flags.append(f"between-chain spread undefined for {name!r} (m=1)")
        else:
            between[name] = float(result.chain_means[:, -1, j].std(ddof=1))
    return ChainDiagnostics(tuple(rows), between, tuple(flags))


def diagnostics_csv_rows(diag: ChainDiagnostics) -> list[list[str]]:
    from .tabular import format_value

    rows = [["chain", "iteration", "column", "mean", "sd"]]
    for chain, it, name, mean, sd in diag.rows:
        rows.append(
            [
                str(chain),
                str(it),
                name,
                format_value(mean),
                "" if np.isnan(sd) else format_value(sd),
            ]
        )
    return rows
