"""Posterior summaries and convergence diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from .errors import GridMismatch, StuckChains, ValidationError
from .fda import BasisSystem, StandardizedDataset, eval_basis
from .sampler import PosteriorDraws

KDE_GRID = 512


def psrf(chains):
    """Classic Gelman-Rubin potential scale reduction for an (m_chains, n) array.

    R = sqrt(((n - 1)/n W + B/n) / W) with W the mean within-chain variance
    and B = n * variance of the chain means.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValidationError("need at least 2 chains with 2 draws each")
    n = x.shape[1]
    W = np.mean(np.var(x, axis=1, ddof=1))
    B = n * np.var(np.mean(x, axis=1), ddof=1)
    if W == 0:
        if B == 0:
            return 1.0
        raise StuckChains("chains are constant but disagree with each other")
    return float(np.sqrt(((n - 1) / n * W + B / n) / W))


def gelman_rubin(draws: PosteriorDraws, parameter: str) -> float:
    return psrf(draws.series(parameter))


@dataclass(frozen=True)
class ConvergenceReport:
    psrf: dict
    passed: dict
    threshold: float = 1.1

    @property
    def parameters_checked(self):
        return list(self.psrf)

    @property
    def all_passed(self):
        return all(self.passed.values())

    def failures(self):
        return [name for name, ok in self.passed.items() if not ok]

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "all_passed": self.all_passed,
            "psrf": {k: (v if np.isfinite(v) else None) for k, v in self.psrf.items()},
            "passed": dict(self.passed),
        }


def convergence_report(draws: PosteriorDraws, parameters=None, threshold=1.1) -> ConvergenceReport:
    """R-hat for each named parameter; defaults to every basis coefficient."""
    if parameters is None:
        parameters = [n for n in draws.parameter_names() if n.startswith("b.")]
    values, passed = {}, {}
    for name in parameters:
        try:
            r = gelman_rubin(draws, name)
        except StuckChains:
            r = float("inf")
        values[name] = r
        passed[name] = bool(r < threshold)
    return ConvergenceReport(values, passed, threshold)


def map_estimate(samples, kind="continuous"):
    """Posterior mode of one parameter.

    Binary samples give the majority value, with an exact tie reported as 1.
    Continuous samples give the maximizer of a Gaussian KDE (Silverman
    bandwidth) over a 512-point grid spanning the sample range.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("empty sample")
    if kind == "binary":
        return int(np.mean(x) >= 0.5)
    if kind != "continuous":
        raise ValueError(f"unknown kind {kind!r}")
    lo, hi = x.min(), x.max()
    if lo == hi:
        return float(lo)
    try:
        kde = gaussian_kde(x, bw_method="silverman")
    except np.linalg.LinAlgError:
        return float(np.median(x))
    grid = np.linspace(lo, hi, KDE_GRID)
    return float(grid[np.argmax(kde(grid))])


def coefficient_curve_draws(draws: PosteriorDraws, basis_mat):
    """Gated curves Z_l * sum_k b_kl B_k(t) for every pooled draw: (S, p, G)."""
    b = draws.pooled("b").reshape(-1, draws.p, draws.K)
    Z = draws.pooled("Z").astype(float)
    curves = np.einsum("spk,gk->spg", b, basis_mat)
    return curves * Z[:, :, None]


def credible_bands(draws: PosteriorDraws, basis: BasisSystem, grid, level=0.95):
    """Pointwise equal-tailed bands for each gated coefficient curve.

    Returns ``(lower, upper)``, each p x len(grid), using linearly
    interpolated empirical quantiles over all retained draws.
    """
    curves = coefficient_curve_draws(draws, eval_basis(basis, grid))
    alpha = (1.0 - level) / 2.0
    lower = np.quantile(curves, alpha, axis=0)
    upper = np.quantile(curves, 1.0 - alpha, axis=0)
    return lower, upper


@dataclass
class FitSummary:
    Z_hat: np.ndarray
    b_hat: np.ndarray
    sigma2_hat: float
    eta2_hat: np.ndarray
    theta_hat: np.ndarray
    mu_hat: np.ndarray | None
    K: int
    grid: np.ndarray
    partial_curves: np.ndarray
    coefficient_curves: np.ndarray
    band_lower: np.ndarray
    band_upper: np.ndarray
    intercept_grid: np.ndarray
    intercept_curve: np.ndarray
    basis: BasisSystem
    covariate_labels: tuple | None = None
    metrics: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.Z_hat.size

    @property
    def b_matrix(self):
        """b_hat as p x K (row l holds the coefficients of covariate l)."""
        return self.b_hat.reshape(self.p, self.K)

    @property
    def selected_count(self):
        return int(np.sum(self.Z_hat > 0))

    def to_dict(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "K": self.K,
            "order": self.basis.order,
            "knots": arr(self.basis.knots),
            "p": self.p,
            "covariate_labels": list(self.covariate_labels) if self.covariate_labels else None,
            "Z_hat": arr(self.Z_hat),
            "b_hat": arr(self.b_hat),
            "sigma2_hat": self.sigma2_hat,
            "eta2_hat": arr(self.eta2_hat),
            "theta_hat": arr(self.theta_hat),
            "mu_hat": arr(self.mu_hat),
            "grid": arr(self.grid),
            "partial_curves": arr(self.partial_curves),
            "coefficient_curves": arr(self.coefficient_curves),
            "band_lower": arr(self.band_lower),
            "band_upper": arr(self.band_upper),
            "intercept_grid": arr(self.intercept_grid),
            "intercept_curve": arr(self.intercept_curve),
            "metrics": self.metrics,
        }


def summarize(draws: PosteriorDraws, basis: BasisSystem, std: StandardizedDataset, grid=None, level=0.95) -> FitSummary:
    """MAP summaries, coefficient curves and pointwise bands."""
    if grid is None:
        grid = std.grid
    grid = np.asarray(grid, dtype=float)
    Zs = draws.pooled("Z")
    Z_hat = np.array([map_estimate(Zs[:, l], "binary") for l in range(draws.p)])
    b_hat = np.array([map_estimate(col) for col in draws.pooled("b").T])
    eta2_hat = np.array([map_estimate(col) for col in draws.pooled("eta2").T])
    theta_hat = np.array([map_estimate(col) for col in draws.pooled("theta").T])
    mu_hat = None if draws.mu is None else np.array([map_estimate(col) for col in draws.pooled("mu").T])
    sigma2_hat = map_estimate(draws.pooled("sigma2"))
    Bg = eval_basis(basis, grid)
    partial = b_hat.reshape(draws.p, draws.K) @ Bg.T
    gated = partial * Z_hat[:, None]
    lower, upper = credible_bands(draws, basis, grid, level)
    return FitSummary(
        Z_hat=Z_hat,
        b_hat=b_hat,
        sigma2_hat=sigma2_hat,
        eta2_hat=eta2_hat,
        theta_hat=theta_hat,
        mu_hat=mu_hat,
        K=draws.K,
        grid=grid,
        partial_curves=partial,
        coefficient_curves=gated,
        band_lower=lower,
        band_upper=upper,
        intercept_grid=np.array(std.grid),
        intercept_curve=np.array(std.intercept_estimate),
        basis=basis,
        covariate_labels=std.base.covariate_labels,
    )


def fitted_mean(b_hat, Z_hat, covariates, basis_mat, intercept):
    """beta0(t_j) + sum_l x_li Z_l beta_l(t_j) for every curve i: (m, n) array."""
    p = len(Z_hat)
    bm = np.asarray(b_hat, dtype=float).reshape(p, -1)
    beta = bm @ np.asarray(basis_mat).T  # p x n
    gated = beta * np.asarray(Z_hat, dtype=float)[:, None]
    return np.asarray(intercept)[None, :] + np.asarray(covariates).T @ gated


def predict(summary: FitSummary, data: StandardizedDataset, grid=None):
    """Fitted mean curves for the (standardized) covariates of ``data``.

    Returns one vector per curve on the dataset's grid.  The intercept is the
    functional mean held by the summary, so the grid must match it.
    """
    base = data.base
    if grid is None:
        grid = base.grids[0]
    grid = np.asarray(grid, dtype=float)
    if not base.shared_grid or not np.array_equal(base.grids[0], grid):
        raise GridMismatch("prediction uses the shared grid of the dataset")
    if not np.array_equal(summary.intercept_grid, grid):
        raise GridMismatch("intercept estimate lives on a different grid")
    basis_mat = eval_basis(summary.basis, grid)
    yhat = fitted_mean(summary.b_hat, summary.Z_hat, base.covariates, basis_mat, summary.intercept_curve)
    return list(yhat)
