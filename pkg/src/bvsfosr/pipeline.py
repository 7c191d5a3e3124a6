"""End-to-end fit: standardize, sample, summarize, score."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fda import FunctionalDataset, StandardizedDataset, build_bspline_basis, standardize
from .inference import ConvergenceReport, FitSummary, convergence_report, predict, summarize
from .metrics import MetricReport, gcv, mse_truth, r2_adjusted
from .sampler import GibbsConfig, Hyperparameters, PosteriorDraws, run_chains


@dataclass
class FitResult:
    std: StandardizedDataset
    draws: PosteriorDraws
    summary: FitSummary
    convergence: ConvergenceReport
    metrics: MetricReport

    @property
    def basis(self):
        return self.summary.basis

    def predictions(self):
        return np.vstack(predict(self.summary, self.std))


def fit_model(
    data: FunctionalDataset,
    K=10,
    order=4,
    hp: Hyperparameters | None = None,
    cfg: GibbsConfig | None = None,
    *,
    truth_mean=None,
    replication=0,
    threads=1,
    rhat_threshold=1.1,
    level=0.95,
) -> FitResult:
    """Fit the selection model to raw data and attach all metrics.

    ``truth_mean`` (m x n true mean curves) enables the MSE.
    """
    hp = Hyperparameters() if hp is None else hp
    cfg = GibbsConfig() if cfg is None else cfg
    std = standardize(data)
    basis = build_bspline_basis(K, order, data.domain)
    draws = run_chains(std, basis, hp, cfg, replication=replication, threads=threads)
    summary = summarize(draws, basis, std, level=level)
    conv = convergence_report(draws, threshold=rhat_threshold)
    yhat = np.vstack(predict(summary, std))
    r2 = r2_adjusted(np.vstack(data.curves), std.intercept_estimate, yhat, summary.Z_hat, K)
    mse = None if truth_mean is None else mse_truth(np.asarray(truth_mean), yhat)
    report = MetricReport(
        r2_adj=r2,
        gcv=gcv(std, summary, basis),
        K_used=K,
        selected_count=summary.selected_count,
        mse=mse,
    )
    summary.metrics = report.to_dict()
    return FitResult(std, draws, summary, conv, report)
