"""Goodness-of-fit, truth-based MSE and GCV."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegreesOfFreedom, GridMismatch, NullVariation, SaturatedFit, ValidationError
from .fda import StandardizedDataset, basis_matrices, selector_mask, ungated_design


def _stack(curves):
    if isinstance(curves, np.ndarray):
        return curves.ravel()
    return np.concatenate([np.ravel(c) for c in curves])


def _intercept_per_obs(intercept, y_curves):
    b0 = np.asarray(intercept, dtype=float)
    if isinstance(y_curves, np.ndarray) and y_curves.ndim == 2 and b0.ndim == 1 and b0.size == y_curves.shape[1]:
        return np.broadcast_to(b0, y_curves.shape).ravel()
    if not isinstance(y_curves, np.ndarray) and b0.ndim == 1 and all(np.size(c) == b0.size for c in y_curves):
        return np.tile(b0, len(y_curves))
    return _stack(intercept if not isinstance(intercept, np.ndarray) or intercept.ndim > 1 else [intercept])


def r2_adjusted(y, intercept, yhat, Z_hat, K):
    """Adjusted-R^2-like fit metric for functional responses.

    1 - (N - 1) * sum (y - yhat)^2 / ((N - s K) * sum (y - beta0)^2), with N
    the number of observations, s the number of selected covariates and
    beta0 the functional-mean intercept.  ``intercept`` may be one curve on
    the shared grid.
    """
    y_all = _stack(y)
    yhat_all = _stack(yhat)
    b0 = _intercept_per_obs(intercept, y)
    if not (y_all.shape == yhat_all.shape == b0.shape):
        raise GridMismatch("responses, predictions and intercept differ in length")
    N = y_all.size
    df = N - int(np.sum(np.asarray(Z_hat) > 0)) * int(K)
    if df <= 0:
        raise DegreesOfFreedom(f"N={N} observations leave {df} residual degrees of freedom")
    tss = np.sum((y_all - b0) ** 2)
    if tss == 0:
        raise NullVariation("responses equal the intercept everywhere")
    rss = np.sum((y_all - yhat_all) ** 2)
    return float(1.0 - (N - 1) * rss / (df * tss))


def mse_truth(true_mean, estimated_mean):
    """Average squared gap between true and estimated mean curves over all points."""
    if isinstance(true_mean, np.ndarray) and isinstance(estimated_mean, np.ndarray):
        if true_mean.shape != estimated_mean.shape:
            raise GridMismatch(f"shapes {true_mean.shape} and {estimated_mean.shape} differ")
    else:
        if len(true_mean) != len(estimated_mean) or any(
            np.size(a) != np.size(b) for a, b in zip(true_mean, estimated_mean)
        ):
            raise GridMismatch("true and estimated curves are on different grids")
    a, b = _stack(true_mean), _stack(estimated_mean)
    return float(np.mean((a - b) ** 2))


def gcv_parts(ytilde, O_hat, eta2_hat, b_hat):
    """(rss, tr(S), N) with S = O Q^-1 O' and Q = diag(eta2) + O'O.

    The trace is tr(Q^-1 O'O), so S is never formed.
    """
    O_hat = np.asarray(O_hat, dtype=float)
    ytilde = np.asarray(ytilde, dtype=float)
    N = ytilde.size
    resid = ytilde - O_hat @ np.asarray(b_hat, dtype=float)
    G = O_hat.T @ O_hat
    Q = G + np.diag(np.asarray(eta2_hat, dtype=float))
    trace = float(np.trace(cho_solve(cho_factor(Q, lower=True), G)))
    return float(resid @ resid), trace, N


def gcv_value(rss, trace, N):
    denom = 1.0 - trace / N
    if abs(denom) < 1e-12:
        raise SaturatedFit(f"trace of projection {trace} equals N={N}")
    return rss / N / denom**2


def gcv(std: StandardizedDataset, summary, basis=None):
    """Generalized cross-validation score of a fitted summary on centered data."""
    basis = summary.basis if basis is None else basis
    data = std.base
    mats, shared = basis_matrices(data, basis)
    D = ungated_design(data.covariates, mats, shared=shared)
    O_hat = D * selector_mask(summary.Z_hat, basis.K)[None, :]
    return gcv_value(*gcv_parts(std.centered_stacked(), O_hat, summary.eta2_hat, summary.b_hat))


@dataclass(frozen=True)
class MetricReport:
    r2_adj: float
    gcv: float
    K_used: int
    selected_count: int
    mse: float | None = None

    def __post_init__(self):
        if self.r2_adj > 1 + 1e-12:
            raise ValidationError("fit metric cannot exceed 1")
        if self.gcv < 0 or (self.mse is not None and self.mse < 0):
            raise ValidationError("gcv and mse are nonnegative")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_csv_row(self, **extra):
        """Header plus one data row; ``extra`` columns come first."""
        row = {**extra, **self.to_dict()}
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow({k: ("" if v is None else v) for k, v in row.items()})
        return buf.getvalue()
