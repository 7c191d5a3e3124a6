"""Synthetic function-on-scalar data and the replication harness."""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .fda import FunctionalDataset
from .errors import ValidationError

# (mean, sd) of the six covariate laws
COVARIATE_LAWS = ((200.0, 100.0), (100.0, 100.0), (20.0, 50.0), (50.0, 50.0), (2.0, 5.0), (25.0, 50.0))
TRUE_SELECTORS = (0, 0, 1, 0, 1, 0)


def beta0(t):
    return np.exp(np.asarray(t) ** 2)


def beta3(t):
    return np.cos(2.0 * np.asarray(t))


def beta5(t):
    return np.asarray(t) ** 3


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))


COEFFICIENT_FUNCTIONS = (_zero, _zero, beta3, _zero, beta5, _zero)


@dataclass(frozen=True)
class SyntheticSpec:
    m: int = 10
    n: int = 25
    sigma: float = 0.2
    domain: tuple = (0.0, 2.0)
    covariate_laws: tuple = COVARIATE_LAWS
    true_selectors: tuple = TRUE_SELECTORS
    seed: int = 0

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise ValidationError("need m >= 2 curves and n >= 2 points")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if len(self.covariate_laws) != len(self.true_selectors):
            raise ValidationError("one covariate law per selector")

    @property
    def p(self):
        return len(self.covariate_laws)

    def grid(self):
        return np.linspace(self.domain[0], self.domain[1], self.n)


@dataclass(frozen=True)
class SyntheticTruth:
    """Noise-free quantities behind a generated dataset."""

    grid: np.ndarray
    covariates: np.ndarray
    intercept: np.ndarray
    coefficients: np.ndarray  # p x n, beta_l(t_j) before gating
    selectors: np.ndarray
    mean_curves: np.ndarray  # m x n, beta0 + g_i


def mean_curves(grid, covariates, selectors=TRUE_SELECTORS, functions=COEFFICIENT_FUNCTIONS):
    coef = np.vstack([f(grid) for f in functions])
    gated = coef * np.asarray(selectors, dtype=float)[:, None]
    return beta0(grid)[None, :] + np.asarray(covariates).T @ gated, coef


def draw_covariates(spec: SyntheticSpec, rng):
    laws = np.asarray(spec.covariate_laws)
    return laws[:, 0:1] + laws[:, 1:2] * rng.standard_normal((spec.p, spec.m))


def generate_dataset(spec: SyntheticSpec, rng=None, covariates=None):
    """Draw one dataset; returns ``(FunctionalDataset, SyntheticTruth)``.

    ``covariates`` (p x m) may be passed to hold them fixed across calls.
    """
    if rng is None:
        rng = rngmod.data_rng(spec.seed)
    X = draw_covariates(spec, rng) if covariates is None else np.asarray(covariates, dtype=float)
    t = spec.grid()
    mu, coef = mean_curves(t, X, spec.true_selectors)
    y = mu + spec.sigma * rng.standard_normal(mu.shape)
    data = FunctionalDataset(
        curves=tuple(y),
        grids=(t,) * spec.m,
        covariates=X,
        domain=spec.domain,
        covariate_labels=tuple(f"x_{l + 1}" for l in range(spec.p)),
    )
    truth = SyntheticTruth(t, X, beta0(t), coef, np.asarray(spec.true_selectors), mu)
    return data, truth


# ---------------------------------------------------------------------------
# replication harness


@dataclass(frozen=True)
class ModelConfig:
    """One model configuration: fixed ``mu`` or ``mu=None`` for mu as a parameter."""

    label: str
    mu: float | None = None

    def hyperparameters(self, base=None):
        from .sampler import Hyperparameters

        base = Hyperparameters() if base is None else base
        return Hyperparameters(lam=base.lam, delta1=base.delta1, delta2=base.delta2, mu=self.mu, psi=base.psi)


def sensitivity_configs(mus=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9), include_parameter=True):
    """Fixed-mu configurations plus, optionally, mu treated as a parameter."""
    configs = [ModelConfig(f"mu={m:g}", float(m)) for m in mus]
    if include_parameter:
        configs.append(ModelConfig("mu=parameter", None))
    return configs


METRIC_FIELDS = ("r2_adj", "mse", "gcv", "runtime")


@dataclass
class ReplicationResult:
    """Per-replication records plus aggregates over configurations.

    ``records`` holds one dict per (replication, configuration) with keys
    replication, configuration, r2_adj, mse, gcv, runtime, Z_hat, max_rhat
    and error (None on success).
    """

    records: list
    configurations: tuple
    n_replications: int
    p: int
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        for c in self.configurations:
            n = sum(1 for r in self.records if r["configuration"] == c)
            if n != self.n_replications:
                raise ValidationError(f"configuration {c} has {n} records, expected {self.n_replications}")

    def _ok(self, config):
        return [r for r in self.records if r["configuration"] == config and r["error"] is None]

    def failure_count(self, config=None):
        return sum(1 for r in self.records if r["error"] is not None and (config is None or r["configuration"] == config))

    def proportions(self):
        """Share of successful replications selecting each covariate, per configuration."""
        out = {}
        for c in self.configurations:
            ok = self._ok(c)
            out[c] = np.mean([r["Z_hat"] for r in ok], axis=0) if ok else np.full(self.p, np.nan)
        return out

    def metric_values(self, config, metric):
        return np.array([r[metric] for r in self._ok(config) if r[metric] is not None], dtype=float)

    def metric_summary(self):
        out = {}
        for c in self.configurations:
            row = {}
            for m in METRIC_FIELDS:
                v = self.metric_values(c, m)
                row[m] = dict(mean=float(v.mean()), sd=float(v.std(ddof=1)) if v.size > 1 else 0.0,
                              median=float(np.median(v)), n=int(v.size)) if v.size else None
            row["failures"] = self.failure_count(c)
            out[c] = row
        return out

    def tidy_rows(self):
        """(replication, configuration, metric, value) rows; selectors appear as Z_l metrics."""
        rows = []
        for r in self.records:
            base = (r["replication"], r["configuration"])
            if r["error"] is not None:
                rows.append(base + ("error", r["error"]))
                continue
            for m in METRIC_FIELDS + ("max_rhat",):
                if r[m] is not None:
                    rows.append(base + (m, r[m]))
            rows.extend(base + (f"Z_{l + 1}", int(z)) for l, z in enumerate(r["Z_hat"]))
        return rows

    def write_tidy_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("replication", "configuration", "metric", "value"))
            w.writerows(self.tidy_rows())

    def write_proportions_csv(self, path):
        """One row per configuration, one column per coefficient, plus failure count."""
        props = self.proportions()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("configuration",) + tuple(f"beta_{l + 1}" for l in range(self.p)) + ("failures",))
            for c in self.configurations:
                w.writerow((c,) + tuple(float(x) for x in props[c]) + (self.failure_count(c),))


def _replication_data(spec: SyntheticSpec, r, hold_covariates):
    gen = rngmod.data_rng(spec.seed, r)
    X = None
    if hold_covariates:
        X = draw_covariates(spec, rngmod.stream(spec.seed, rngmod.DATA, 0, 1))
    return generate_dataset(spec, gen, covariates=X)


def _replicate_one(job):
    from .pipeline import fit_model

    spec, configs, r, cfg, K, order, base_hp, hold = job
    data, truth = _replication_data(spec, r, hold)
    records = []
    for c in configs:
        rec = dict(replication=r, configuration=c.label, r2_adj=None, mse=None, gcv=None,
                   runtime=None, Z_hat=None, max_rhat=None, error=None)
        t0 = time.perf_counter()
        try:
            res = fit_model(data, K, order, c.hyperparameters(base_hp), cfg,
                            truth_mean=truth.mean_curves, replication=r)
            rec.update(r2_adj=res.metrics.r2_adj, mse=res.metrics.mse, gcv=res.metrics.gcv,
                       Z_hat=[int(z) for z in res.summary.Z_hat],
                       max_rhat=float(max(res.convergence.psrf.values())))
        except Exception as exc:  # recorded, not fatal
            rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["runtime"] = time.perf_counter() - t0
        records.append(rec)
    return records


def run_replications(spec: SyntheticSpec, configs, R, cfg=None, *, K=10, order=4,
                     hyperparameters=None, hold_covariates=False, threads=1, progress=None):
    """Fit every configuration on R independent synthetic datasets.

    Replication r draws its data from stream (spec.seed, r) and its chains
    from (cfg.seed, r), so results do not depend on ``threads``.
    """
    from .sampler import GibbsConfig

    if R < 1:
        raise ValidationError("R must be at least 1")
    cfg = GibbsConfig() if cfg is None else cfg
    configs = list(configs)
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise ValidationError("configuration labels must be unique")
    jobs = [(spec, configs, r, cfg, K, order, hyperparameters, hold_covariates) for r in range(R)]
    records = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for out in pool.map(_replicate_one, jobs):
                records.extend(out)
                if progress:
                    progress(out[0]["replication"])
    else:
        for job in jobs:
            out = _replicate_one(job)
            records.extend(out)
            if progress:
                progress(job[2])
    settings = dict(spec=dict(m=spec.m, n=spec.n, sigma=spec.sigma, seed=spec.seed, domain=list(spec.domain)),
                    gibbs=cfg.to_dict(), K=K, order=order, hold_covariates=hold_covariates, R=R)
    return ReplicationResult(records, tuple(labels), R, spec.p, settings)
