"""Gibbs sampler for latent-gated function-on-scalar regression.

Model, per observation (i, j) on centered responses:

    ytilde_ij ~ N(sum_l x_li Z_l b_.l' B_ij, sigma2)
    b_kl      ~ N(0, sigma2 * tau2_kl),    tau2_kl ~ Exp(rate = lam^2 / 2)
    Z_l       ~ Bernoulli(theta_l),         theta_l ~ Beta(mu_l, 1 - mu_l)
    mu_l      ~ Uniform(0, psi)             (only when mu is a parameter)
    sigma2    ~ InverseGamma(delta1, delta2)

One sweep draws sigma2, then eta2 = 1/tau2, then (mu_l, Z_l, theta_l) for
each covariate, then the coefficient vector b jointly.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import lapack

from . import rng as rngmod
from .errors import (
    ChainFailure,
    DegenerateConditional,
    IllConditionedPrecision,
    ValidationError,
)
from .fda import (
    BasisSystem,
    StandardizedDataset,
    basis_matrices,
    selector_mask,
    ungated_design,
)

B_FLOOR = 1e-10
D_CLAMP = 700.0
# theta is kept strictly inside (0, 1) so log(theta) and log1p(-theta) stay finite
THETA_LO = np.finfo(float).tiny
THETA_HI = 1.0 - np.finfo(float).epsneg
CB_UNIFORM_BAND = 1e-6
JITTER_START = 1e-10
JITTER_STOP = 1e-4


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings.

    ``mu=None`` switches to the model where each mu_l is a parameter with a
    Uniform(0, psi) prior; otherwise ``mu`` is a fixed scalar or length-p
    vector.
    """

    lam: float = math.sqrt(2.0)
    delta1: float = 0.0
    delta2: float = 0.0
    mu: float | tuple | None = 0.5
    psi: float = 0.6

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValidationError(f"lambda must be positive, got {self.lam}")
        if self.delta1 < 0 or self.delta2 < 0:
            raise ValidationError("delta1 and delta2 must be nonnegative")
        if self.mu is None:
            if not 0 < self.psi < 1:
                raise ValidationError(f"psi must lie in (0, 1), got {self.psi}")
        else:
            mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
            if np.any(mu <= 0) or np.any(mu >= 1):
                raise ValidationError(f"fixed mu must lie in (0, 1), got {self.mu}")
            if mu.size > 1:
                object.__setattr__(self, "mu", tuple(float(v) for v in mu))

    @classmethod
    def from_prior_count(cls, C, p, **kwargs):
        """Fixed mu_l = C / p, so that C is the prior expected number selected."""
        return cls(mu=C / p, **kwargs)

    @property
    def mu_is_parameter(self):
        return self.mu is None

    def mu_vector(self, p):
        if self.mu is None:
            raise ValueError("mu is a parameter in this configuration")
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if mu.size == 1:
            return np.full(p, float(mu[0]))
        if mu.size != p:
            raise ValidationError(f"mu has {mu.size} entries, expected p={p}")
        return mu.copy()


@dataclass(frozen=True)
class ChainState:
    b: np.ndarray
    Z: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    sigma2: float
    tau2: np.ndarray

    @property
    def eta2(self):
        return 1.0 / self.tau2

    def check(self):
        """Raise ValidationError if any state invariant fails."""
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.all(self.tau2 > 0) or not np.all(np.isfinite(self.tau2)):
            raise ValidationError("tau2 must be positive and finite")
        if not np.all((self.theta > 0) & (self.theta < 1)):
            raise ValidationError("theta must lie strictly inside (0, 1)")
        if not np.all((self.Z == 0) | (self.Z == 1)):
            raise ValidationError("Z must be binary")
        if not np.all(np.isfinite(self.b)):
            raise ValidationError("b must be finite")
        return self


class FOSRProblem:
    """Data-side quantities the sampler reuses every sweep.

    ``D`` is the design with every selector on (N x Kp); gating by Z only
    masks its columns, so ``D'D`` and ``D'ytilde`` are computed once.
    """

    def __init__(self, ytilde, D, K, p):
        self.ytilde = np.ascontiguousarray(ytilde, dtype=float)
        self.D = np.ascontiguousarray(D, dtype=float)
        self.K = int(K)
        self.p = int(p)
        if self.D.shape != (self.ytilde.size, self.K * self.p):
            raise ValidationError(f"design shape {self.D.shape} does not match N={self.ytilde.size}, Kp={self.K * self.p}")
        self.n_obs = self.ytilde.size
        # (p, N, K) so that per-covariate terms are one batched matmul
        self._Dblocks = np.ascontiguousarray(self.D.reshape(self.n_obs, self.p, self.K).transpose(1, 0, 2))
        self.DtD = self.D.T @ self.D
        self.DtD = 0.5 * (self.DtD + self.DtD.T)
        self.Dty = self.D.T @ self.ytilde
        self._diag = np.arange(self.K * self.p) * (self.K * self.p + 1)
        self._gated_gram = {}

    @classmethod
    def from_standardized(cls, std: StandardizedDataset, basis: BasisSystem):
        data = std.base
        mats, shared = basis_matrices(data, basis)
        D = ungated_design(data.covariates, mats, shared=shared)
        return cls(std.centered_stacked(), D, basis.K, data.p)

    @classmethod
    def from_arrays(cls, ytilde, covariates, basis_mats, shared=False):
        X = np.atleast_2d(np.asarray(covariates, dtype=float))
        D = ungated_design(X, basis_mats, shared=shared)
        K = basis_mats[0].shape[1]
        return cls(ytilde, D, K, X.shape[0])

    def with_response(self, ytilde):
        """Same design, new centered responses (no refactorization of D'D)."""
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.ytilde = np.ascontiguousarray(ytilde, dtype=float)
        new.Dty = self.D.T @ new.ytilde
        return new

    def fitted(self, b, Z):
        return self.D @ (np.asarray(b) * selector_mask(Z, self.K))

    def residual(self, b, Z):
        return self.ytilde - self.fitted(b, Z)

    def contributions(self, b):
        """N x p matrix; column l is x_li * b_.l' B_ij (the ungated term of l)."""
        return np.matmul(self._Dblocks, np.reshape(b, (self.p, self.K, 1)))[:, :, 0].T

    def selected_gram(self, Z):
        """(column indices of selected blocks, D'D restricted to them), cached per pattern."""
        key = np.asarray(Z, dtype=np.int8).tobytes()
        hit = self._gated_gram.get(key)
        if hit is None:
            cols = np.flatnonzero(selector_mask(Z, self.K))
            G = np.asfortranarray(self.DtD[np.ix_(cols, cols)])
            G.setflags(write=False)
            hit = (cols, G)
            if len(self._gated_gram) < 4096:
                self._gated_gram[key] = hit
        return hit

    def precision(self, Z, eta2):
        """Full Q = diag(eta2) + O'O and O'ytilde for selector vector Z."""
        mask = selector_mask(Z, self.K)
        Q = self.DtD * np.outer(mask, mask)
        Q.flat[self._diag] += eta2
        return Q, mask * self.Dty


# ---------------------------------------------------------------------------
# full conditionals


def sigma2_conditional(resid, b, tau2, hp: Hyperparameters):
    """(shape, rate) of the inverse-gamma full conditional of sigma2."""
    resid = np.asarray(resid, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = resid.size / 2.0 + b.size / 2.0 + hp.delta1
    rate = (resid @ resid + b @ (b / tau2) + 2.0 * hp.delta2) / 2.0
    return shape, rate


def sample_sigma2(state: ChainState, problem: FOSRProblem, hp: Hyperparameters, rng, resid=None):
    if resid is None:
        resid = problem.residual(state.b, state.Z)
    shape, rate = sigma2_conditional(resid, state.b, state.tau2, hp)
    if not rate > 0:
        raise DegenerateConditional(f"sigma2 conditional has rate {rate}; residuals and b are all zero")
    return rate / rng.standard_gamma(shape)


def inverse_gaussian(mean, shape, rng, size=None):
    """Michael-Schucany-Haas draw from InverseGaussian(mean, shape).

    The smaller root is formed as mean^2 / larger root, which avoids the
    cancellation of the textbook expression when mean/shape is large.
    """
    mean = np.asarray(mean, dtype=float)
    if size is None:
        size = np.broadcast(mean, np.asarray(shape)).shape
    nu = rng.standard_normal(size)
    my = mean * (nu * nu)
    half = mean / (2.0 * shape)
    big = mean + half * (my + np.sqrt(my * (4.0 * shape + my)))
    small = mean * mean / big
    u = rng.random(size)
    return np.where(u * (mean + small) <= mean, small, big)


def eta2_conditional(b, sigma2, lam):
    """(mean, shape) of the inverse-Gaussian conditional of eta2 = 1/tau2."""
    absb = np.maximum(np.abs(b), B_FLOOR)
    return (lam * math.sqrt(sigma2)) / absb, lam * lam


def sample_eta2(b, sigma2, lam, rng):
    mean, shape = eta2_conditional(b, sigma2, lam)
    out = inverse_gaussian(mean, shape, rng)
    # MSH underflows to 0 only for astronomically small draws; keep tau2 finite
    return np.maximum(out, np.finfo(float).tiny)


def z_probability(theta, d):
    """P(Z_l = 1 | .) = theta / ((1 - theta) exp(d) + theta), d = (SSR1 - SSR0) / (2 sigma2).

    Evaluated in log space with d clamped to +-700.
    """
    raw = np.asarray(theta, dtype=float)
    theta = np.clip(raw, THETA_LO, THETA_HI)
    d = np.clip(np.asarray(d, dtype=float), -D_CLAMP, D_CLAMP)
    log_t = np.log(theta)
    prob = np.exp(log_t - np.logaddexp(np.log1p(-theta) + d, log_t))
    # a degenerate prior inclusion probability decides regardless of the data
    return np.where(raw >= 1.0, 1.0, np.where(raw <= 0.0, 0.0, prob))


def _z_prob_scalar(theta, d):
    if theta >= 1.0 or theta <= 0.0:
        return 1.0 if theta >= 1.0 else 0.0
    theta = min(max(theta, THETA_LO), THETA_HI)
    d = min(max(d, -D_CLAMP), D_CLAMP)
    log_t = math.log(theta)
    a = math.log1p(-theta) + d
    hi = max(a, log_t)
    return math.exp(log_t - hi - math.log(math.exp(a - hi) + math.exp(log_t - hi)))


def ssr_difference(l, b, Z, problem: FOSRProblem):
    """SSR with Z_l forced to 1 minus SSR with Z_l forced to 0, over all curves."""
    Z0 = np.array(Z, copy=True)
    Z0[l] = 0
    r0 = problem.residual(b, Z0)
    c = problem.contributions(b)[:, l]
    return c @ c - 2.0 * (r0 @ c)


def sample_Z(l, state: ChainState, problem: FOSRProblem, rng, sigma2=None):
    """Draw Z_l given the current (partially updated) selector vector in ``state``."""
    s2 = state.sigma2 if sigma2 is None else sigma2
    d = ssr_difference(l, state.b, state.Z, problem) / (2.0 * s2)
    return int(rng.random() < z_probability(state.theta[l], d))


def sample_theta(mu_l, Z_l, rng):
    """Beta(mu + Z, 2 - Z - mu) draw, vectorized over covariates."""
    mu_l = np.asarray(mu_l, dtype=float)
    Z_l = np.asarray(Z_l, dtype=float)
    draw = rng.beta(mu_l + Z_l, 2.0 - Z_l - mu_l)
    return np.minimum(np.maximum(draw, THETA_LO), THETA_HI)


def truncated_cb_cdf(x, theta, psi):
    """CDF on (0, psi) of the density proportional to theta^x (1 - theta)^(1 - x)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, psi)
    a = math.log(theta) - math.log1p(-theta)
    if abs(theta - 0.5) < CB_UNIFORM_BAND:
        return x / psi
    return np.expm1(a * x) / math.expm1(a * psi)


def truncated_cb_ppf(u, theta, psi):
    """Inverse of :func:`truncated_cb_cdf`, stable for either sign of logit(theta)."""
    u = np.asarray(u, dtype=float)
    theta = np.asarray(theta, dtype=float)
    a = np.log(theta) - np.log1p(-theta)
    flat = np.abs(theta - 0.5) < CB_UNIFORM_BAND
    a_safe = np.where(flat, 1.0, a)
    ap = a_safe * psi
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        # a < 0: x = log1p(u * expm1(a psi)) / a
        neg = np.log1p(u * np.expm1(np.minimum(ap, 0.0))) / a_safe
        # a > 0: x = psi + log(u + (1 - u) exp(-a psi)) / a
        pos = psi + np.log(u + (1.0 - u) * np.exp(-np.maximum(ap, 0.0))) / a_safe
    x = np.where(flat, u * psi, np.where(a_safe < 0, neg, pos))
    return np.clip(x, 0.0, psi)


def sample_mu(theta_l, psi, rng):
    theta_l = np.asarray(theta_l, dtype=float)
    u = rng.random(theta_l.shape)
    x = truncated_cb_ppf(u, theta_l, psi)
    # keep strictly inside (0, psi)
    return np.clip(x, np.finfo(float).tiny, np.nextafter(psi, 0.0))


def _smallest_pivot(Q):
    A = np.array(Q, dtype=float)
    n = A.shape[0]
    pivots = np.empty(n)
    for k in range(n):
        pivots[k] = A[k, k]
        if pivots[k] == 0:
            return 0.0
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:]) / A[k, k]
    return float(pivots.min())


def precision_cholesky(Q):
    """Lower Cholesky factor of Q, adding diagonal jitter only on failure."""
    L, info = lapack.dpotrf(Q, lower=1, clean=1, overwrite_a=0)
    if info == 0:
        return L
    scale = float(np.mean(np.diag(Q)))
    jitter = JITTER_START * scale
    while jitter <= JITTER_STOP * scale * (1 + 1e-12):
        L, info = lapack.dpotrf(Q + jitter * np.eye(Q.shape[0]), lower=1, clean=1)
        if info == 0:
            return L
        jitter *= 10.0
    raise IllConditionedPrecision(_smallest_pivot(Q))


def b_conditional(problem: FOSRProblem, Z, eta2):
    """Mean Q^-1 O'ytilde, the lower factor L of Q, and Q (covariance is sigma2 Q^-1)."""
    Q, rhs = problem.precision(Z, eta2)
    L = precision_cholesky(Q)
    mean, info = lapack.dpotrs(L, rhs, lower=1)
    return mean, L, Q


def sample_b(problem: FOSRProblem, sigma2, Z, eta2, rng):
    """Joint draw of b from N(Q^-1 O'ytilde, sigma2 Q^-1).

    Columns of deselected covariates are zero in O, so Q is block diagonal:
    the selected block is factored by Cholesky, the rest has diagonal
    precision eta2.
    """
    z = rng.standard_normal(problem.K * problem.p)
    s = math.sqrt(sigma2)
    out = s * z / np.sqrt(eta2)
    cols, G = problem.selected_gram(Z)
    if cols.size:
        Qs = G.copy(order="F")
        Qs.flat[:: cols.size + 1] += eta2[cols]
        L = precision_cholesky(Qs)
        # L' x = L^-1 rhs + s z gives mean + s L'^-1 z in two triangular solves
        w, info = lapack.dtrtrs(L, problem.Dty[cols], lower=1)
        x, info = lapack.dtrtrs(L, w + s * z[cols], lower=1, trans=1)
        out[cols] = x
    return out


def gibbs_step(state: ChainState, problem: FOSRProblem, hp: Hyperparameters, rng) -> ChainState:
    """One sweep of the sampler; returns a new state."""
    p = problem.p
    b = state.b
    C = problem.contributions(b)
    resid = problem.ytilde - C @ state.Z

    sigma2 = sample_sigma2(state, problem, hp, rng, resid=resid)
    eta2 = sample_eta2(b, sigma2, hp.lam, rng)
    tau2 = 1.0 / eta2

    # mu_l and theta_l only couple to their own Z_l, so they are drawn as
    # vectors around the sequential Z sweep
    if hp.mu_is_parameter:
        mu = sample_mu(state.theta, hp.psi, rng)
    else:
        mu = state.mu
    # Z sweep on inner products: with C the per-covariate terms and r the
    # current residual, toggling Z_l moves r by -/+ C[:, l]
    G = (C.T @ C).tolist()
    rc = (resid @ C).tolist()
    theta_prev = state.theta.tolist()
    u = rng.random(p).tolist()
    Zl = state.Z.tolist()
    two_s2 = 2.0 * sigma2
    for l in range(p):
        Gl = G[l]
        # r0 = residual with Z_l = 0
        r0c = rc[l] + Gl[l] if Zl[l] else rc[l]
        d = (Gl[l] - 2.0 * r0c) / two_s2
        new = 1 if u[l] < _z_prob_scalar(theta_prev[l], d) else 0
        if new != Zl[l]:
            sign = -1.0 if new else 1.0
            for q in range(p):
                rc[q] += sign * Gl[q]
            Zl[l] = new
    Z = np.array(Zl, dtype=np.int64)
    theta = sample_theta(mu, Z, rng)

    b_new = sample_b(problem, sigma2, Z, eta2, rng)
    return ChainState(b_new, Z, theta, mu, float(sigma2), tau2)


# ---------------------------------------------------------------------------
# chains


@dataclass(frozen=True)
class GibbsConfig:
    n_iterations: int = 10000
    burn_in_fraction: float = 0.5
    thinning: int = 50
    n_chains: int = 2
    seed: int = 0
    init: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_iterations < 1 or self.thinning < 1 or self.n_chains < 1:
            raise ValidationError("n_iterations, thinning and n_chains must be positive")
        if not 0 <= self.burn_in_fraction < 1:
            raise ValidationError("burn_in_fraction must lie in [0, 1)")
        if self.n_retained < 2:
            raise ValidationError(
                f"{self.n_iterations} iterations with burn-in {self.burn_in_fraction} and "
                f"thinning {self.thinning} keep {self.n_retained} draws per chain; need >= 2"
            )
        if self.init is not None and len(self.init) != self.n_chains:
            raise ValidationError("init must give one state per chain")

    @property
    def n_burn(self):
        return int(round(self.n_iterations * self.burn_in_fraction))

    @property
    def n_retained(self):
        return (self.n_iterations - self.n_burn) // self.thinning

    def retained_iterations(self):
        """1-based iteration numbers kept; iteration 1 is the initial state."""
        return self.n_burn + self.thinning * np.arange(1, self.n_retained + 1)

    def to_dict(self):
        d = asdict(self)
        d.pop("init")
        return d


def default_initial_states(p, K, hp: Hyperparameters, rng, n_chains=2):
    """Two-chain starting points: b = -1 / +1, theta = 1/5 / 4/5, sigma2 = 1 / 5,
    tau2 = 1 / 5, mu = 1/5 / 4/5, and Z a random draw and its complement.
    """
    Z1 = rng.integers(0, 2, size=p)
    presets = [
        dict(b=-1.0, theta=0.2, sigma2=1.0, tau2=1.0, mu=0.2, Z=Z1),
        dict(b=1.0, theta=0.8, sigma2=5.0, tau2=5.0, mu=0.8, Z=1 - Z1),
    ]
    states = []
    for c in range(n_chains):
        s = presets[c % 2]
        mu = np.full(p, s["mu"]) if hp.mu_is_parameter else hp.mu_vector(p)
        states.append(
            ChainState(
                b=np.full(K * p, s["b"]),
                Z=np.array(s["Z"], dtype=np.int64),
                theta=np.full(p, s["theta"]),
                mu=mu,
                sigma2=s["sigma2"],
                tau2=np.full(K * p, s["tau2"]),
            )
        )
    return tuple(states)


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws, indexed [chain, draw, ...]."""

    b: np.ndarray
    Z: np.ndarray
    theta: np.ndarray
    mu: np.ndarray | None
    sigma2: np.ndarray
    tau2: np.ndarray
    iterations: np.ndarray
    K: int
    p: int
    seed: int
    config: dict
    hyperparameters: dict

    @property
    def n_chains(self):
        return self.b.shape[0]

    @property
    def n_draws(self):
        return self.b.shape[1]

    @property
    def eta2(self):
        return 1.0 / self.tau2

    def pooled(self, name):
        a = getattr(self, name)
        return a.reshape((-1,) + a.shape[2:])

    def parameter_names(self):
        names = [f"b.l{l + 1}.k{k + 1}" for l in range(self.p) for k in range(self.K)]
        names += [f"Z.l{l + 1}" for l in range(self.p)]
        names += [f"theta.l{l + 1}" for l in range(self.p)]
        if self.mu is not None:
            names += [f"mu.l{l + 1}" for l in range(self.p)]
        names.append("sigma2")
        names += [f"tau2.l{l + 1}.k{k + 1}" for l in range(self.p) for k in range(self.K)]
        return names

    def series(self, name):
        """(n_chains, n_draws) array for a scalar parameter name such as ``b.l3.k2``."""
        parts = name.split(".")
        kind = parts[0]
        if kind == "sigma2":
            return self.sigma2
        l = int(parts[1][1:]) - 1
        if kind in ("b", "tau2"):
            k = int(parts[2][1:]) - 1
            return getattr(self, kind)[:, :, l * self.K + k]
        if kind in ("Z", "theta", "mu"):
            arr = getattr(self, kind)
            if arr is None:
                raise KeyError(name)
            return arr[:, :, l]
        raise KeyError(name)


def _run_one_chain(problem, hp, cfg, state, seed_key):
    seed, chain, replication = seed_key
    gen = rngmod.chain_rng(seed, chain, replication)
    n_keep = cfg.n_retained
    Kp, p = problem.K * problem.p, problem.p
    out = dict(
        b=np.empty((n_keep, Kp)),
        Z=np.empty((n_keep, p), dtype=np.int8),
        theta=np.empty((n_keep, p)),
        mu=np.empty((n_keep, p)),
        sigma2=np.empty(n_keep),
        tau2=np.empty((n_keep, Kp)),
    )
    keep = set(cfg.retained_iterations().tolist())
    j = 0
    for it in range(2, cfg.n_iterations + 1):
        state = gibbs_step(state, problem, hp, gen)
        if it in keep:
            out["b"][j] = state.b
            out["Z"][j] = state.Z
            out["theta"][j] = state.theta
            out["mu"][j] = state.mu
            out["sigma2"][j] = state.sigma2
            out["tau2"][j] = state.tau2
            j += 1
    if cfg.n_iterations == 1 or 1 in keep:
        raise ValidationError("configuration retains the initial state")
    return out


def _safe_chain(args):
    try:
        return _run_one_chain(*args), None
    except Exception as exc:  # reported per chain by run_problem
        return None, exc


def run_problem(problem: FOSRProblem, hp: Hyperparameters, cfg: GibbsConfig, *, replication=0, threads=1):
    """Run ``cfg.n_chains`` independent chains on a prepared problem."""
    if cfg.init is not None:
        inits = tuple(cfg.init)
    else:
        inits = default_initial_states(problem.p, problem.K, hp, rngmod.init_rng(cfg.seed, replication), cfg.n_chains)
    for s in inits:
        if s.b.shape != (problem.K * problem.p,) or s.Z.shape != (problem.p,):
            raise ValidationError("initial state does not match problem dimensions")
        s.check()
    jobs = [(problem, hp, cfg, inits[c], (cfg.seed, c, replication)) for c in range(cfg.n_chains)]
    if threads > 1 and cfg.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(threads, cfg.n_chains)) as pool:
            results = list(pool.map(_safe_chain, jobs))
    else:
        results = [_safe_chain(j) for j in jobs]
    failures = {c: err for c, (_, err) in enumerate(results) if err is not None}
    if failures:
        raise ChainFailure(failures)
    outs = [r for r, _ in results]
    stack = {k: np.stack([o[k] for o in outs]) for k in outs[0]}
    return PosteriorDraws(
        b=stack["b"],
        Z=stack["Z"],
        theta=stack["theta"],
        mu=stack["mu"] if hp.mu_is_parameter else None,
        sigma2=stack["sigma2"],
        tau2=stack["tau2"],
        iterations=cfg.retained_iterations(),
        K=problem.K,
        p=problem.p,
        seed=cfg.seed,
        config=cfg.to_dict(),
        hyperparameters=hyperparameters_dict(hp),
    )


def run_chains(data: StandardizedDataset, basis: BasisSystem, hp: Hyperparameters, cfg: GibbsConfig, *, replication=0, threads=1):
    problem = FOSRProblem.from_standardized(data, basis)
    return run_problem(problem, hp, cfg, replication=replication, threads=threads)


def hyperparameters_dict(hp: Hyperparameters):
    d = asdict(hp)
    if isinstance(d["mu"], tuple):
        d["mu"] = list(d["mu"])
    return d
