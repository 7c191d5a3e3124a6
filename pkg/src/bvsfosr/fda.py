"""Functional data containers, B-spline bases and the latent-gated design.

Coefficient vectors are laid out block-wise by covariate: entries
``l*K:(l+1)*K`` hold the K basis coefficients of covariate ``l``.  The same
layout is used for the design columns and for the shrinkage variances.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstantCovariate,
    DomainViolation,
    GridMismatch,
    InsufficientBasisCount,
    NumericalInput,
    ValidationError,
)

# relative slack when testing grid points against the basis domain
_DOMAIN_RTOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FunctionalDataset:
    """m discretized response curves plus the p x m scalar covariate matrix.

    ``curves[i]`` and ``grids[i]`` hold y_i(t_ij) and t_ij for curve i;
    ``covariates[l, i]`` is x_li.
    """

    curves: tuple
    grids: tuple
    covariates: np.ndarray
    domain: tuple | None = None
    curve_labels: tuple | None = None
    covariate_labels: tuple | None = None

    def __post_init__(self):
        curves = tuple(_frozen(np.ravel(c)) for c in self.curves)
        grids = tuple(_frozen(np.ravel(g)) for g in self.grids)
        X = np.array(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2:
            raise ValidationError("covariates must be a p x m matrix")
        X.setflags(write=False)
        m = len(curves)
        if m == 0:
            raise ValidationError("dataset needs at least one curve")
        if len(grids) != m:
            raise ValidationError(f"{m} curves but {len(grids)} grids")
        if X.shape[1] != m:
            raise ValidationError(f"covariates have {X.shape[1]} columns, expected m={m}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("covariates must be finite")
        for i, (y, t) in enumerate(zip(curves, grids)):
            if y.shape != t.shape:
                raise ValidationError(f"curve {i}: {y.size} values on {t.size} grid points")
            if y.size == 0:
                raise ValidationError(f"curve {i} is empty")
            if not np.all(np.isfinite(y)) or not np.all(np.isfinite(t)):
                raise ValidationError(f"curve {i} has non-finite entries")
            if np.any(np.diff(t) <= 0):
                raise ValidationError(f"grid of curve {i} is not strictly increasing")
        if self.domain is None:
            lo = min(float(t[0]) for t in grids)
            hi = max(float(t[-1]) for t in grids)
            domain = (lo, hi)
        else:
            domain = (float(self.domain[0]), float(self.domain[1]))
            for i, t in enumerate(grids):
                if t[0] < domain[0] or t[-1] > domain[1]:
                    raise DomainViolation(f"grid of curve {i} leaves domain {domain}")
        if self.curve_labels is not None and len(self.curve_labels) != m:
            raise ValidationError("curve_labels length differs from m")
        if self.covariate_labels is not None and len(self.covariate_labels) != X.shape[0]:
            raise ValidationError("covariate_labels length differs from p")
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "domain", domain)
        if self.curve_labels is not None:
            object.__setattr__(self, "curve_labels", tuple(self.curve_labels))
        if self.covariate_labels is not None:
            object.__setattr__(self, "covariate_labels", tuple(self.covariate_labels))

    @property
    def m(self):
        return len(self.curves)

    @property
    def p(self):
        return self.covariates.shape[0]

    @property
    def n_obs(self):
        return sum(y.size for y in self.curves)

    @property
    def shared_grid(self):
        g0 = self.grids[0]
        return all(g is g0 or np.array_equal(g, g0) for g in self.grids[1:])

    def stacked(self):
        """Responses concatenated curve after curve (the y_.. vector)."""
        return np.concatenate(self.curves)


@dataclass(frozen=True)
class StandardizedDataset:
    base: FunctionalDataset
    covariate_means: np.ndarray
    covariate_sds: np.ndarray
    intercept_estimate: np.ndarray
    centered_curves: tuple

    @property
    def grid(self):
        return self.base.grids[0]

    def centered_stacked(self):
        return np.concatenate(self.centered_curves)


def standardize(data: FunctionalDataset) -> StandardizedDataset:
    """Standardize covariates and remove the pointwise functional mean.

    The intercept is the pointwise mean of the curves, so every curve must
    share one evaluation grid.
    """
    X = data.covariates
    if data.m < 2:
        raise ValidationError("standardization needs at least two curves")
    means = X.mean(axis=1)
    sds = X.std(axis=1, ddof=1)
    for l, sd in enumerate(sds):
        if not sd > 0:
            name = data.covariate_labels[l] if data.covariate_labels else None
            raise ConstantCovariate(l, name)
    Xs = (X - means[:, None]) / sds[:, None]
    if not data.shared_grid:
        raise GridMismatch("pointwise functional mean requires all curves on one grid")
    intercept = np.mean(np.vstack(data.curves), axis=0)
    centered = tuple(_frozen(y - intercept) for y in data.curves)
    base = FunctionalDataset(
        curves=data.curves,
        grids=data.grids,
        covariates=Xs,
        domain=data.domain,
        curve_labels=data.curve_labels,
        covariate_labels=data.covariate_labels,
    )
    return StandardizedDataset(base, _frozen(means), _frozen(sds), _frozen(intercept), centered)


@dataclass(frozen=True)
class BasisSystem:
    K: int
    order: int
    knots: np.ndarray
    domain: tuple

    @property
    def degree(self):
        return self.order - 1

    def __call__(self, t):
        return eval_basis(self, t)


def build_bspline_basis(K: int, order: int = 4, domain=(0.0, 1.0)) -> BasisSystem:
    """Clamped B-spline basis with ``K - order`` equally spaced interior knots."""
    K, order = int(K), int(order)
    if order < 1:
        raise InsufficientBasisCount(f"order must be >= 1, got {order}")
    if K < order:
        raise InsufficientBasisCount(f"K={K} basis functions cannot carry order {order}")
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ValidationError(f"degenerate domain [{lo}, {hi}]")
    n_interior = K - order
    interior = lo + (hi - lo) * np.arange(1, n_interior + 1) / (n_interior + 1)
    knots = np.concatenate([np.full(order, lo), interior, np.full(order, hi)])
    return BasisSystem(K, order, _frozen(knots), (lo, hi))


def eval_basis(basis: BasisSystem, grid) -> np.ndarray:
    """Evaluate all K basis functions at ``grid``; returns an n x K matrix.

    Uses the Cox-de Boor triangle over the ``order`` functions that are
    nonzero on each knot span.  Spans are half-open except the last one,
    which is closed so that the right endpoint gets a full row.
    """
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    lo, hi = basis.domain
    slack = _DOMAIN_RTOL * max(1.0, abs(lo), abs(hi))
    bad = (t < lo - slack) | (t > hi + slack) | ~np.isfinite(t)
    if np.any(bad):
        raise DomainViolation(f"point {t[bad][0]!r} outside basis domain [{lo}, {hi}]")
    t = np.clip(t, lo, hi)
    U = basis.knots
    p = basis.degree
    K = basis.K
    # knot span: U[i] <= t < U[i+1], last nonempty span for t == hi
    span = np.searchsorted(U, t, side="right") - 1
    span = np.clip(span, p, K - 1)

    n = t.size
    N = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = t - U[span + 1 - j]
        right[:, j] = U[span + j] - t
        saved = np.zeros(n)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    out = np.zeros((n, K))
    cols = span[:, None] - p + np.arange(p + 1)[None, :]
    out[np.arange(n)[:, None], cols] = N
    return out


def ungated_design(covariates, basis_mats, shared=False):
    """Design with every selector switched on: row (i, j) is kron(x_.i, B_ij).

    ``covariates`` is p x m, ``basis_mats`` a sequence of n_i x K matrices.
    With ``shared=True`` all curves use ``basis_mats[0]`` and the design is
    the Kronecker product X' (x) B.
    """
    X = np.asarray(covariates, dtype=float)
    p, m = X.shape
    if shared:
        return np.kron(X.T, basis_mats[0])
    rows = []
    for i in range(m):
        Bi = basis_mats[i]
        rows.append((X[:, i][None, :, None] * Bi[:, None, :]).reshape(Bi.shape[0], -1))
    return np.vstack(rows)


@dataclass(frozen=True)
class DesignStructures:
    """Gated design for one selector vector.

    ``B`` holds one basis matrix per curve (the same array object for every
    curve when the grid is shared).  ``O_full`` stacks the rows O_.ij and
    ``Q = diag(eta2) + O_full' O_full``.
    """

    B: tuple
    O_full: np.ndarray
    Q: np.ndarray
    K: int
    p: int
    curve_index: np.ndarray = field(repr=False)

    @property
    def O_rows(self):
        return self.O_full

    def fitted(self, b):
        """g_i(t_ij) for every observation, stacked: O_full @ b."""
        return self.O_full @ np.asarray(b, dtype=float)


def basis_matrices(data: FunctionalDataset, basis: BasisSystem):
    if data.shared_grid:
        B = eval_basis(basis, data.grids[0])
        B.setflags(write=False)
        return (B,) * data.m, True
    mats = []
    for g in data.grids:
        Bi = eval_basis(basis, g)
        Bi.setflags(write=False)
        mats.append(Bi)
    return tuple(mats), False


def selector_mask(Z, K):
    """Column mask of length Kp repeating each Z_l K times."""
    return np.repeat(np.asarray(Z, dtype=float), K)


def assemble_design(std: StandardizedDataset, basis: BasisSystem, Z, eta2) -> DesignStructures:
    data = std.base if isinstance(std, StandardizedDataset) else std
    p, K = data.p, basis.K
    Z = np.asarray(Z)
    if Z.shape != (p,) or not np.all((Z == 0) | (Z == 1)):
        raise ValidationError(f"Z must be a binary vector of length p={p}")
    eta2 = np.asarray(eta2, dtype=float)
    if eta2.shape != (K * p,):
        raise ValidationError(f"eta2 must have length Kp={K * p}")
    if not np.all(np.isfinite(eta2)):
        raise NumericalInput("eta2 has non-finite entries")
    if np.any(eta2 <= 0):
        raise NumericalInput("eta2 must be strictly positive")
    mats, shared = basis_matrices(data, basis)
    D = ungated_design(data.covariates, mats, shared=shared)
    O = D * selector_mask(Z, K)[None, :]
    Q = O.T @ O
    Q = 0.5 * (Q + Q.T)
    Q[np.diag_indices_from(Q)] += eta2
    idx = np.repeat(np.arange(data.m), [y.size for y in data.curves])
    for a in (O, Q, idx):
        a.setflags(write=False)
    return DesignStructures(mats, O, Q, K, p, idx)
