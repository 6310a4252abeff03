"""Localized linear-model view of the pointwise problem.

Around a query point ``x`` the kernel-weighted least-squares criterion is
rewritten as an ordinary least-squares problem ``|Z - A theta|^2`` with

    alpha_i = sqrt(K((X_i - x) / h) / (n h^d))
    Z_i     = alpha_i Y_i
    A_i     = alpha_i (1, (X_i - x) / h)

Coordinates of the regression function are labelled 1..d throughout, so
that coordinate ``j`` corresponds to column ``j`` of ``A`` (column 0 is the
constant term).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import SELECTION, KernelSpec


class EmptyWindowError(ValueError):
    """No observation carries positive kernel weight."""


class NegativeKernelError(ValueError):
    """The selection kernel was negative at a design point."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        Y = np.array(self.Y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("X must be an n x d matrix")
        if X.shape[0] < 1:
            raise ValueError("dataset needs at least one observation")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset contains non-finite entries")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def with_responses(self, Y) -> "Dataset":
        return Dataset(self.X, Y)


@dataclass(frozen=True)
class ProblemConstants:
    """Regularity, design and noise constants assumed known to the user.

    ``strict=True`` additionally requires the derivative separation
    ``C >= 72 (mu_M / mu_m) L M_K sqrt(d0)``.
    """

    L: float
    beta: float
    mu_m: float
    mu_M: float
    L_mu: float
    eta: float
    M_K: float
    C: float
    d0: int
    sigma: float
    f_max: float
    strict: bool = False

    def __post_init__(self):
        checks = [
            (self.L > 0, "L must be > 0"),
            (self.beta > 1, "beta must be > 1"),
            (0 < self.mu_m <= self.mu_M, "need 0 < mu_m <= mu_M"),
            (self.mu_M >= 1, "mu_M must be >= 1"),
            (self.L_mu >= 0, "L_mu must be >= 0"),
            (self.eta > 0, "eta must be > 0"),
            (self.M_K >= 1, "M_K must be >= 1"),
            (self.C >= 0, "C must be >= 0"),
            (int(self.d0) == self.d0 and self.d0 >= 1, "d0 must be a positive integer"),
            (self.sigma >= 0, "sigma must be >= 0"),
            (self.f_max >= 0, "f_max must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        if self.strict and not self.separation_ok:
            raise ValueError(
                f"strict mode: C={self.C:g} is below the separation bound "
                f"72 (mu_M/mu_m) L M_K sqrt(d0) = {self.min_separation:g}")

    @property
    def min_separation(self) -> float:
        return 72.0 * (self.mu_M / self.mu_m) * self.L * self.M_K * math.sqrt(self.d0)

    @property
    def separation_ok(self) -> bool:
        return self.C >= self.min_separation

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "L", "beta", "mu_m", "mu_M", "L_mu", "eta", "M_K", "C", "d0",
            "sigma", "f_max", "strict")}

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemConstants":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown constants: {sorted(unknown)}")
        missing = known - set(d) - {"strict"}
        if missing:
            raise ValueError(f"missing constant(s): {', '.join(sorted(missing))}")
        vals = dict(d)
        for key in ("eta",):
            if isinstance(vals[key], str):
                vals[key] = float(vals[key])
        return cls(**vals)


@dataclass(frozen=True)
class TruthSpec:
    """Known regression function of a simulated problem."""

    f: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    gradient_at_x: np.ndarray
    f_at_x: float
    support: tuple
    constants: Optional[ProblemConstants] = None

    def __post_init__(self):
        g = np.asarray(self.gradient_at_x, dtype=float)
        off = [j for j in range(1, len(g) + 1) if j not in self.support]
        if off and np.any(g[np.array(off) - 1] != 0):
            raise ValueError("gradient must vanish outside the support")
        object.__setattr__(self, "gradient_at_x", g)
        object.__setattr__(self, "support", tuple(sorted(self.support)))

    def theta_star(self, h: float) -> np.ndarray:
        """``(f(x), h df/dx_1(x), ..., h df/dx_d(x))``."""
        return np.concatenate([[self.f_at_x], h * self.gradient_at_x])


@dataclass(frozen=True)
class LocalizedDesign:
    alpha: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    query_point: np.ndarray
    bandwidth: float
    kernel: KernelSpec = field(repr=False)
    active_rows: np.ndarray
    data: Optional[Dataset] = field(default=None, repr=False, compare=False)

    @property
    def is_empty(self) -> bool:
        return len(self.active_rows) == 0

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def d(self) -> int:
        return self.A.shape[1] - 1

    def require_nonempty(self):
        if self.is_empty:
            raise EmptyWindowError(
                f"no observation within the kernel window (h={self.bandwidth:g})")


def _as_point(x, d) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (d,):
        raise ValueError(f"query point has dimension {x.size}, data has {d}")
    return x


def build_localized_design(data: Dataset, x, h: float, k: KernelSpec) -> LocalizedDesign:
    if k.stage != SELECTION:
        raise ValueError("the localized design needs a selection-stage kernel")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    n, d = data.n, data.d
    if k.dimension != d:
        raise ValueError(f"kernel dimension {k.dimension} != data dimension {d}")
    x = _as_point(x, d)
    t = (data.X - x) / h
    kv = np.asarray(k(t), dtype=float)
    if np.any(kv < 0):
        i = int(np.flatnonzero(kv < 0)[0])
        raise NegativeKernelError(f"kernel is negative at row {i}; its square root is undefined")

    alpha = np.zeros(n)
    pos = kv > 0
    log_scale = math.log(n) + d * math.log(h)
    if abs(log_scale) < 600:
        alpha[pos] = np.sqrt(kv[pos] / math.exp(log_scale))
    else:
        # h^d under/overflows for large d
        alpha[pos] = np.exp(0.5 * (np.log(kv[pos]) - log_scale))

    U = np.column_stack([np.ones(n), np.where(pos[:, None], t, 0.0)])
    A = alpha[:, None] * U
    Z = alpha * data.Y
    for arr in (alpha, A, Z, x):
        arr.setflags(write=False)
    return LocalizedDesign(alpha, Z, A, x, float(h), k, np.flatnonzero(pos), data)


def psi_matrix(ld: LocalizedDesign) -> np.ndarray:
    """Gram matrix ``A^T A``, exactly symmetric."""
    A = ld.A[ld.active_rows]
    with np.errstate(over="raise", invalid="raise"):
        G = A.T @ A
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class Omega01Report:
    min_singular: float
    max_singular: float
    lower: float
    upper: float
    holds: bool


def omega01_indicator(ld: LocalizedDesign, constants: ProblemConstants) -> Omega01Report:
    """Whether the singular values of ``A`` lie in
    ``[(1/2) sqrt(mu_m / 2), 2 sqrt(3 mu_M / 2)]``."""
    lower = 0.5 * math.sqrt(constants.mu_m / 2.0)
    upper = 2.0 * math.sqrt(3.0 * constants.mu_M / 2.0)
    A = ld.A[ld.active_rows]
    if A.shape[0] == 0:
        s = np.zeros(ld.A.shape[1])
    else:
        s = np.linalg.svd(A, compute_uv=False)
        if len(s) < ld.A.shape[1]:
            s = np.concatenate([s, np.zeros(ld.A.shape[1] - len(s))])
    smin, smax = float(s.min()), float(s.max())
    return Omega01Report(smin, smax, lower, upper, bool(lower <= smin and smax <= upper))


def bias_vector(ld: LocalizedDesign, truth: TruthSpec) -> np.ndarray:
    """Localized Taylor remainder ``alpha_i f(X_i) - <A_i, theta*>``."""
    if ld.data is None:
        raise ValueError("design carries no dataset to evaluate f on")
    X = ld.data.X
    theta = truth.theta_star(ld.bandwidth)
    if theta.shape[0] != ld.A.shape[1]:
        raise ValueError("truth dimension does not match the design")
    fx = np.zeros(ld.n)
    act = ld.active_rows
    if len(act):
        fx[act] = truth.f(X[act])
    return ld.alpha * fx - ld.A @ theta


def support_mask(d: int, support: Sequence[int]) -> np.ndarray:
    m = np.zeros(d, dtype=bool)
    for j in support:
        if not 1 <= j <= d:
            raise ValueError(f"coordinate {j} outside 1..{d}")
        m[j - 1] = True
    return m
