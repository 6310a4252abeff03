"""Local polynomial estimation on a selected subset of coordinates."""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .design import Dataset, _as_point
from .kernels import ESTIMATION, KernelSpec, get_kernel, uniform_kernel
from .selection import SelectionConfig, SelectionOutcome, select_translated

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


def degree_for(beta: float) -> int:
    """Largest integer strictly smaller than ``beta``."""
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    return int(math.ceil(beta)) - 1


def multi_indices(nvars: int, degree: int) -> list:
    """Exponent tuples with total degree <= ``degree``, graded then
    lexicographically decreasing: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2)."""
    out = []
    for total in range(degree + 1):
        block = [s for s in itertools.product(range(total + 1), repeat=nvars)
                 if sum(s) == total]
        out.extend(sorted(block, reverse=True))
    return out


def monomials(V: np.ndarray, indices: Sequence[tuple]) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    cols = [np.prod(V ** np.array(s, dtype=float), axis=1) if len(s) else np.ones(len(V))
            for s in indices]
    return np.column_stack(cols) if cols else np.empty((len(V), 0))


def default_bandwidth(n: int, beta: float, dhat: int) -> float:
    return float(n) ** (-1.0 / (2.0 * beta + dhat))


@dataclass(frozen=True)
class LpeConfig:
    beta: float
    selected: tuple
    f_max: float
    kernel_star: Optional[KernelSpec] = None
    bandwidth_star: Optional[float] = None

    def __post_init__(self):
        degree_for(self.beta)
        sel = tuple(int(j) for j in self.selected)
        if len(set(sel)) != len(sel):
            raise ValueError("selected coordinates must be distinct")
        object.__setattr__(self, "selected", sel)
        if not self.f_max > 0:
            raise ValueError("f_max must be positive")
        k = self.kernel_star
        if k is None:
            k = get_kernel("gaussian_trunc", len(sel))
            object.__setattr__(self, "kernel_star", k)
        if k.stage != ESTIMATION:
            raise ValueError("kernel_star must be an estimation-stage kernel")
        if k.dimension != len(sel):
            raise ValueError(f"kernel_star has dimension {k.dimension}, "
                             f"{len(sel)} coordinates selected")
        if self.bandwidth_star is not None and not self.bandwidth_star > 0:
            raise ValueError("bandwidth_star must be positive")

    @property
    def degree(self) -> int:
        return degree_for(self.beta)


@dataclass
class PolyFit:
    coefficients: dict
    unique: bool
    value_at_zero: float
    bandwidth: float = math.nan
    n_active: int = 0
    condition: float = math.inf


def fit_local_polynomial(data: Dataset, x, cfg: LpeConfig) -> PolyFit:
    """Kernel-weighted least-squares polynomial of degree ``floor(beta)``
    in the offsets ``X_i - x`` of the selected coordinates.

    The fit is declared non-unique, and returned as the zero polynomial,
    when the weighted normal matrix has condition number above 1e12.
    """
    x = _as_point(x, data.d)
    sel = np.array(cfg.selected, dtype=int)
    if np.any((sel < 1) | (sel > data.d)):
        raise ValueError(f"selected coordinates must lie in 1..{data.d}")
    dhat = len(sel)
    h = cfg.bandwidth_star or default_bandwidth(data.n, cfg.beta, dhat)
    idx = multi_indices(dhat, cfg.degree)
    V = (data.X[:, sel - 1] - x[sel - 1]) if dhat else np.empty((data.n, 0))
    w = np.asarray(cfg.kernel_star(V / h), dtype=float)
    act = np.flatnonzero(w > 0)
    zero = {s: 0.0 for s in idx}
    if len(act) == 0:
        warnings.warn("no observation has positive weight under the estimation kernel",
                      RuntimeWarning, stacklevel=2)
        return PolyFit(zero, False, 0.0, h, 0)

    # basis in the rescaled offsets V / h keeps the conditioning test
    # independent of the bandwidth
    B = monomials(V[act] / h, idx)
    sw = np.sqrt(w[act])
    WB = sw[:, None] * B
    N = WB.T @ WB
    cond = np.linalg.cond(N) if N.size else math.inf
    if not np.isfinite(cond) or cond > COND_LIMIT:
        return PolyFit(zero, False, 0.0, h, len(act), float(cond))
    Q, R = np.linalg.qr(WB)
    coef = linalg.solve_triangular(R, Q.T @ (sw * data.Y[act]))
    scale = np.array([h ** -sum(s) for s in idx])
    coeffs = {s: float(c) for s, c in zip(idx, coef * scale)}
    return PolyFit(coeffs, True, coeffs[idx[0]], h, len(act), float(cond))


def estimate_f(fit: PolyFit, f_max: float) -> float:
    """Value at the query point clipped to ``[-f_max, f_max]``; 0 for
    non-unique fits."""
    if not fit.unique:
        return 0.0
    return float(min(max(fit.value_at_zero, -f_max), f_max))


@dataclass
class TwoStageResult:
    fhat: float
    selected: tuple
    fit: PolyFit = field(repr=False)
    selection: Optional[SelectionOutcome] = field(default=None, repr=False)

    @property
    def hstar(self) -> float:
        return self.fit.bandwidth

    def to_dict(self) -> dict:
        out = {"fhat": self.fhat, "selected": list(self.selected),
               "unique": self.fit.unique, "hstar": self.hstar}
        if self.selection is not None:
            out["selection"] = self.selection.to_dict()
        return out


def two_stage_estimate(data: Dataset, x, sel_cfg: SelectionConfig, beta: float,
                       f_max: float, kernel=None, kernel_star: str = "gaussian_trunc",
                       bandwidth_star: Optional[float] = None) -> TwoStageResult:
    """Select with the translated procedure, then fit on the selection."""
    k = kernel or uniform_kernel(data.d)
    outcome = select_translated(data, x, sel_cfg, k)
    sel = outcome.selected
    cfg = LpeConfig(beta=beta, selected=sel, f_max=f_max,
                    kernel_star=get_kernel(kernel_star, len(sel)),
                    bandwidth_star=bandwidth_star)
    fit = fit_local_polynomial(data, x, cfg)
    fhat = estimate_f(fit, f_max)
    log.debug("two-stage: selected=%s hstar=%.4g fhat=%.6g", sel, fit.bandwidth, fhat)
    return TwoStageResult(fhat, sel, fit, outcome)
