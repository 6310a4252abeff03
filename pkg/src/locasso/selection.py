"""Coordinate selection by an l1-penalized local linear fit.

Two procedures share one pipeline: the plain one fits the responses as
given, the translated one first shifts every response by ``f_max + C h``
so that the constant term stays bounded away from zero.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .design import (Dataset, LocalizedDesign, ProblemConstants,
                     build_localized_design)
from .kernels import KernelSpec
from .lasso import LassoProblem, LassoSolution, solve

log = logging.getLogger(__name__)

PLAIN = "plain"
TRANSLATED = "translated"


class ComplianceError(ValueError):
    """Parameters violate the strict bandwidth / penalty rule."""


class SelectionNotConverged(RuntimeError):
    def __init__(self, outcome: "SelectionOutcome"):
        super().__init__(
            f"lasso did not converge: kkt residual {outcome.solution.kkt_residual:g} "
            f"after {outcome.solution.iterations} sweeps")
        self.outcome = outcome


def bandwidth_bound(constants: ProblemConstants) -> float:
    """``min(mu_m / (32 (d0 + 1) L_mu M_K), eta)``; infinite terms allowed."""
    c = constants
    first = math.inf if c.L_mu == 0 else c.mu_m / (32.0 * (c.d0 + 1) * c.L_mu * c.M_K)
    return min(first, c.eta)


def penalty_for(constants: ProblemConstants, h: float) -> float:
    """``8 sqrt(3 M_K mu_M) L h``."""
    c = constants
    return 8.0 * math.sqrt(3.0 * c.M_K * c.mu_M) * c.L * h


@dataclass(frozen=True)
class SelectionConfig:
    h: float
    lam: float
    procedure: str = TRANSLATED
    constants: Optional[ProblemConstants] = None
    zero_tol: float = 1e-10
    strict: bool = False
    max_iter: int = 100_000
    kkt_tol: float = 1e-8
    notes: tuple = ()

    def __post_init__(self):
        if self.procedure not in (PLAIN, TRANSLATED):
            raise ValueError(f"procedure must be 'plain' or 'translated', got {self.procedure!r}")
        if not self.h > 0:
            raise ValueError("bandwidth h must be positive")
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        if self.procedure == TRANSLATED and self.constants is None:
            raise ValueError("the translated procedure needs constants (f_max, C)")
        if self.strict:
            self._check_strict()

    def _check_strict(self):
        if self.constants is None:
            raise ComplianceError("strict mode needs problem constants")
        bound = bandwidth_bound(self.constants)
        if not self.h < bound:
            raise ComplianceError(
                f"bandwidth h={self.h:g} violates the strict bound "
                f"h < min(mu_m/(32 (d0+1) L_mu M_K), eta) = {bound:g}")
        lam = penalty_for(self.constants, self.h)
        if not math.isclose(self.lam, lam, rel_tol=1e-12, abs_tol=0.0):
            raise ComplianceError(
                f"strict mode requires lam = 8 sqrt(3 M_K mu_M) L h = {lam:.12g}, got {self.lam:.12g}")

    @property
    def compliant(self) -> bool:
        if self.constants is None:
            return False
        try:
            replace(self, strict=True)
        except ComplianceError:
            return False
        return True

    def to_dict(self) -> dict:
        return {
            "h": self.h, "lam": self.lam, "procedure": self.procedure,
            "constants": None if self.constants is None else self.constants.to_dict(),
            "zero_tol": self.zero_tol, "strict": self.strict,
            "compliant": self.compliant, "notes": list(self.notes),
        }


def choose_parameters(constants: ProblemConstants, h_fraction: float,
                      procedure: str = TRANSLATED, strict: bool = True) -> SelectionConfig:
    """Bandwidth ``h_fraction * bound`` and the matching penalty."""
    if not 0 < h_fraction <= 1:
        raise ValueError("h_fraction must lie in (0, 1]")
    if strict and h_fraction >= 1:
        raise ComplianceError("the bandwidth bound is strict: use h_fraction < 1")
    notes = []
    if constants.L_mu == 0:
        if math.isinf(constants.eta):
            raise ValueError("L_mu = 0 and eta = inf leave h unbounded; pass h explicitly")
        notes.append("L_mu = 0: bandwidth bounded by eta alone")
    bound = bandwidth_bound(constants)
    h = h_fraction * bound
    return SelectionConfig(h=h, lam=penalty_for(constants, h), procedure=procedure,
                           constants=constants, strict=strict and h_fraction < 1,
                           notes=tuple(notes))


def exploratory_constants(d: int, **kw) -> ProblemConstants:
    """Constants for non-strict use; ``d0`` defaults to ``d``."""
    if "d0" not in kw:
        warnings.warn("d0 not given; using d0 = d, which weakens the bandwidth bound",
                      stacklevel=2)
        kw["d0"] = d
    defaults = dict(L=1.0, beta=2.0, mu_m=1.0, mu_M=1.0, L_mu=0.0, eta=math.inf,
                    M_K=1.0, C=1.0, sigma=0.0, f_max=1.0)
    defaults.update(kw)
    return ProblemConstants(**defaults)


@dataclass
class SelectionOutcome:
    selected: tuple
    theta_bar: np.ndarray
    solution: LassoSolution = field(repr=False)
    config: SelectionConfig = field(repr=False)
    design: Optional[LocalizedDesign] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "selected": list(self.selected),
            "theta": [float(t) for t in self.theta_bar],
            "kkt_residual": self.solution.kkt_residual,
            "converged": self.solution.converged,
            "iterations": self.solution.iterations,
            "compliant": self.config.compliant,
            "procedure": self.config.procedure,
            "h": self.config.h,
            "lambda": self.config.lam,
        }


def translation(cfg: SelectionConfig) -> float:
    c = cfg.constants
    return c.f_max + c.C * cfg.h


def _run(data: Dataset, x, cfg: SelectionConfig, k: KernelSpec, shift: float,
         record_trace: bool = False) -> SelectionOutcome:
    if shift != 0.0:
        data = data.with_responses(data.Y + shift)
    ld = build_localized_design(data, x, cfg.h, k)
    problem = LassoProblem.from_design(ld, cfg.lam)
    sol = solve(problem, max_iter=cfg.max_iter, kkt_tol=cfg.kkt_tol,
                zero_tol=cfg.zero_tol, record_trace=record_trace)
    theta = sol.theta
    # the constant term (index 0) is never a selected coordinate
    selected = tuple(int(j) for j in range(1, len(theta)) if abs(theta[j]) > cfg.zero_tol)
    out = SelectionOutcome(selected, theta, sol, cfg, ld)
    if not sol.converged:
        raise SelectionNotConverged(out)
    return out


def select_plain(data: Dataset, x, cfg: SelectionConfig, k: KernelSpec,
                 record_trace: bool = False) -> SelectionOutcome:
    """Select on the untranslated responses.

    Recovery is only expected when ``|f(x)| > C h`` or ``f(x) = 0``; this
    cannot be checked from data.
    """
    if cfg.procedure != PLAIN:
        raise ValueError("config is not for the plain procedure")
    return _run(data, x, cfg, k, 0.0, record_trace)


def select_translated(data: Dataset, x, cfg: SelectionConfig, k: KernelSpec,
                      record_trace: bool = False) -> SelectionOutcome:
    if cfg.procedure != TRANSLATED:
        raise ValueError("config is not for the translated procedure")
    return _run(data, x, cfg, k, translation(cfg), record_trace)


def select(data: Dataset, x, cfg: SelectionConfig, k: KernelSpec,
           record_trace: bool = False) -> SelectionOutcome:
    fn = select_plain if cfg.procedure == PLAIN else select_translated
    return fn(data, x, cfg, k, record_trace)
