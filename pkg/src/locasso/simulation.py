"""Synthetic problems and seeded Monte Carlo experiments.

Replicate ``r`` of grid point ``g`` draws from
``SeedSequence(master_seed, spawn_key=(g, r))``, so results do not depend
on execution order or on the number of workers.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .design import (Dataset, ProblemConstants, TruthSpec, build_localized_design,
                     omega01_indicator)
from .kernels import uniform_kernel
from .lpe import two_stage_estimate
from .selection import (SelectionConfig, SelectionNotConverged, bandwidth_bound,
                        penalty_for, select)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FunctionSpec:
    """Regression function, written in offsets ``v = t - x_query``.

    family ``affine``:      intercept + linear . v
    family ``polynomial``:  sum of coefficients[s] * prod v_j^{s_j}; keys are
                            exponent tuples of length d
    family ``smooth``:      ``name`` picks a library member
        ``quad_affine``:    intercept + linear . v + quadratic . v**2
        ``sine_affine``:    intercept + linear . sin(v) + quadratic . (1 - cos(v))
    """

    family: str
    intercept: float = 0.0
    linear: tuple = ()
    quadratic: tuple = ()
    coefficients: Optional[dict] = None
    name: Optional[str] = None

    def _vec(self, vals, d):
        v = np.zeros(d)
        v[:len(vals)] = vals
        return v

    def build(self, d: int, x_query: np.ndarray):
        """Return ``(f, f(x_query), gradient at x_query, support)``."""
        a = self._vec(self.linear, d)
        q = self._vec(self.quadratic, d)
        c0 = float(self.intercept)
        if self.family == "affine":
            if np.any(q):
                raise ValueError("affine family takes no quadratic terms")
            f = lambda X: c0 + (np.asarray(X) - x_query) @ a
            grad, dep = a.copy(), a != 0
        elif self.family == "polynomial":
            coeffs = {tuple(int(e) for e in s): float(c)
                      for s, c in (self.coefficients or {}).items()}
            for s in coeffs:
                if len(s) != d:
                    raise ValueError(f"exponent {s} does not have length {d}")
            items = list(coeffs.items())

            def f(X):
                V = np.asarray(X, dtype=float) - x_query
                out = np.zeros(len(V))
                for s, c in items:
                    out += c * np.prod(V ** np.array(s, dtype=float), axis=1)
                return out

            c0 = coeffs.get((0,) * d, 0.0)
            grad = np.zeros(d)
            dep = np.zeros(d, dtype=bool)
            for s, c in items:
                if c == 0:
                    continue
                dep |= np.array(s) > 0
                if sum(s) == 1:
                    grad[int(np.argmax(s))] += c
        elif self.family == "smooth":
            if self.name == "quad_affine":
                f = lambda X: c0 + (np.asarray(X) - x_query) @ a + \
                    ((np.asarray(X) - x_query) ** 2) @ q
            elif self.name == "sine_affine":
                f = lambda X: c0 + np.sin(np.asarray(X) - x_query) @ a + \
                    (1.0 - np.cos(np.asarray(X) - x_query)) @ q
            else:
                raise ValueError(f"unknown smooth function {self.name!r}")
            grad, dep = a.copy(), (a != 0) | (q != 0)
        else:
            raise ValueError(f"unknown function family {self.family!r}")
        support = tuple(int(j) + 1 for j in np.flatnonzero(dep))
        return f, c0, grad, support

    def to_dict(self) -> dict:
        out = {"family": self.family, "intercept": self.intercept,
               "linear": list(self.linear), "quadratic": list(self.quadratic)}
        if self.coefficients is not None:
            out["coefficients"] = {",".join(map(str, s)): c for s, c in self.coefficients.items()}
        if self.name is not None:
            out["name"] = self.name
        return out


@dataclass(frozen=True)
class GeneratorSpec:
    n: int
    d: int
    function: FunctionSpec
    sigma: float = 0.0
    seed: int = 0
    box: tuple = (-1.0, 1.0)
    x_query: Optional[tuple] = None
    support: Optional[tuple] = None

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        lo, hi = self.box
        if not lo < hi:
            raise ValueError("box needs lo < hi")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        xq = (0.0,) * self.d if self.x_query is None else tuple(float(v) for v in self.x_query)
        if len(xq) != self.d:
            raise ValueError(f"x_query has length {len(xq)}, expected {self.d}")
        if not all(lo < v < hi for v in xq):
            raise ValueError("x_query must lie inside the design box")
        object.__setattr__(self, "x_query", xq)
        _, _, _, dep = self.function.build(self.d, np.array(xq))
        if self.support is None:
            object.__setattr__(self, "support", dep)
        else:
            sup = tuple(sorted(int(j) for j in self.support))
            if not set(dep) <= set(sup):
                raise ValueError(f"function depends on {dep}, outside declared support {sup}")
            object.__setattr__(self, "support", sup)

    @property
    def d_star(self) -> int:
        return len(self.support)

    @property
    def density(self) -> float:
        lo, hi = self.box
        return (hi - lo) ** -self.d

    @property
    def eta(self) -> float:
        """Sup-norm distance from the query point to the box boundary."""
        lo, hi = self.box
        return min(min(v - lo, hi - v) for v in self.x_query)

    def design_constants(self, *, L: float, C: float, d0: Optional[int] = None,
                         M_K: Optional[float] = None, f_max: float = 1.0,
                         beta: float = 2.0, strict: bool = False) -> ProblemConstants:
        """Constants implied by the uniform box design plus user-given
        regularity constants."""
        mu = self.density
        return ProblemConstants(
            L=L, beta=beta, mu_m=mu, mu_M=max(1.0, mu), L_mu=0.0, eta=self.eta,
            M_K=uniform_kernel(self.d).M_K if M_K is None else M_K, C=C,
            d0=self.d_star if d0 is None else d0, sigma=self.sigma, f_max=f_max,
            strict=strict)

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "function": self.function.to_dict(),
                "sigma": self.sigma, "seed": self.seed, "box": list(self.box),
                "x_query": list(self.x_query), "support": list(self.support)}


def generate(spec: GeneratorSpec, seed=None):
    """Draw ``(Dataset, TruthSpec)``; deterministic in the seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else \
        np.random.SeedSequence(spec.seed if seed is None else seed)
    rng = np.random.default_rng(ss)
    xq = np.array(spec.x_query)
    f, fx, grad, _ = spec.function.build(spec.d, xq)
    lo, hi = spec.box
    X = rng.uniform(lo, hi, size=(spec.n, spec.d))
    noise = rng.standard_normal(spec.n) * spec.sigma
    Y = f(X) + noise
    return Dataset(X, Y), TruthSpec(f, grad, float(fx), spec.support)


def child_seed(master: int, grid_index: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(grid_index, replicate))


def _map(fn, items, jobs):
    if jobs is None or jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# selection experiments

@dataclass
class ExperimentSummary:
    kind: str
    records: list = field(repr=False)
    recovery_rate: Optional[float] = None
    misses: Optional[list] = None
    false_includes: Optional[list] = None
    mse_at_x: Optional[float] = None
    per_n: Optional[list] = None
    rate_slope: Optional[float] = None
    rate_slope_stderr: Optional[float] = None
    excluded_n: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "replicates": len(self.records)}
        for key in ("recovery_rate", "misses", "false_includes", "mse_at_x",
                    "per_n", "rate_slope", "rate_slope_stderr", "excluded_n"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out

    def to_csv(self) -> str:
        if not self.records:
            return ""
        buf = io.StringIO()
        cols = list(self.records[0])
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for rec in self.records:
            w.writerow({k: _fmt(v) for k, v in rec.items()})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return v


class ReplicateError(RuntimeError):
    def __init__(self, grid_index, replicate, seed, cause):
        super().__init__(f"replicate {replicate} (grid point {grid_index}, "
                         f"seed {seed}) failed: {cause}")
        self.grid_index, self.replicate, self.seed = grid_index, replicate, seed


def _selection_replicate(spec, cfg, kernel, grid_index, r, master):
    ss = child_seed(master, grid_index, r)
    data, truth = generate(spec, ss)
    try:
        out = select(data, spec.x_query, cfg, kernel)
        converged = True
    except SelectionNotConverged as exc:
        out, converged = exc.outcome, False
    except Exception as exc:  # noqa: BLE001 - re-raised with the seed attached
        raise ReplicateError(grid_index, r, master, exc) from exc
    sel, J = set(out.selected), set(truth.support)
    rec = {
        "n": spec.n, "replicate": r, "selected": tuple(sorted(sel)),
        "exact": int(sel == J), "n_miss": len(J - sel), "n_false": len(sel - J),
        "kkt_residual": float(out.solution.kkt_residual), "converged": int(converged),
        "n_active_rows": int(len(out.design.active_rows)),
    }
    if cfg.constants is not None:
        rec["omega01"] = int(omega01_indicator(out.design, cfg.constants).holds)
    return rec


def run_selection_experiment(spec: GeneratorSpec, sel_cfg: SelectionConfig,
                             replicates: int, kernel=None, jobs: int = 1,
                             grid_index: int = 0) -> ExperimentSummary:
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    kernel = kernel or uniform_kernel(spec.d)
    recs = _map(lambda r: _selection_replicate(spec, sel_cfg, kernel, grid_index, r, spec.seed),
                range(replicates), jobs)
    return _selection_summary(recs, spec)


def _selection_summary(recs, spec) -> ExperimentSummary:
    d = spec.d
    J = set(spec.support)
    misses = [0] * d
    false = [0] * d
    for rec in recs:
        sel = set(rec["selected"])
        for j in J - sel:
            misses[j - 1] += 1
        for j in sel - J:
            false[j - 1] += 1
    rate = sum(r["exact"] for r in recs) / len(recs)
    return ExperimentSummary("selection", recs, recovery_rate=rate,
                             misses=misses, false_includes=false)


def run_selection_grid(spec: GeneratorSpec, sel_cfg: SelectionConfig,
                       n_grid: Sequence[int], replicates: int, kernel=None,
                       jobs: int = 1) -> ExperimentSummary:
    """Selection experiment repeated over sample sizes."""
    recs, per_n = [], []
    for g, n in enumerate(n_grid):
        s = run_selection_experiment(replace(spec, n=int(n)), sel_cfg, replicates,
                                     kernel, jobs, grid_index=g)
        recs.extend(s.records)
        per_n.append({"n": int(n), "recovery_rate": s.recovery_rate,
                      "misses": s.misses, "false_includes": s.false_includes})
    rate = sum(r["exact"] for r in recs) / len(recs)
    return ExperimentSummary("selection", recs, recovery_rate=rate, per_n=per_n)


# ---------------------------------------------------------------------------
# rate experiments

def fit_rate(ns, mses):
    """OLS slope of log(mse) on log(n), dropping grid points with mse == 0."""
    ns = np.asarray(ns, dtype=float)
    mses = np.asarray(mses, dtype=float)
    keep = mses > 0
    excluded = [int(n) for n in ns[~keep]]
    if excluded:
        warnings.warn(f"mse is exactly 0 at n={excluded}; excluded from the rate fit",
                      RuntimeWarning, stacklevel=2)
    if keep.sum() < 3:
        raise ValueError("fewer than 3 grid points with positive mse")
    res = stats.linregress(np.log(ns[keep]), np.log(mses[keep]))
    return float(res.slope), float(res.stderr), excluded


def _rate_replicate(spec, cfg, beta, f_max, kernel_star, grid_index, r, master):
    ss = child_seed(master, grid_index, r)
    data, truth = generate(spec, ss)
    try:
        res = two_stage_estimate(data, spec.x_query, cfg, beta, f_max,
                                 kernel=uniform_kernel(spec.d), kernel_star=kernel_star)
    except SelectionNotConverged as exc:
        raise ReplicateError(grid_index, r, master, exc) from exc
    err = res.fhat - truth.f_at_x
    return {
        "n": spec.n, "replicate": r, "selected": res.selected,
        "exact": int(set(res.selected) == set(truth.support)),
        "fhat": float(res.fhat), "f_true": float(truth.f_at_x), "sq_err": float(err * err),
        "unique": int(res.fit.unique), "hstar": float(res.hstar),
    }


def run_rate_experiment(spec: GeneratorSpec, n_grid: Sequence[int], replicates: int,
                        sel_cfg: SelectionConfig, beta: float, f_max: float,
                        kernel_star: str = "gaussian_trunc", jobs: int = 1,
                        mse_stub: Optional[Callable[[int], float]] = None) -> ExperimentSummary:
    """Two-stage estimator over a grid of sample sizes, with the log-log
    slope of the pointwise mean squared error.

    ``mse_stub`` replaces the simulation by a function ``n -> mse``.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing with at least 3 entries")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    recs, per_n = [], []
    for g, n in enumerate(n_grid):
        if mse_stub is not None:
            per_n.append({"n": n, "mse_at_x": float(mse_stub(n))})
            continue
        s = replace(spec, n=n)
        rr = _map(lambda r: _rate_replicate(s, sel_cfg, beta, f_max, kernel_star, g, r, spec.seed),
                  range(replicates), jobs)
        recs.extend(rr)
        per_n.append({
            "n": n,
            "mse_at_x": float(np.mean([r["sq_err"] for r in rr])),
            "recovery_rate": sum(r["exact"] for r in rr) / len(rr),
        })
        log.info("rate experiment: n=%d mse=%.4g", n, per_n[-1]["mse_at_x"])
    slope, se, excluded = fit_rate([p["n"] for p in per_n], [p["mse_at_x"] for p in per_n])
    mse_all = float(np.mean([r["sq_err"] for r in recs])) if recs else None
    return ExperimentSummary("rate", recs, mse_at_x=mse_all, per_n=per_n,
                             rate_slope=slope, rate_slope_stderr=se, excluded_n=excluded)


# ---------------------------------------------------------------------------
# compliance

def compliance_report(spec: GeneratorSpec, sel_cfg: SelectionConfig) -> dict:
    """Pass/fail for the dimension regimes, the bandwidth/penalty rule and
    the derivative separation."""
    n, d, h = spec.n, spec.d, sel_cfg.h
    out = {}
    if 0 < h < 1:
        ratio = math.log(n) / -math.log(h)
        out["selection_regime"] = {"lhs": d + 2, "rhs": ratio, "passed": d + 2 < ratio}
        out["estimation_regime"] = {"lhs": d + 2, "rhs": ratio / 2.0,
                                    "passed": d + 2 <= ratio / 2.0}
    else:
        for key in ("selection_regime", "estimation_regime"):
            out[key] = {"lhs": d + 2, "rhs": None, "passed": False,
                        "reason": "requires 0 < h < 1"}
    c = sel_cfg.constants
    if c is None:
        out["bandwidth_rule"] = {"passed": False, "reason": "no constants"}
        out["penalty_rule"] = {"passed": False, "reason": "no constants"}
        out["separation"] = {"passed": False, "reason": "no constants"}
        return out
    bound = bandwidth_bound(c)
    out["bandwidth_rule"] = {"h": h, "bound": bound, "passed": 0 < h < bound}
    lam = penalty_for(c, h)
    out["penalty_rule"] = {"lam": sel_cfg.lam, "required": lam,
                           "passed": math.isclose(sel_cfg.lam, lam, rel_tol=1e-12)}
    _, _, grad, _ = spec.function.build(d, np.array(spec.x_query))
    J = np.array(spec.support, dtype=int) - 1
    min_grad = float(np.min(np.abs(grad[J]))) if len(J) else math.inf
    out["separation"] = {
        "min_abs_gradient": min_grad, "C": c.C, "C_required": c.min_separation,
        "passed": bool(min_grad >= c.C and c.separation_ok),
    }
    return out
