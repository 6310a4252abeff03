"""l1-penalized least squares ``|Z - A theta|^2 + 2 lam |theta|_1``.

``theta`` is a minimizer iff, with ``g = A^T (Z - A theta)``,

    g_j = lam sign(theta_j)   if theta_j != 0
    |g_j| <= lam              if theta_j == 0

Every coordinate, including the constant term, is penalized.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class LassoProblem:
    Z: np.ndarray
    A: np.ndarray
    lam: float

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[1] < 1:
            raise ValueError("A must be an n x p matrix with p >= 1")
        if A.shape[0] != Z.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows, Z has {Z.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Z))):
            raise ValueError("problem has non-finite entries")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lam must be a finite number >= 0")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def p(self) -> int:
        return self.A.shape[1]

    @classmethod
    def from_design(cls, ld, lam: float) -> "LassoProblem":
        ld.require_nonempty()
        rows = ld.active_rows
        return cls(ld.Z[rows], ld.A[rows], lam)

    def gram(self):
        G = self.A.T @ self.A
        return 0.5 * (G + G.T), self.A.T @ self.Z


def objective(theta, problem: LassoProblem) -> float:
    """Penalized objective evaluated from scratch."""
    r = problem.Z - problem.A @ theta
    return float(r @ r + 2.0 * problem.lam * np.abs(theta).sum())


@dataclass(frozen=True)
class KKTCheck:
    holds: bool
    residual: float
    per_coordinate: np.ndarray


def _kkt_violation(theta, g, lam):
    nz = theta != 0
    return np.where(nz, np.abs(g - lam * np.sign(theta)),
                    np.maximum(np.abs(g) - lam, 0.0))


def check_kkt(theta, problem: LassoProblem, tol: float) -> KKTCheck:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (problem.p,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({problem.p},)")
    g = problem.A.T @ (problem.Z - problem.A @ theta)
    v = _kkt_violation(theta, g, problem.lam)
    res = float(v.max())
    return KKTCheck(res <= tol, res, v)


@dataclass
class LassoSolution:
    theta: np.ndarray
    objective_value: float
    kkt_residual: float
    active_set: tuple
    iterations: int
    converged: bool
    fitted: np.ndarray = field(repr=False)
    trace: Optional[list] = field(default=None, repr=False)


class ObjectiveIncrease(RuntimeError):
    pass


def _soft(z, t):
    return np.sign(z) * max(abs(z) - t, 0.0)


def solve(problem: LassoProblem, max_iter: int = 100_000, kkt_tol: float = 1e-8,
          zero_tol: float = 1e-10, start=None, record_trace: bool = False) -> LassoSolution:
    """Cyclic coordinate descent with exact soft-threshold updates.

    After a sweep that leaves the support and signs unchanged, the
    stationarity equations restricted to that sign pattern are solved
    directly; the result is kept only if it respects the pattern and does
    not increase the objective.  Iteration stops when the optimality
    residual drops to ``kkt_tol``.
    """
    G, b = problem.gram()
    lam = problem.lam
    p = problem.p
    zz = float(problem.Z @ problem.Z)
    diag = np.diag(G).copy()
    theta = np.zeros(p) if start is None else np.array(start, dtype=float)

    def phi(t):
        return float(t @ G @ t - 2.0 * b @ t + zz + 2.0 * lam * np.abs(t).sum())

    cur = phi(theta)
    slack = 1e-12 * max(1.0, zz, abs(cur))
    trace = [] if record_trace else None
    g = b - G @ theta
    res = float(_kkt_violation(theta, g, lam).max())
    if trace is not None:
        trace.append((0, cur, res))
    prev_sign = np.sign(theta)
    it = 0
    while res > kkt_tol and it < max_iter:
        it += 1
        for j in range(p):
            if diag[j] <= 0.0:
                theta[j] = 0.0
                continue
            old = theta[j]
            # correlation of column j with the partial residual
            rj = b[j] - G[j] @ theta + diag[j] * old
            new = _soft(rj, lam) / diag[j]
            if new != old:
                theta[j] = new
        sign = np.sign(theta)
        if np.array_equal(sign, prev_sign) and np.any(sign != 0):
            theta = _polish(theta, sign, G, b, lam, phi)
        prev_sign = np.sign(theta)
        val = phi(theta)
        if val > cur + slack:
            raise ObjectiveIncrease(f"objective rose from {cur!r} to {val!r} in sweep {it}")
        cur = min(cur, val)
        g = b - G @ theta
        res = float(_kkt_violation(theta, g, lam).max())
        if trace is not None:
            trace.append((it, val, res))

    fitted = problem.A @ theta
    active = tuple(int(j) for j in np.flatnonzero(np.abs(theta) > zero_tol))
    return LassoSolution(theta, objective(theta, problem), res, active, it,
                         res <= kkt_tol, fitted, trace)


def _polish(theta, sign, G, b, lam, phi):
    S = np.flatnonzero(sign)
    rhs = b[S] - lam * sign[S]
    try:
        cand_S = np.linalg.solve(G[np.ix_(S, S)], rhs)
    except np.linalg.LinAlgError:
        return theta
    if not np.all(np.sign(cand_S) == sign[S]):
        return theta
    cand = np.zeros_like(theta)
    cand[S] = cand_S
    return cand if phi(cand) <= phi(theta) else theta


def brute_force_oracle(problem: LassoProblem, tol: float = 1e-9) -> np.ndarray:
    """Global minimizer by enumeration of all 3^p sign patterns (p <= 8)."""
    p = problem.p
    if p > 8:
        raise ValueError(f"brute force oracle limited to p <= 8, got {p}")
    G, b = problem.gram()
    lam = problem.lam
    scale = tol * (1.0 + np.abs(b).max() + lam)
    best, best_val = None, np.inf
    for pattern in itertools.product((-1.0, 0.0, 1.0), repeat=p):
        s = np.array(pattern)
        S = np.flatnonzero(s)
        theta = np.zeros(p)
        if len(S):
            GSS = G[np.ix_(S, S)]
            if np.linalg.matrix_rank(GSS) < len(S):
                continue
            tS = np.linalg.solve(GSS, b[S] - lam * s[S])
            if np.any(s[S] * tS < -scale):
                continue
            theta[S] = s[S] * np.maximum(s[S] * tS, 0.0)
        g = b - G @ theta
        off = np.flatnonzero(s == 0)
        if len(off) and np.any(np.abs(g[off]) > lam + scale):
            continue
        val = objective(theta, problem)
        if val < best_val:
            best, best_val = theta, val
    if best is None:
        raise RuntimeError("no feasible sign pattern found")
    return best
