"""Selection and estimation kernels, plus numerical validators of their
integral properties.

Selection kernels live on the unit sup-norm ball, are even, and have a
diagonal moment matrix.  Estimation kernels are used by the second-stage
local polynomial fit and only need unit mass, a positive floor near the
origin and finite weighted L2 integrals.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

SELECTION = "selection"
ESTIMATION = "estimation"

MAX_QUADRATURE_DIM = 6
MAX_QUADRATURE_NODES = 4_000_000


class QuadratureError(RuntimeError):
    """Tensor quadrature did not stabilise within the node budget."""


class ValidationUnavailable(RuntimeError):
    """Numerical validation is not offered in this dimension."""


@dataclass(frozen=True)
class KernelSpec:
    """An immutable multivariate kernel.

    ``evaluate`` maps an array of shape ``(..., dimension)`` to ``(...)``.
    ``profile`` is set for radial kernels, ``K(u) = profile(|u|_2)``, and is
    used by the estimation-kernel validator.
    """

    name: str
    dimension: int
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    support_radius: float
    stage: str
    M_K: Optional[float] = None
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.stage not in (SELECTION, ESTIMATION):
            raise ValueError(f"unknown kernel stage {self.stage!r}")
        if self.dimension < 0 or (self.stage == SELECTION and self.dimension < 1):
            raise ValueError(f"invalid kernel dimension {self.dimension}")
        if not self.support_radius > 0:
            raise ValueError("support_radius must be positive")

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1:] != (self.dimension,):
            raise ValueError(
                f"kernel {self.name!r} expects points of dimension "
                f"{self.dimension}, got shape {u.shape}")
        return self.evaluate(u)


# ---------------------------------------------------------------------------
# selection kernels

def _uniform_bounds(d: int) -> dict:
    """Closed forms of the seven quantities the bound M_K must dominate."""
    m = [1.0 / (k + 1) for k in range(5)]  # moments of U(0, 1)
    # E[(|u_1| + ... + |u_d|)^4] for u uniform on [-1, 1]^d
    es4 = (d * m[4]
           + 4 * d * (d - 1) * m[3] * m[1]
           + 3 * d * (d - 1) * m[2] ** 2
           + 6 * d * (d - 1) * (d - 2) * m[2] * m[1] ** 2
           + d * (d - 1) * (d - 2) * (d - 3) * m[1] ** 4)
    w = 2.0 ** -d
    return {
        "max_abs_K": w,
        "max_K_sq": w * w,
        "max_K_l1_sq": w * d * d,
        "max_K_l2_sq": w * d,
        "int_K_sq_1_plus_l2_sq": w * (1.0 + d / 3.0),
        "int_K_sq_l1_4": w * es4,
        # (i, j) = (0, 0) dominates the other U_i U_j products
        "int_K_sq_UiUj_sq": w,
    }


def uniform_kernel(d: int) -> KernelSpec:
    """``K(u) = 2^-d 1{|u|_inf <= 1}``."""
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError(f"invalid dimension {d!r}: need an integer >= 1")
    d = int(d)
    height = 2.0 ** -d

    def evaluate(u):
        inside = np.max(np.abs(u), axis=-1) <= 1.0
        return np.where(inside, height, 0.0)

    M_K = max(1.0, *_uniform_bounds(d).values())
    return KernelSpec("uniform", d, evaluate, 1.0, SELECTION, M_K=M_K)


# ---------------------------------------------------------------------------
# estimation kernels

def _sphere_area(d: int) -> float:
    # surface area of the unit sphere in R^d
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _radial_kernel(name, d, profile, radius) -> KernelSpec:
    if d == 0:
        return KernelSpec(name, 0, lambda u: np.ones(np.shape(u)[:-1]),
                          math.inf, ESTIMATION,
                          profile=lambda r: np.ones_like(np.asarray(r, float)))

    def evaluate(u):
        return profile(np.linalg.norm(u, axis=-1))

    return KernelSpec(name, d, evaluate, radius, ESTIMATION, profile=profile)


def gaussian_trunc_kernel(d: int, radius: float = 10.0) -> KernelSpec:
    """Standard Gaussian density in R^d set to zero outside the l2 ball of
    the given radius (not renormalised)."""
    c = (2.0 * math.pi) ** (-d / 2.0)

    def profile(r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= radius, c * np.exp(-0.5 * r * r), 0.0)

    # the l2 ball of radius R sits inside the sup-norm ball of radius R
    return _radial_kernel("gaussian_trunc", d, profile, radius)


def ball_uniform_kernel(d: int) -> KernelSpec:
    """Constant ``1 / vol(B_2)`` on the closed unit l2 ball."""
    vol = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
    height = 1.0 / vol

    def profile(r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= 1.0, height, 0.0)

    return _radial_kernel("ball_uniform", d, profile, 1.0)


SELECTION_KERNELS = {"uniform": uniform_kernel}
ESTIMATION_KERNELS = {
    "gaussian_trunc": gaussian_trunc_kernel,
    "ball_uniform": ball_uniform_kernel,
}


def get_kernel(name: str, d: int) -> KernelSpec:
    if name in SELECTION_KERNELS:
        return SELECTION_KERNELS[name](d)
    if name in ESTIMATION_KERNELS:
        return ESTIMATION_KERNELS[name](d)
    known = sorted(SELECTION_KERNELS) + sorted(ESTIMATION_KERNELS)
    raise ValueError(f"unknown kernel {name!r}; expected one of {known}")


# ---------------------------------------------------------------------------
# tensor Gauss-Legendre quadrature on the support box

def _tensor_integrate(func, d, half_width, m):
    """Integrate ``func(points) -> (n_points, n_out)`` over the cube
    [-half_width, half_width]^d with an m-point rule on each half axis."""
    x, w = np.polynomial.legendre.leggauss(m)
    # two panels per axis so integrands with a kink at 0 (|u|) stay smooth
    x = np.concatenate([(x - 1.0) / 2.0, (x + 1.0) / 2.0]) * half_width
    w = np.concatenate([w, w]) * half_width / 2.0
    if d == 1:
        return w @ func(x[:, None])
    # iterate over the first axis to keep memory at m^(d-1) points
    rest = np.stack(np.meshgrid(*([x] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1)
    wrest = np.prod(np.stack(np.meshgrid(*([w] * (d - 1)), indexing="ij"), -1)
                    .reshape(-1, d - 1), axis=1)
    total = 0.0
    for xi, wi in zip(x, w):
        pts = np.column_stack([np.full(len(rest), xi), rest])
        total = total + wi * (wrest @ func(pts))
    return total


def _adaptive_tensor(func, d, half_width, tol, m0=3):
    if d > MAX_QUADRATURE_DIM:
        raise ValidationUnavailable(
            f"tensor quadrature is limited to dimension <= {MAX_QUADRATURE_DIM}, got {d}")
    m = m0
    prev = _tensor_integrate(func, d, half_width, m)
    while True:
        m += 2
        if (2 * m) ** d > MAX_QUADRATURE_NODES:
            raise QuadratureError(
                f"quadrature did not reach tol={tol:g} within "
                f"{MAX_QUADRATURE_NODES} nodes (dimension {d})")
        cur = _tensor_integrate(func, d, half_width, m)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur
        prev = cur


def moment_matrix(k: KernelSpec, tol: float = 1e-10) -> np.ndarray:
    """Matrix of ``int K(y) U_i(y) U_j(y) dy`` for ``U = (1, y_1, ..., y_d)``."""
    if k.stage != SELECTION:
        raise ValueError("moment_matrix needs a selection-stage kernel")
    d = k.dimension
    iu = np.triu_indices(d + 1)

    def integrand(pts):
        U = np.column_stack([np.ones(len(pts)), pts])
        kv = k(pts)
        return (kv[:, None] * U[:, iu[0]] * U[:, iu[1]])

    vals = _adaptive_tensor(integrand, d, k.support_radius, tol)
    M = np.zeros((d + 1, d + 1))
    M[iu] = vals
    M.T[iu] = vals
    return M


def selection_kernel_bounds(k: KernelSpec, tol: float = 1e-8, grid: int = 21) -> dict:
    """Numerical values of the seven quantities bounded by ``M_K``.

    Maxima are taken over a regular grid of the support box that contains
    its corners; integrals use tensor quadrature.
    """
    if k.stage != SELECTION:
        raise ValueError("needs a selection-stage kernel")
    d = k.dimension
    if d > MAX_QUADRATURE_DIM:
        raise ValidationUnavailable(
            f"validation limited to dimension <= {MAX_QUADRATURE_DIM}")
    r = k.support_radius
    ax = np.linspace(-r, r, grid if grid ** d <= MAX_QUADRATURE_NODES else 3)
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    kv = np.abs(k(pts))
    l1 = np.abs(pts).sum(axis=1)
    l2sq = (pts ** 2).sum(axis=1)
    out = {
        "max_abs_K": kv.max(),
        "max_K_sq": (kv ** 2).max(),
        "max_K_l1_sq": (kv * l1 ** 2).max(),
        "max_K_l2_sq": (kv * l2sq).max(),
    }

    def integrand(p):
        kk = k(p) ** 2
        U = np.column_stack([np.ones(len(p)), p])
        UU = (U[:, :, None] * U[:, None, :]).reshape(len(p), -1) ** 2
        cols = [kk * (1.0 + (p ** 2).sum(axis=1)),
                kk * np.abs(p).sum(axis=1) ** 4]
        return np.column_stack(cols + [kk[:, None] * UU])

    vals = _adaptive_tensor(integrand, d, r, tol)
    out["int_K_sq_1_plus_l2_sq"] = vals[0]
    out["int_K_sq_l1_4"] = vals[1]
    out["int_K_sq_UiUj_sq"] = vals[2:].max()
    return {key: float(v) for key, v in out.items()}


# ---------------------------------------------------------------------------
# estimation-kernel validator

@dataclass
class EstimationKernelReport:
    passed: bool
    c: float
    mass: float
    weighted_l2: float
    sup_weighted: float
    tail_bound: float
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed, "c": self.c, "mass": self.mass,
            "weighted_l2": self.weighted_l2, "sup_weighted": self.sup_weighted,
            "tail_bound": self.tail_bound, "messages": list(self.messages),
        }


def _radial_integral(g, d, radius):
    """``int_{|u|_2 <= radius} g(|u|_2) du`` by one-dimensional quadrature."""
    f = lambda r: float(g(np.asarray(r))) * r ** (d - 1)
    if math.isinf(radius):
        val, err = integrate.quad(f, 0.0, math.inf, limit=400)
    else:
        val, err = integrate.quad(f, 0.0, radius, limit=400)
    return _sphere_area(d) * val, _sphere_area(d) * err


def _floor_constant(k: KernelSpec, n_r: int = 2001) -> float:
    """Largest c with ``K >= c`` on the l2 ball of radius c, by bisection
    (the condition is monotone in c)."""
    d = k.dimension

    def ok(c):
        if k.profile is not None:
            vals = k.profile(np.linspace(0.0, c, n_r))
        else:
            ax = np.linspace(-c, c, 41 if 41 ** d <= 200_000 else 5)
            pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
            vals = k(pts[np.linalg.norm(pts, axis=1) <= c])
        return np.min(vals) >= c

    hi = max(1.0, float(k(np.zeros(d)))) * 2.0
    lo = 0.0
    if ok(hi):
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return float(lo)


def validate_estimation_kernel(k: KernelSpec, beta: float, tol: float = 1e-6) -> EstimationKernelReport:
    """Check an estimation kernel for a positive floor near the origin, unit
    mass, and finiteness of ``int (1 + |u|^{4 beta}) K^2`` and
    ``sup (1 + |u|^{2 beta}) K``.  Failures are reported, never raised.
    """
    if k.stage != ESTIMATION:
        raise ValueError("validate_estimation_kernel needs an estimation-stage kernel")
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    d = k.dimension
    msgs = []
    if d == 0:
        return EstimationKernelReport(True, 1.0, 1.0, 1.0, 1.0, 0.0,
                                 ["zero-dimensional kernel is the constant 1"])

    c = _floor_constant(k)
    if c <= 0:
        msgs.append("no c > 0 with K >= c on the l2 ball of radius c")

    radius = k.support_radius
    tail = 0.0
    if k.profile is not None:
        prof = k.profile
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", integrate.IntegrationWarning)
            mass, _ = _radial_integral(prof, d, radius)
            wl2, _ = _radial_integral(lambda r: (1 + r ** (4 * beta)) * prof(r) ** 2, d, radius)
        if any(issubclass(w.category, integrate.IntegrationWarning) for w in caught):
            msgs.append("quadrature reports a divergent or unresolved integral")
        if math.isinf(radius):
            cut = 50.0
            near, _ = _radial_integral(lambda r: (1 + r ** (4 * beta)) * prof(r) ** 2, d, cut)
            tail = abs(wl2 - near)
            rs = np.linspace(0.0, cut, 20001)
        else:
            rs = np.linspace(0.0, radius, 20001)
        sup = float(np.max((1 + rs ** (2 * beta)) * prof(rs)))
    else:
        if math.isinf(radius):
            return EstimationKernelReport(False, c, math.nan, math.inf, math.inf, math.inf,
                                     msgs + ["non-radial kernel with unbounded support"])
        try:
            vals = _adaptive_tensor(
                lambda p: np.column_stack([
                    k(p), (1 + np.linalg.norm(p, axis=1) ** (4 * beta)) * k(p) ** 2]),
                d, radius, tol)
        except (QuadratureError, ValidationUnavailable) as exc:
            return EstimationKernelReport(False, c, math.nan, math.nan, math.nan, math.nan,
                                     msgs + [str(exc)])
        mass, wl2 = float(vals[0]), float(vals[1])
        ax = np.linspace(-radius, radius, 41 if 41 ** d <= 200_000 else 5)
        pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
        sup = float(np.max((1 + np.linalg.norm(pts, axis=1) ** (2 * beta)) * k(pts)))

    if not abs(mass - 1.0) <= tol:
        msgs.append(f"mass {mass:.10g} differs from 1 by more than {tol:g}")
    if not np.isfinite(wl2):
        msgs.append("weighted L2 integral is not finite")
    if not np.isfinite(sup):
        msgs.append("weighted supremum is not finite")
    if not tail <= tol:
        msgs.append(f"tail bound {tail:g} exceeds {tol:g}")
    passed = c > 0 and not msgs
    return EstimationKernelReport(passed, c, float(mass), float(wl2), sup, float(tail), msgs)


def gaussian_trunc_mass(d: int, radius: float = 10.0) -> float:
    """Mass of :func:`gaussian_trunc_kernel`, ``P(chi2_d <= radius^2)``."""
    return float(special.gammainc(d / 2.0, radius ** 2 / 2.0))


# name used by the operation list this package implements
validate_assumption3 = validate_estimation_kernel
