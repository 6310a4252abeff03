"""Reference problem families used by the statistical tests and the
shipped experiment configs.

All live on the design box [-1, 1]^10 with query point 0, so the design
density is 2^-10 and ``eta = 1``.  The regularity constant ``L`` is the
largest value that keeps the derivative separation ``C = 1`` compliant.
"""
from __future__ import annotations

from .selection import SelectionConfig, choose_parameters
from .simulation import FunctionSpec, GeneratorSpec

D = 10
H_FRACTION = 0.9
F_MAX = 1.0

# affine, J = {1, 2}, |slopes| >= C = 1; 72 * 2^10 * sqrt(2) * L <= 1
SELECTION_FUNCTION = FunctionSpec("affine", intercept=0.5, linear=(1.0, -1.5))
SELECTION_L = 9.5e-6

# quadratic plus affine in coordinate 1 (beta = 2); 72 * 2^10 * L <= 1 and
# the quadratic coefficient equals L
RATE_L = 1.2e-5
RATE_FUNCTION = FunctionSpec("smooth", name="quad_affine", intercept=0.5,
                             linear=(1.0,), quadratic=(RATE_L,))


def selection_spec(n: int = 4000, sigma: float = 0.0, seed: int = 0) -> GeneratorSpec:
    return GeneratorSpec(n=n, d=D, function=SELECTION_FUNCTION, sigma=sigma, seed=seed)


def selection_config(spec: GeneratorSpec, procedure: str = "translated") -> SelectionConfig:
    c = spec.design_constants(L=SELECTION_L, C=1.0, d0=2, f_max=F_MAX, strict=True)
    return choose_parameters(c, H_FRACTION, procedure)


def rate_spec(n: int = 1000, sigma: float = 0.5, seed: int = 0) -> GeneratorSpec:
    return GeneratorSpec(n=n, d=D, function=RATE_FUNCTION, sigma=sigma, seed=seed)


def rate_config(spec: GeneratorSpec) -> SelectionConfig:
    c = spec.design_constants(L=RATE_L, C=1.0, d0=1, f_max=F_MAX, beta=2.0, strict=True)
    return choose_parameters(c, H_FRACTION)
