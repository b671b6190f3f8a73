"""Gaussian quadrature, the scalar function g and the state-evolution recursion q -> tS g(q)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .profile import VarianceProfile, validate

LOG2 = math.log(2.0)
DEFAULT_ORDER = 61
TRAPEZOID_STEP = 0.1
TRAPEZOID_HALF_WIDTH = 12.0
LOG2_SLACK = 1e-9


@dataclass(frozen=True)
class ModelParams:
    t: float
    h: float = 0.0

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")

    def tanh_shifted(self, x):
        """Tanh(x) = tanh(x + h)."""
        return np.tanh(np.asarray(x, dtype=float) + self.h)

    def dtanh_shifted(self, x):
        """Tanh'(x) = 1 / cosh(x + h)^2."""
        return 1.0 / np.cosh(np.asarray(x, dtype=float) + self.h) ** 2


@dataclass(frozen=True, eq=False)
class GaussianQuadrature:
    """Nodes/weights with sum_i w_i phi(z_i) ~= E phi(xi), xi standard normal."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    rule: str = "gauss_hermite"


@lru_cache(maxsize=None)
def gauss_hermite(order: int = DEFAULT_ORDER) -> GaussianQuadrature:
    if order < 1:
        raise ValueError(f"quadrature order must be positive, got {order}")
    x, w = hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return GaussianQuadrature(order=order, nodes=x, weights=w)


@lru_cache(maxsize=None)
def normal_trapezoid(step: float = TRAPEZOID_STEP, half_width: float = TRAPEZOID_HALF_WIDTH) -> GaussianQuadrature:
    """Trapezoidal rule for the standard normal density on [-half_width, half_width].

    For integrands analytic in a strip (tanh, sech^2 and log cosh of sqrt(v) z + h
    have their nearest poles at distance pi / (2 sqrt(v))) the error decays like
    exp(-pi^2 / (sqrt(v) step)): machine precision for v <= 4 at the default step.
    Gauss-Hermite converges far more slowly on such integrands.
    """
    if not step > 0 or not half_width > 0:
        raise ValueError("step and half_width must be positive")
    m = int(round(half_width / step))
    x = step * np.arange(-m, m + 1)
    w = step * np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return GaussianQuadrature(order=len(x), nodes=x, weights=w, rule="trapezoid")


def default_quadrature() -> GaussianQuadrature:
    """Rule used whenever a caller passes no quadrature: the trapezoidal rule above."""
    return normal_trapezoid()


def gauss_expect(phi: Callable[[np.ndarray], np.ndarray], variance: float, quad: GaussianQuadrature | None = None) -> float:
    """E phi(sqrt(variance) xi); with Gauss-Hermite nodes exact for polynomials of degree < 2 * order."""
    if variance < 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    quad = quad or default_quadrature()
    return float(quad.weights @ phi(math.sqrt(variance) * quad.nodes))


def _expect_over(values: np.ndarray, integrand: Callable[[np.ndarray], np.ndarray], quad: GaussianQuadrature) -> np.ndarray:
    """Element-wise E integrand(sqrt(v) xi) for each v in ``values``; repeated v computed once."""
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise ValueError("variances must be nonnegative")
    uniq, inv = np.unique(values, return_inverse=True)
    table = integrand(np.sqrt(uniq)[:, None] * quad.nodes[None, :]) @ quad.weights
    return table[inv].reshape(values.shape)


def g_func(x, params: ModelParams, quad: GaussianQuadrature | None = None):
    """g(x) = E tanh(sqrt(x) xi + h)^2, element-wise on arrays."""
    quad = quad or default_quadrature()
    out = _expect_over(x, lambda z: np.tanh(z + params.h) ** 2, quad)
    return float(out) if np.ndim(x) == 0 else out


def dtanh_expect(x, params: ModelParams, quad: GaussianQuadrature | None = None):
    """E Tanh'(sqrt(x) xi), computed from sech^2 directly (not as 1 - g)."""
    quad = quad or default_quadrature()
    out = _expect_over(x, lambda z: 1.0 / np.cosh(z + params.h) ** 2, quad)
    return float(out) if np.ndim(x) == 0 else out


def logcosh(x):
    """Overflow-safe log cosh(x) = |x| + log((1 + exp(-2|x|)) / 2)."""
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


@dataclass(frozen=True, eq=False)
class StateEvolution:
    q_iterates: list[np.ndarray]
    q_star: np.ndarray | None = None
    residual: float = math.nan
    converged: bool = False
    iterations: int = 0
    ht_ok: bool = True
    extra: dict = field(default_factory=dict)


def _step(profile: VarianceProfile, params: ModelParams, q: np.ndarray, quad: GaussianQuadrature) -> np.ndarray:
    return params.t * profile.matvec(g_func(q, params, quad))


def solve_fixed_point(
    profile: VarianceProfile,
    params: ModelParams,
    quad: GaussianQuadrature | None = None,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    override: bool = False,
    q0: np.ndarray | None = None,
) -> StateEvolution:
    """Iterate q <- tS g(q) from q0 (default 0) until ||q - tS g(q)||_inf <= tol.

    Outside the high-temperature regime the call is rejected unless
    ``override`` is set, in which case nothing is guaranteed and
    ``converged`` reports what happened.
    """
    quad = quad or default_quadrature()
    ht_ok = validate(profile, params.t).ht_ok
    if not ht_ok and not override:
        raise ValueError(
            f"t={params.t} violates the high-temperature condition for this profile "
            f"(row_norm={profile.row_norm}); pass override=True to iterate anyway"
        )
    q = np.zeros(profile.n) if q0 is None else np.array(q0, dtype=float)
    iterates = [q]
    residual = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        q_next = _step(profile, params, q, quad)
        residual = float(np.max(np.abs(q_next - q))) if profile.n else 0.0
        iterates.append(q_next)
        if residual <= tol:
            converged = True
            # one contraction step past the stopping point; report its own residual
            q = q_next
            residual = float(np.max(np.abs(_step(profile, params, q, quad) - q))) if profile.n else 0.0
            break
        q = q_next
    if ht_ok and converged and float(np.max(q, initial=0.0)) >= LOG2 + LOG2_SLACK:
        raise AssertionError(f"fixed point exceeds log 2: max q = {np.max(q)!r}")
    return StateEvolution(
        q_iterates=iterates,
        q_star=q,
        residual=residual,
        converged=converged,
        iterations=it,
        ht_ok=ht_ok,
    )


def iterate_q(
    profile: VarianceProfile,
    params: ModelParams,
    quad: GaussianQuadrature | None = None,
    k: int = 0,
) -> StateEvolution:
    """q^0 = 0 and q^{l+1} = tS g(q^l) for l < k."""
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    quad = quad or default_quadrature()
    iterates = [np.zeros(profile.n)]
    for _ in range(k):
        iterates.append(_step(profile, params, iterates[-1], quad))
    return StateEvolution(q_iterates=iterates, iterations=k, ht_ok=validate(profile, params.t).ht_ok)


class OnsagerMismatch(AssertionError):
    pass


def onsager_coeff(
    profile: VarianceProfile,
    params: ModelParams,
    q_l: np.ndarray,
    q_lplus1: np.ndarray,
    quad: GaussianQuadrature | None = None,
    consistency_tol: float = 1e-9,
    identity_tol: float = 1e-12,
) -> np.ndarray:
    """Onsager coefficient tS1 - q^{l+1}, cross-checked against tS E Tanh'(X^l)."""
    quad = quad or default_quadrature()
    q_l = np.asarray(q_l, dtype=float)
    q_lplus1 = np.asarray(q_lplus1, dtype=float)
    expected = _step(profile, params, q_l, quad)
    gap = float(np.max(np.abs(expected - q_lplus1), initial=0.0))
    if gap > consistency_tol:
        raise ValueError(f"q_lplus1 is not tS g(q_l): max deviation {gap:.3g}")
    coeff = params.t * profile.row_sums() - q_lplus1
    other = params.t * profile.matvec(dtanh_expect(q_l, params, quad))
    dev = float(np.max(np.abs(coeff - other), initial=0.0))
    if dev > identity_tol:
        raise OnsagerMismatch(f"Onsager forms disagree by {dev:.3g}")
    return coeff


def solve_scalar(t: float, h: float, quad: GaussianQuadrature | None = None, tol: float = 1e-12) -> float:
    """Root of q = t g(q) on [0, t] by bisection (unique when t < log 2)."""
    quad = quad or default_quadrature()
    params = ModelParams(t=t, h=h)
    lo, hi = 0.0, t
    if t * g_func(0.0, params, quad) == 0.0:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid - t * g_func(mid, params, quad) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
