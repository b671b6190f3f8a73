"""Polynomial surrogates of Tanh in Gaussian L2 and the polynomial state evolution."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e as H
from numpy.polynomial import polynomial as P

from .profile import VarianceProfile
from .scalar import DEFAULT_ORDER, GaussianQuadrature, ModelParams, default_quadrature, gauss_hermite

MAX_DEGREE = 25
GRID_STEP = 0.01


@dataclass(frozen=True, eq=False)
class Polynomial:
    """f(x) = sum_l coeffs[l] x^l, lowest degree first."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if len(nz) else c[:1]
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for c in self.coeffs[::-1]:
            acc = acc * x + c
        return acc

    def deriv(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial(np.zeros(1))
        return Polynomial(self.coeffs[1:] * np.arange(1, len(self.coeffs)))

    def square(self) -> "Polynomial":
        return Polynomial(P.polymul(self.coeffs, self.coeffs))

    def to_list(self) -> list[float]:
        return [float(c) for c in self.coeffs]


class PolyFitError(RuntimeError):
    def __init__(self, achieved: float, target: float, max_degree: int):
        super().__init__(
            f"no polynomial of degree <= {max_degree} reaches L2 error {target:g}; best achieved {achieved:g}"
        )
        self.achieved = achieved
        self.target = target


@dataclass(frozen=True, eq=False)
class PolyStateEvolution:
    cq_iterates: list[np.ndarray]
    order_used: int


def _hermite_projection(func, alpha: float, degree: int, quad: GaussianQuadrature) -> np.ndarray:
    """Power-basis coefficients (in x) of the degree-``degree`` L2(N(0, alpha^2)) projection of func."""
    z, w = quad.nodes, quad.weights
    fz = func(alpha * z)
    c = np.array([(w * fz) @ H.hermeval(z, np.eye(degree + 1)[j]) / math.factorial(j) for j in range(degree + 1)])
    in_y = H.herme2poly(c)
    return in_y / alpha ** np.arange(len(in_y))


def l2_errors(p: Polynomial, params: ModelParams, alphas: np.ndarray, quad: GaussianQuadrature) -> tuple[np.ndarray, np.ndarray]:
    """E(p(a xi) - Tanh(a xi))^2 and E(p'(a xi) - Tanh'(a xi))^2 for each a in ``alphas``."""
    x = np.asarray(alphas, dtype=float)[:, None] * quad.nodes[None, :]
    dp = p.deriv()
    err0 = (p(x) - params.tanh_shifted(x)) ** 2 @ quad.weights
    err1 = (dp(x) - params.dtanh_shifted(x)) ** 2 @ quad.weights
    return err0, err1


def fit_tanh_poly(
    e: float,
    alpha_max: float,
    params: ModelParams,
    quad: GaussianQuadrature | None = None,
    max_degree: int = MAX_DEGREE,
    grid_step: float = GRID_STEP,
) -> Polynomial:
    """Lowest-degree p with p(0) = Tanh(0) whose value and derivative L2 errors are <= e on [0, alpha_max].

    Tanh' is projected on Hermite polynomials under N(0, alpha_max^2), then
    integrated from 0 with constant tanh(h). Both errors are checked on an
    alpha grid before returning.
    """
    if not e > 0:
        raise ValueError(f"e must be positive, got {e}")
    if not alpha_max > 0:
        raise ValueError(f"alpha_max must be positive, got {alpha_max}")
    fit_quad = quad or default_quadrature()
    alphas = np.append(np.arange(0.0, alpha_max, grid_step), alpha_max)
    best = math.inf
    for degree in range(1, max_degree + 1):
        u = _hermite_projection(params.dtanh_shifted, alpha_max, degree - 1, fit_quad)
        coeffs = np.concatenate([[math.tanh(params.h)], u / np.arange(1, len(u) + 1)])
        p = Polynomial(coeffs)
        err0, err1 = l2_errors(p, params, alphas, fit_quad)
        worst = max(err0.max(), err1.max())
        best = min(best, worst)
        if worst <= e:
            return p
    raise PolyFitError(best, e, max_degree)


def poly_state_evolution(
    profile: VarianceProfile,
    params: ModelParams,
    f: Polynomial,
    quad: GaussianQuadrature | None = None,
    k: int = 0,
) -> PolyStateEvolution:
    """cq^0 = 0, cq^{l+1} = tS E f(X^l)^2 with X^l ~ N(0, diag(cq^l)).

    The quadrature order is raised to degree(f) + 1 when needed so the
    polynomial moments are exact.
    """
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    quad = quad or gauss_hermite(max(DEFAULT_ORDER, f.degree + 1))
    if quad.rule == "gauss_hermite" and quad.order < f.degree + 1:
        quad = gauss_hermite(f.degree + 1)
    f2 = f.square()
    its = [np.zeros(profile.n)]
    for _ in range(k):
        cq = its[-1]
        uniq, inv = np.unique(cq, return_inverse=True)
        moments = f2(np.sqrt(uniq)[:, None] * quad.nodes[None, :]) @ quad.weights
        its.append(params.t * profile.matvec(moments[inv]))
    return PolyStateEvolution(cq_iterates=its, order_used=quad.order)
