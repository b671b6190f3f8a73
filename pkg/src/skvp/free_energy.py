"""Asymptotic free energy, its doubly-stochastic scalar form, and the quenched Monte Carlo estimate."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .gibbs import log_partition
from .profile import VarianceProfile
from .sampler import sample_coupling
from .scalar import (
    LOG2,
    GaussianQuadrature,
    ModelParams,
    g_func,
    default_quadrature,
    logcosh,
    solve_fixed_point,
    solve_scalar,
)


class FixedPointNotConverged(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"state-evolution fixed point did not converge (residual {residual:.3g})")
        self.residual = residual


@dataclass(frozen=True)
class FreeEnergyReport:
    bold_f: float
    f_hat: float | None
    f_stderr: float | None
    gap: float | None
    n: int
    t: float
    h: float
    samples: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def _expect_logcosh(q: np.ndarray, h: float, quad: GaussianQuadrature) -> np.ndarray:
    uniq, inv = np.unique(np.asarray(q, dtype=float), return_inverse=True)
    vals = logcosh(np.sqrt(uniq)[:, None] * quad.nodes[None, :] + h) @ quad.weights
    return vals[inv]


def free_energy_at(profile: VarianceProfile, params: ModelParams, q: np.ndarray, quad: GaussianQuadrature) -> float:
    """log 2 + mean_i E log cosh(sqrt(q_i) xi + h) + t/(4n) (1 - g(q))^T S (1 - g(q))."""
    n = profile.n
    one_minus_g = 1.0 - g_func(q, params, quad)
    quadratic = float(one_minus_g @ profile.matvec(one_minus_g))
    return LOG2 + float(_expect_logcosh(q, params.h, quad).sum()) / n + params.t * quadratic / (4 * n)


def asymptotic_free_energy(
    profile: VarianceProfile,
    params: ModelParams,
    quad: GaussianQuadrature | None = None,
    override: bool = False,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> float:
    quad = quad or default_quadrature()
    se = solve_fixed_point(profile, params, quad, tol=tol, max_iter=max_iter, override=override)
    if not se.converged:
        raise FixedPointNotConverged(se.residual)
    return free_energy_at(profile, params, se.q_star, quad)


def scalar_free_energy(params: ModelParams, quad: GaussianQuadrature | None = None) -> float:
    """Doubly-stochastic limit log 2 + E log cosh(sqrt(q) xi + h) + t/4 (1 - q/t)^2 with q = t g(q)."""
    if params.t >= LOG2:
        raise ValueError(f"scalar free energy needs t < log 2, got t={params.t}")
    quad = quad or default_quadrature()
    q = solve_scalar(params.t, params.h, quad)
    elc = float(logcosh(math.sqrt(q) * quad.nodes + params.h) @ quad.weights)
    return LOG2 + elc + params.t / 4 * (1 - q / params.t) ** 2


def mc_log_partitions(profile: VarianceProfile, params: ModelParams, samples: int, seed: int) -> np.ndarray:
    """(1/n) log Z for disorder draws 0..samples-1, in draw order."""
    out = np.empty(samples)
    for s in range(samples):
        w = sample_coupling(profile, params.t, seed, replica=s)
        out[s] = log_partition(w, params.h) / profile.n
    return out


def mc_free_energy(
    profile: VarianceProfile,
    params: ModelParams,
    samples: int,
    seed: int,
    quad: GaussianQuadrature | None = None,
    bold_f: float | None = None,
) -> FreeEnergyReport:
    """Quenched estimate F_n = (1/n) E log Z: mean of per-draw log Z, never log of mean Z."""
    if samples < 2:
        raise ValueError(f"need at least 2 samples, got {samples}")
    vals = mc_log_partitions(profile, params, samples, seed)
    f_hat = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(samples))
    if bold_f is None:
        bold_f = asymptotic_free_energy(profile, params, quad)
    return FreeEnergyReport(
        bold_f=bold_f,
        f_hat=f_hat,
        f_stderr=stderr,
        gap=f_hat - bold_f,
        n=profile.n,
        t=params.t,
        h=params.h,
        samples=samples,
        seed=seed,
    )
