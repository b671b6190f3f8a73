"""Disorder sampling (couplings W, cavity fields eta) and spectral-norm diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .profile import VarianceProfile

POWER_TOL = 1e-9
POWER_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    n: int
    w: np.ndarray
    t: float
    profile_id: str
    seed: int
    replica: int = 0


@dataclass(frozen=True, eq=False)
class GaussianField:
    eta: np.ndarray
    q_used: np.ndarray


@dataclass(frozen=True)
class SpectralBoundReport:
    norm_estimate: float
    bound_T: float
    delta: float
    within_bound: bool
    converged: bool
    iterations: int
    # same bound with the max-entry term taken on S instead of tS
    bound_T_unscaled: float


def _goe_upper(n: int, seed: int, replica: int) -> np.ndarray:
    """Standard normals for the strict upper triangle, row-major order."""
    return rng.stream(seed, "coupling", replica).standard_normal(n * (n - 1) // 2)


def _assemble(n: int, s_upper: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
    iu, ju = np.triu_indices(n, k=1)
    vals = np.where(s_upper > 0, np.sqrt(t * s_upper) * x, 0.0)
    w = np.zeros((n, n))
    w[iu, ju] = vals
    w[ju, iu] = vals
    w.setflags(write=False)
    return w


def sample_coupling(profile: VarianceProfile, t: float, seed: int, replica: int = 0) -> CouplingMatrix:
    """Draw W with independent W_ij ~ N(0, t s_ij) above the diagonal, mirrored below."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    n = profile.n
    iu, ju = np.triu_indices(n, k=1)
    s_upper = profile.dense()[iu, ju]
    w = _assemble(n, s_upper, _goe_upper(n, seed, replica), t)
    return CouplingMatrix(n=n, w=w, t=float(t), profile_id=profile.profile_id, seed=seed, replica=replica)


def sample_coupling_pair(
    toeplitz_profile: VarianceProfile,
    circulant_profile: VarianceProfile,
    t: float,
    seed: int,
    replica: int = 0,
) -> tuple[CouplingMatrix, CouplingMatrix]:
    """Couple two profiles through one shared GOE draw X: W = (tS)^(1/2) * X entrywise."""
    if toeplitz_profile.n != circulant_profile.n:
        raise ValueError(f"profiles differ in size: {toeplitz_profile.n} vs {circulant_profile.n}")
    return (
        sample_coupling(toeplitz_profile, t, seed, replica),
        sample_coupling(circulant_profile, t, seed, replica),
    )


def corner_energy(w: np.ndarray, w_tilde: np.ndarray, sigma: np.ndarray) -> float:
    """E(sigma) = H~(sigma) - H(sigma) for two coupled disorder draws."""
    d = np.asarray(w_tilde) - np.asarray(w)
    sigma = np.asarray(sigma, dtype=float)
    return 0.5 * float(sigma @ d @ sigma)


def sample_field(q: np.ndarray, seed: int, replica: int = 0) -> GaussianField:
    """eta ~ N(0, diag(q)), drawn from its own stream (tag ``field``)."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise ValueError("field variances must be nonnegative")
    z = rng.stream(seed, "field", replica).standard_normal(q.shape)
    eta = np.where(q > 0, np.sqrt(q) * z, 0.0)
    eta.setflags(write=False)
    return GaussianField(eta=eta, q_used=q.copy())


def power_norm(w: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> tuple[float, bool, int]:
    """Spectral norm of a symmetric matrix by power iteration.

    Starts from the alternating-sign vector. Returns (estimate, converged, iterations).
    """
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if n == 0 or not np.any(w):
        return 0.0, True, 0
    v = np.where(np.arange(n) % 2 == 0, 1.0, -1.0) / math.sqrt(n)
    prev = -1.0
    for it in range(1, max_iter + 1):
        y = w @ v
        est = float(np.linalg.norm(y))
        if est == 0.0:
            # start vector in the null space; restart from a fixed non-alternating vector
            v = np.linspace(1.0, 2.0, n)
            v /= np.linalg.norm(v)
            continue
        v = y / est
        if abs(est - prev) <= tol * est:
            return est, True, it
        prev = est
    return est, False, max_iter


def spectral_bound(profile: VarianceProfile, t: float, delta: float, scale_max_by_t: bool = True) -> float:
    n = profile.n
    row = t * profile.row_norm
    smax = profile.max_entry() * (t if scale_max_by_t else 1.0)
    log_n = math.log(n) if n > 1 else 0.0
    return (1 + delta) * (2 * math.sqrt(row) + 6 / math.sqrt(math.log1p(delta)) * math.sqrt(smax * log_n))


def spectral_report(w: CouplingMatrix, profile: VarianceProfile, delta: float) -> SpectralBoundReport:
    if not 0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 1/2], got {delta}")
    est, converged, iters = power_norm(w.w)
    bound = spectral_bound(profile, w.t, delta)
    return SpectralBoundReport(
        norm_estimate=est,
        bound_T=bound,
        delta=delta,
        within_bound=est <= bound,
        converged=converged,
        iterations=iters,
        bound_T_unscaled=spectral_bound(profile, w.t, delta, scale_max_by_t=False),
    )
