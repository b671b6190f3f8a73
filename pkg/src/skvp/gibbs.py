"""Exact Gibbs oracle by Gray-code enumeration of {-1,+1}^n, plus a heat-bath fallback.

All measures use the interpolated Hamiltonian

    H_u(sigma) = sqrt(u)/2 sigma^T W sigma + h <sigma, 1> + sqrt(1-u) <sigma, eta>,

which is the model Hamiltonian at u = 1. Configurations are integer words:
bit i set means sigma_i = +1. Enumeration walks the reflected Gray code over
the lower n - 1 spins from word 0 (all spins -1), updating H in O(n) per flip,
and scores each visited sigma together with -sigma. That walk order is the
summation order of every exact quantity below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit

from . import rng
from .profile import VarianceProfile
from .sampler import CouplingMatrix, GaussianField

ENUM_CAP = 24


@dataclass(frozen=True, eq=False)
class GibbsStats:
    m: np.ndarray
    cov: np.ndarray | None
    log_z: float


@dataclass(frozen=True, eq=False)
class OverlapSample:
    r12: np.ndarray


@dataclass(frozen=True, eq=False)
class ExactGibbs:
    """Enumerated measure G_u for one disorder realization."""

    w: np.ndarray
    h: float
    u: float
    eta: np.ndarray | None
    log_z: float

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def stats(self, covariance: bool = True) -> GibbsStats:
        return stats(self.w, self.h, self.u, self.eta, covariance=covariance)

    def sample_replicas(self, count: int, seed: int, index: int = 0) -> np.ndarray:
        return sample_replicas(self.w, self.h, self.u, self.eta, count, seed, index)


# --------------------------------------------------------------------------- kernels


@njit(cache=True)
def _lowest_bit(k):
    i = 0
    while (k >> i) & 1 == 0:
        i += 1
    return i


@njit(cache=True)
def _start(w, b, c):
    """All spins at -1: local fields and the energy split into its quadratic and linear parts."""
    n = w.shape[0]
    sigma = -np.ones(n)
    loc = np.zeros(n)
    for j in range(n):
        acc = 0.0
        for i in range(n):
            acc += w[j, i] * sigma[i]
        loc[j] = c * acc
    quad = 0.0
    lin = 0.0
    for j in range(n):
        quad += 0.5 * sigma[j] * loc[j]
        lin += b[j] * sigma[j]
    return sigma, loc, quad, lin


@njit(cache=True)
def _flip(w, b, c, sigma, loc, quad, lin, i):
    n = w.shape[0]
    si = sigma[i]
    quad -= 2.0 * si * loc[i]
    lin -= 2.0 * si * b[i]
    sigma[i] = -si
    step = -2.0 * si * c
    for j in range(n):
        loc[j] += step * w[j, i]
    return quad, lin


# The walks below cover the half space where the top spin is -1 and score each
# sigma together with its mirror -sigma: H(+-sigma) = quad +- lin. Pairing makes
# h -> -h swap the two terms exactly, so spin-flip symmetry holds bit for bit.


@njit(cache=True)
def _log_partition_kernel(w, b, c):
    """(max, scaled sum) of exp(H) over all 2^n configurations, mergeable across blocks."""
    n = w.shape[0]
    sigma, loc, quad, lin = _start(w, b, c)
    mx = quad + abs(lin)
    s = 1.0 + math.exp(-2.0 * abs(lin))
    for k in range(1, 1 << (n - 1)):
        quad, lin = _flip(w, b, c, sigma, loc, quad, lin, _lowest_bit(k))
        pm = quad + abs(lin)
        ps = 1.0 + math.exp(-2.0 * abs(lin))
        if pm > mx:
            s = s * math.exp(mx - pm) + ps
            mx = pm
        else:
            s += ps * math.exp(pm - mx)
    return mx, s


@njit(cache=True)
def _stats_kernel(w, b, c, log_z, want_cov):
    n = w.shape[0]
    sigma, loc, quad, lin = _start(w, b, c)
    m = np.zeros(n)
    second = np.zeros((n, n)) if want_cov else np.zeros((1, 1))
    for k in range(1 << (n - 1)):
        if k > 0:
            quad, lin = _flip(w, b, c, sigma, loc, quad, lin, _lowest_bit(k))
        p_plus = math.exp(quad + lin - log_z)
        p_minus = math.exp(quad - lin - log_z)
        d = p_plus - p_minus
        for i in range(n):
            m[i] += d * sigma[i]
        if want_cov:
            p = p_plus + p_minus
            for i in range(n):
                pi = p * sigma[i]
                for j in range(i + 1, n):
                    second[i, j] += pi * sigma[j]
    return m, second


@njit(cache=True)
def _energies_by_word(w, b, c):
    """H at every configuration, indexed by its integer word (bit i set means spin i = +1)."""
    n = w.shape[0]
    full = (1 << n) - 1
    out = np.empty(1 << n)
    sigma, loc, quad, lin = _start(w, b, c)
    for k in range(1 << (n - 1)):
        if k > 0:
            quad, lin = _flip(w, b, c, sigma, loc, quad, lin, _lowest_bit(k))
        word = k ^ (k >> 1)
        out[word] = quad + lin
        out[full ^ word] = quad - lin
    return out


@njit(cache=True)
def _heat_bath(w, b, c, sigma, uniforms, out, burn_in, thin):
    n = w.shape[0]
    sweeps = uniforms.shape[0]
    loc = np.zeros(n)
    for j in range(n):
        acc = 0.0
        for i in range(n):
            acc += w[j, i] * sigma[i]
        loc[j] = c * acc
    kept = 0
    for sweep in range(sweeps):
        for i in range(n):
            field = loc[i] + b[i]
            new = 1.0 if uniforms[sweep, i] < 0.5 * (1.0 + math.tanh(field)) else -1.0
            if new != sigma[i]:
                step = (new - sigma[i]) * c
                sigma[i] = new
                for j in range(n):
                    loc[j] += step * w[j, i]
        if sweep >= burn_in and (sweep - burn_in) % thin == 0:
            for i in range(n):
                out[kept, i] = sigma[i]
            kept += 1
    return kept


# --------------------------------------------------------------------------- helpers


def _as_w(w) -> np.ndarray:
    arr = w.w if isinstance(w, CouplingMatrix) else np.asarray(w, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"coupling matrix must be square, got shape {arr.shape}")
    if not np.array_equal(arr, arr.T):
        raise ValueError("coupling matrix must be symmetric")
    if np.any(np.diag(arr) != 0):
        raise ValueError("coupling matrix must have a zero diagonal")
    return np.ascontiguousarray(arr, dtype=np.float64)


def _fields(n: int, h: float, u: float, eta) -> tuple[np.ndarray, float]:
    """(external field vector h + sqrt(1-u) eta, disorder scale sqrt(u))."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u}")
    b = np.full(n, float(h))
    if u < 1.0:
        if eta is None:
            raise ValueError("eta is required when u < 1")
        eta = eta.eta if isinstance(eta, GaussianField) else np.asarray(eta, dtype=float)
        if eta.shape != (n,):
            raise ValueError(f"eta must have length {n}, got shape {eta.shape}")
        b = b + math.sqrt(1.0 - u) * eta
    return b, math.sqrt(u)


def _check_cap(n: int) -> None:
    if n > ENUM_CAP:
        raise ValueError(
            f"n={n} exceeds the enumeration cap {ENUM_CAP}; use glauber_chain for larger systems"
        )


def _eta_array(eta):
    if eta is None:
        return None
    return eta.eta if isinstance(eta, GaussianField) else np.asarray(eta, dtype=float)


def spins_from_words(words: np.ndarray, n: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.int64)
    bits = (words[:, None] >> np.arange(n)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def words_from_spins(spins: np.ndarray) -> np.ndarray:
    spins = np.atleast_2d(spins)
    return ((spins > 0).astype(np.int64) << np.arange(spins.shape[1])).sum(axis=1)


# --------------------------------------------------------------------------- operations


def hamiltonian(w, h: float, u: float, eta, sigma) -> float:
    """H_u(sigma); reduces to 1/2 sigma^T W sigma + h <sigma, 1> at u = 1."""
    arr = w.w if isinstance(w, CouplingMatrix) else np.asarray(w, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.abs(sigma) != 1):
        raise ValueError("spins must be +-1")
    b, c = _fields(arr.shape[0], h, u, eta)
    return float(0.5 * c * (sigma @ arr @ sigma) + b @ sigma)


def log_partition(w, h: float, u: float = 1.0, eta=None) -> float:
    """Exact log Z_u by a streaming log-sum-exp over the Gray-code walk."""
    arr = _as_w(w)
    n = arr.shape[0]
    _check_cap(n)
    if n == 0:
        return 0.0
    b, c = _fields(n, h, u, eta)
    mx, s = _log_partition_kernel(arr, b, c)
    return mx + math.log(s)


def log_partition_blocks(w, h: float, u: float = 1.0, eta=None, high_bits: int = 2) -> float:
    """log Z_u split over the 2^high_bits settings of the top spins, merged pairwise.

    Each block is an independent enumeration over the low spins, so blocks
    can run on separate workers; the merge is associative.
    """
    arr = _as_w(w)
    n = arr.shape[0]
    _check_cap(n)
    high_bits = min(high_bits, n)
    lo = n - high_bits
    b, c = _fields(n, h, u, eta)
    parts = []
    for prefix in range(1 << high_bits):
        top = 2.0 * ((prefix >> np.arange(high_bits)) & 1) - 1.0
        # absorb the fixed top spins into the field of the low spins
        sub = np.ascontiguousarray(arr[:lo, :lo])
        b_lo = b[:lo] + c * (arr[:lo, lo:] @ top)
        const = 0.5 * c * (top @ arr[lo:, lo:] @ top) + b[lo:] @ top
        if lo == 0:
            parts.append((const, 1.0))
            continue
        mx, s = _log_partition_kernel(sub, b_lo, c)
        parts.append((mx + const, s))
    mx, s = parts[0]
    for m2, s2 in parts[1:]:
        if m2 > mx:
            mx, s = m2, s * math.exp(mx - m2) + s2
        else:
            s = s + s2 * math.exp(m2 - mx)
    return mx + math.log(s)


def exact_gibbs(w, h: float, u: float = 1.0, eta=None) -> ExactGibbs:
    arr = _as_w(w)
    return ExactGibbs(w=arr, h=float(h), u=float(u), eta=_eta_array(eta), log_z=log_partition(arr, h, u, eta))


def stats(w, h: float, u: float = 1.0, eta=None, covariance: bool = True, log_z: float | None = None) -> GibbsStats:
    """Exact magnetizations <sigma_i> and covariances <sigma_i sigma_j> - m_i m_j."""
    arr = _as_w(w)
    n = arr.shape[0]
    _check_cap(n)
    if n == 0:
        return GibbsStats(m=np.zeros(0), cov=np.zeros((0, 0)) if covariance else None, log_z=0.0)
    b, c = _fields(n, h, u, eta)
    if log_z is None:
        mx, s = _log_partition_kernel(arr, b, c)
        log_z = mx + math.log(s)
    m, second = _stats_kernel(arr, b, c, log_z, covariance)
    cov = None
    if covariance:
        upper = np.triu(second, k=1)
        cov = upper + upper.T - np.outer(m, m)
        np.fill_diagonal(cov, 1.0 - m**2)
    return GibbsStats(m=m, cov=cov, log_z=log_z)


def cavity_stats(w, h: float, A: Iterable[int], u: float = 1.0, eta=None, covariance: bool = False) -> GibbsStats:
    """Statistics of the system with spins in A removed; m is 0 on A by convention.

    The field acts on surviving spins only. ``cov`` (if requested) is n x n
    with zero rows/columns on A.
    """
    arr = _as_w(w)
    n = arr.shape[0]
    removed = sorted(set(int(a) for a in A))
    if any(not 0 <= a < n for a in removed):
        raise ValueError(f"cavity indices {removed} out of range for n={n}")
    keep = np.setdiff1d(np.arange(n), removed)
    eta_arr = _eta_array(eta)
    sub_eta = None if eta_arr is None else eta_arr[keep]
    sub = stats(arr[np.ix_(keep, keep)], h, u, sub_eta, covariance=covariance)
    m = np.zeros(n)
    m[keep] = sub.m
    cov = None
    if covariance:
        cov = np.zeros((n, n))
        cov[np.ix_(keep, keep)] = sub.cov
    return GibbsStats(m=m, cov=cov, log_z=sub.log_z)


def cavity_matrix(w, h: float, u: float = 1.0, eta=None) -> np.ndarray:
    """Row i holds m_(i), the magnetizations with spin i removed (entry (i, i) = 0)."""
    arr = _as_w(w)
    return np.array([cavity_stats(arr, h, [i], u, eta).m for i in range(arr.shape[0])])


def tap_residual(w, h: float, u: float = 1.0, eta=None, m: np.ndarray | None = None, cavities: np.ndarray | None = None) -> np.ndarray:
    """m_i - Tanh(sqrt(u) sum_k W_ik m_(i),k + sqrt(1-u) eta_i) for every i (n cavity enumerations)."""
    arr = _as_w(w)
    n = arr.shape[0]
    if m is None:
        m = stats(arr, h, u, eta, covariance=False).m
    if cavities is None:
        cavities = cavity_matrix(arr, h, u, eta)
    local = math.sqrt(u) * np.einsum("ik,ik->i", arr, cavities)
    if u < 1.0:
        local = local + math.sqrt(1.0 - u) * _eta_array(eta)
    return m - np.tanh(local + h)


def sample_replicas(w, h: float, u: float, eta, count: int, seed: int, index: int = 0) -> np.ndarray:
    """``count`` i.i.d. exact draws from G_u as rows of a (count, n) int8 array.

    Inverse CDF over configurations in ascending integer-word order.
    """
    arr = _as_w(w)
    n = arr.shape[0]
    _check_cap(n)
    b, c = _fields(n, h, u, eta)
    energies = _energies_by_word(arr, b, c)
    mx = energies.max()
    cdf = np.cumsum(np.exp(energies - mx))
    draws = rng.stream(seed, "replicas", index).random(count) * cdf[-1]
    words = np.minimum(np.searchsorted(cdf, draws, side="right"), len(cdf) - 1)
    return spins_from_words(words, n)


def overlap(profile: VarianceProfile, t: float, sigma1, sigma2) -> OverlapSample:
    """R12 = tS (sigma1 * sigma2)."""
    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if s1.shape != s2.shape or s1.shape[-1] != profile.n:
        raise ValueError("replica lengths must match the profile size")
    return OverlapSample(r12=t * profile.matvec(s1 * s2))


BURN_IN = 1000  # heuristic default; no mixing guarantee


def glauber_chain(
    w,
    h: float,
    sweeps: int,
    seed: int,
    burn_in: int = BURN_IN,
    u: float = 1.0,
    eta=None,
    thin: int = 1,
    index: int = 0,
) -> np.ndarray:
    """Heat-bath sweeps in site order 0..n-1; returns the post-burn-in states as (samples, n) int8.

    Heuristic fallback only: there is no mixing guarantee.
    """
    if not sweeps > burn_in >= 0:
        raise ValueError(f"need sweeps > burn_in >= 0, got sweeps={sweeps}, burn_in={burn_in}")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    arr = _as_w(w)
    n = arr.shape[0]
    b, c = _fields(n, h, u, eta)
    gen = rng.stream(seed, "glauber", index)
    sigma = np.where(gen.random(n) < 0.5, -1.0, 1.0)
    n_keep = (sweeps - burn_in + thin - 1) // thin
    out = np.empty((n_keep, n), dtype=np.int8)
    chunk = 4096
    kept = 0
    done = 0
    while done < sweeps:
        m = min(chunk, sweeps - done)
        uniforms = gen.random((m, n))
        buf = np.empty((m, n), dtype=np.int8)
        # burn-in and thinning phase measured in global sweep index
        first_keep = max(burn_in - done, 0)
        offset = (thin - (done + first_keep - burn_in) % thin) % thin if done + first_keep >= burn_in else 0
        got = _heat_bath(arr, b, c, sigma, uniforms, buf, first_keep + offset, thin)
        out[kept : kept + got] = buf[:got]
        kept += got
        done += m
    return out[:kept]


def empirical_stats(samples: np.ndarray) -> GibbsStats:
    x = np.asarray(samples, dtype=float)
    m = x.mean(axis=0)
    cov = x.T @ x / len(x) - np.outer(m, m)
    return GibbsStats(m=m, cov=cov, log_z=math.nan)
