"""TAP-based AMP, its polynomial-activation variant, and the non-backtracking iteration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polyapprox import Polynomial
from .profile import VarianceProfile
from .sampler import CouplingMatrix
from .scalar import GaussianQuadrature, ModelParams, default_quadrature, iterate_q, onsager_coeff

NB_MAX_N = 2048


@dataclass(frozen=True, eq=False)
class AmpTrace:
    """x^0 .. x^k (unshifted arguments; the estimate of m is tanh(x^k + h))."""

    iterates: list[np.ndarray]
    onsager_used: list[np.ndarray]
    q_iterates: list[np.ndarray]
    params: ModelParams
    profile_id: str
    seed: int | None

    def estimate(self, k: int | None = None) -> np.ndarray:
        x = self.iterates[-1 if k is None else k]
        return self.params.tanh_shifted(x)


@dataclass(frozen=True, eq=False)
class PolyAmpTrace:
    iterates: list[np.ndarray]
    polynomial: Polynomial


@dataclass(frozen=True, eq=False)
class NbTrace:
    """``family`` is the last message level, entry (j, i) = message to i excluding j.

    ``finals[l]`` is the full (non-excluded) sum at level l, so ``finals[-1]``
    is the output of the last step; ``finals[0]`` is the zero vector.
    """

    family: np.ndarray
    finals: list[np.ndarray]

    @property
    def final(self) -> np.ndarray:
        return self.finals[-1]


def _w_array(w) -> tuple[np.ndarray, int | None]:
    if isinstance(w, CouplingMatrix):
        return w.w, w.seed
    return np.asarray(w, dtype=float), None


def _check_finite(x: np.ndarray, step: int, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{name} iterate {step} is not finite; t is likely far outside the high-temperature regime")


def amp_run(
    w,
    profile: VarianceProfile,
    params: ModelParams,
    quad: GaussianQuadrature | None = None,
    k: int = 12,
) -> AmpTrace:
    """x^{l+1} = W Tanh(x^l) - diag(tS1 - q^{l+1}) Tanh(x^{l-1}), from x^0 = 0, x^1 = W Tanh(0).

    Both forms of the Onsager coefficient are evaluated and cross-checked at
    every step.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    quad = quad or default_quadrature()
    arr, seed = _w_array(w)
    n = arr.shape[0]
    if n != profile.n:
        raise ValueError(f"coupling size {n} does not match profile size {profile.n}")
    q = iterate_q(profile, params, quad, k).q_iterates
    xs = [np.zeros(n), arr @ np.full(n, np.tanh(params.h))]
    _check_finite(xs[1], 1, "AMP")
    ons = []
    for l in range(1, k):
        coeff = onsager_coeff(profile, params, q[l], q[l + 1], quad)
        nxt = arr @ params.tanh_shifted(xs[l]) - coeff * params.tanh_shifted(xs[l - 1])
        _check_finite(nxt, l + 1, "AMP")
        ons.append(coeff)
        xs.append(nxt)
    return AmpTrace(iterates=xs, onsager_used=ons, q_iterates=q, params=params, profile_id=profile.profile_id, seed=seed)


def poly_amp_run(w, f: Polynomial, k: int) -> PolyAmpTrace:
    """z^{l+1} = W f(z^l) - diag((W*W) f'(z^l)) f(z^{l-1}), from z^0 = 0, z^1 = W f(0)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    arr, _ = _w_array(w)
    n = arr.shape[0]
    w2 = arr * arr
    df = f.deriv()
    zs = [np.zeros(n), arr @ np.full(n, f(0.0))]
    for l in range(1, k):
        nxt = arr @ f(zs[l]) - (w2 @ df(zs[l])) * f(zs[l - 1])
        _check_finite(nxt, l + 1, "polynomial AMP")
        zs.append(nxt)
    return PolyAmpTrace(iterates=zs, polynomial=f)


def nb_run(w, f: Polynomial, k: int) -> NbTrace:
    """Non-backtracking messages cz^{l+1}_{(j),i} = sum_{r != j} W_ir f(cz^l_{(i),r}).

    Each level costs O(n^2): the full row sum minus the excluded term.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    arr, _ = _w_array(w)
    n = arr.shape[0]
    if n > NB_MAX_N:
        raise ValueError(f"n={n} exceeds the non-backtracking memory cap {NB_MAX_N}")
    level = np.zeros((n, n))
    finals = [np.zeros(n)]
    for l in range(k):
        # msg[i, r] = W_ir f(cz_{(i),r})
        msg = arr * f(level)
        full = msg.sum(axis=1)
        _check_finite(full, l + 1, "non-backtracking")
        finals.append(full)
        if l < k - 1:
            level = full[None, :] - msg.T
    return NbTrace(family=level, finals=finals)


def amp_error(m_exact: np.ndarray, trace: AmpTrace, k: int) -> float:
    """||m - Tanh(x^k)||_n^2 = mean_i (m_i - tanh(x^k_i + h))^2."""
    m_exact = np.asarray(m_exact, dtype=float)
    if not 0 <= k < len(trace.iterates):
        raise ValueError(f"k={k} outside the trace (length {len(trace.iterates)})")
    est = trace.estimate(k)
    if est.shape != m_exact.shape:
        raise ValueError("m_exact and the AMP iterate have different lengths")
    return float(np.mean((m_exact - est) ** 2))
