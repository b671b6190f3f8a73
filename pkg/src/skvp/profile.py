"""Variance profiles: the deterministic matrix S whose entries set Var(W_ij) = t * s_ij."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import circulant, toeplitz

from . import rng

DENSE_MAX_N = 2048
PSI_SUM_TOL = 1e-12

KINDS = ("mean_field", "banded_toeplitz", "circulant", "sparse_random", "triplets")


@dataclass(frozen=True, eq=False)
class VarianceProfile:
    """Symmetric, nonnegative, zero-diagonal variance profile plus its sparsity metadata.

    ``entries`` is a dense ndarray for n <= 2048 and a CSR matrix (both
    triangles stored) above that. Use :meth:`dense`, :meth:`matvec` and
    :meth:`row_sums` rather than touching ``entries`` directly.
    """

    n: int
    entries: Any
    k_scale: int
    c_s: float
    row_norm: float
    max_row_support: int
    kind: str = "triplets"
    params: Mapping[str, Any] = field(default_factory=dict)
    psi: np.ndarray | None = None  # lag -> value, index 0..k (banded kinds only)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.entries)

    @property
    def c_card(self) -> int:
        return math.ceil(self.max_row_support / self.k_scale)

    @property
    def profile_id(self) -> str:
        args = ",".join(f"{k}={v}" for k, v in self.params.items() if k != "psi")
        return f"{self.kind}({args})"

    def dense(self) -> np.ndarray:
        if self.is_sparse:
            return self.entries.toarray()
        return self.entries

    @cached_property
    def support(self) -> np.ndarray:
        """Boolean n x n mask of nonzero entries."""
        return self.dense() > 0

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """S x for a vector, or row-wise S x_b for a (batch, n) array."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.entries @ x
        return np.asarray(self.entries @ x.T).T

    def row_sums(self) -> np.ndarray:
        if self.is_sparse:
            return np.asarray(self.entries.sum(axis=1)).ravel()
        return self.entries.sum(axis=1)

    def max_entry(self) -> float:
        if self.is_sparse:
            return float(self.entries.max()) if self.entries.nnz else 0.0
        return float(self.entries.max()) if self.n else 0.0

    def to_spec(self) -> dict:
        """JSON-compatible spec document that rebuilds this profile (not for ``triplets``)."""
        if self.kind == "triplets":
            raise ValueError("triplet profiles have no compact spec; export them with write_triplets")
        return {"kind": self.kind, **self.params}

    def triplets(self) -> list[tuple[int, int, float]]:
        """(i, j, s_ij) with i < j and s_ij != 0, lexicographic order."""
        upper = sp.triu(sp.csr_matrix(self.entries), k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[o]), int(upper.col[o]), float(upper.data[o])) for o in order]


@dataclass(frozen=True)
class AssumptionReport:
    ht_ok: bool
    ht_margin: float
    card_ok: bool
    klogn_ok: bool
    messages: list[str]


def from_matrix(
    s: np.ndarray | sp.spmatrix,
    k_scale: int,
    kind: str = "triplets",
    params: Mapping[str, Any] | None = None,
    psi: np.ndarray | None = None,
) -> VarianceProfile:
    """Validate ``s`` bit-exactly and wrap it with derived metadata."""
    if k_scale < 1:
        raise ValueError(f"k_scale must be a positive integer, got {k_scale}")
    if sp.issparse(s):
        mat = sp.csr_matrix(s, dtype=float)
        n = mat.shape[0]
        if mat.shape != (n, n):
            raise ValueError(f"profile must be square, got shape {mat.shape}")
        if (mat != mat.T).nnz:
            raise ValueError("profile is not symmetric")
        if np.any(mat.diagonal() != 0):
            raise ValueError("profile diagonal must be zero")
        if mat.nnz and np.any(mat.data < 0):
            raise ValueError("profile entries must be nonnegative")
        mat.eliminate_zeros()
    else:
        mat = np.array(s, dtype=float)
        n = mat.shape[0]
        if mat.ndim != 2 or mat.shape != (n, n):
            raise ValueError(f"profile must be square, got shape {mat.shape}")
        if not np.array_equal(mat, mat.T):
            raise ValueError("profile is not symmetric")
        if np.any(np.diag(mat) != 0):
            raise ValueError("profile diagonal must be zero")
        if np.any(mat < 0) or not np.all(np.isfinite(mat)):
            raise ValueError("profile entries must be finite and nonnegative")
    if n < 1:
        raise ValueError("profile must have n >= 1")

    if n > DENSE_MAX_N and not sp.issparse(mat):
        mat = sp.csr_matrix(mat)
    elif n <= DENSE_MAX_N and sp.issparse(mat):
        mat = mat.toarray()
    if sp.issparse(mat):
        mat.data.setflags(write=False)
        support = np.diff(mat.indptr)
    else:
        mat.setflags(write=False)
        support = np.count_nonzero(mat, axis=1)

    prof = VarianceProfile(
        n=n,
        entries=mat,
        k_scale=int(k_scale),
        c_s=0.0,
        row_norm=0.0,
        max_row_support=max(int(support.max()), 1),
        kind=kind,
        params=dict(params or {}),
        psi=None if psi is None else np.array(psi, dtype=float),
    )
    row_norm = float(prof.row_sums().max())
    object.__setattr__(prof, "row_norm", row_norm)
    object.__setattr__(prof, "c_s", k_scale * prof.max_entry())
    return prof


def build_mean_field(n: int) -> VarianceProfile:
    """Classical SK profile: s_ij = 1/n off the diagonal, K_n = n."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    s = np.full((n, n), 1.0 / n)
    np.fill_diagonal(s, 0.0)
    return from_matrix(s, k_scale=n, kind="mean_field", params={"n": n})


def uniform_psi(k: int) -> np.ndarray:
    """psi(i) = 1/(2k) on lags 1..k, returned as an array indexed by lag 0..k."""
    psi = np.full(k + 1, 1.0 / (2 * k))
    psi[0] = 0.0
    return psi


def triangular_psi(k: int) -> np.ndarray:
    """psi(i) proportional to k + 1 - i on lags 1..k, normalized so the lags sum to 1/2."""
    raw = np.arange(k, 0, -1, dtype=float)
    psi = np.zeros(k + 1)
    psi[1:] = raw / (2.0 * raw.sum())
    return psi


_PSI_SHAPES: dict[str, Callable[[int], np.ndarray]] = {
    "uniform": uniform_psi,
    "triangular": triangular_psi,
}


def _psi_array(psi: str | Sequence[float] | Mapping[int, float] | Callable[[int], float], k: int) -> np.ndarray:
    if isinstance(psi, str):
        try:
            return _PSI_SHAPES[psi](k)
        except KeyError:
            raise ValueError(f"unknown psi shape {psi!r}; expected one of {sorted(_PSI_SHAPES)}") from None
    if isinstance(psi, Mapping):
        bad = [lag for lag, v in psi.items() if v != 0 and not 1 <= int(lag) <= k]
        if bad:
            raise ValueError(f"psi support {sorted(bad)} exceeds lags [1..{k}]")
        out = np.zeros(k + 1)
        for lag, v in psi.items():
            if 1 <= int(lag) <= k:
                out[int(lag)] = float(v)
        return out
    if callable(psi):
        out = np.zeros(k + 1)
        out[1:] = [float(psi(i)) for i in range(1, k + 1)]
        return out
    vals = np.asarray(psi, dtype=float)
    if vals.ndim != 1:
        raise ValueError("psi sequence must be one-dimensional (values for lags 1..k)")
    if len(vals) > k and np.any(vals[k:] != 0):
        raise ValueError(f"psi support exceeds lags [1..{k}]")
    out = np.zeros(k + 1)
    out[1 : min(len(vals), k) + 1] = vals[:k]
    return out


def build_banded_toeplitz(
    n: int,
    psi: str | Sequence[float] | Mapping[int, float] | Callable[[int], float],
    k: int,
    c_s: float | None = None,
) -> VarianceProfile:
    """Banded Toeplitz profile s_ij = psi(|i - j|) with support on lags 1..k.

    ``psi`` is a shape name (``"uniform"``, ``"triangular"``), a sequence of
    values for lags 1..k, a mapping lag -> value, or a callable on lags.
    """
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    lags = _psi_array(psi, k)
    if np.any(lags < 0):
        raise ValueError("psi must be nonnegative")
    total = lags.sum()
    if abs(total - 0.5) > PSI_SUM_TOL:
        raise ValueError(f"psi must sum to 1/2 within {PSI_SUM_TOL:g}, got {total!r}")
    if c_s is not None and lags.max() > c_s / k:
        raise ValueError(f"max psi {lags.max()!r} exceeds c_s/k = {c_s / k!r}")
    col = np.zeros(n)
    col[: k + 1] = lags
    params: dict[str, Any] = {"n": n, "k": k, "psi": psi if isinstance(psi, str) else lags[1:].tolist()}
    return from_matrix(toeplitz(col), k_scale=k, kind="banded_toeplitz", params=params, psi=lags)


def build_circulant_deformation(profile: VarianceProfile) -> VarianceProfile:
    """Wrap a banded Toeplitz profile onto a circle, making it doubly stochastic."""
    if profile.psi is None or profile.kind != "banded_toeplitz":
        raise ValueError("circulant deformation needs a profile from build_banded_toeplitz")
    n, k = profile.n, profile.k_scale
    if 2 * k >= n:
        raise ValueError(f"need 2k < n for a non-overlapping wrap, got k={k}, n={n}")
    first = np.zeros(n)
    first[1 : k + 1] = profile.psi[1:]
    first[n - k :] = profile.psi[1:][::-1]
    params = dict(profile.params)
    return from_matrix(circulant(first), k_scale=k, kind="circulant", params=params, psi=profile.psi)


def build_sparse_random(n: int, k: int, degree_cap: int, seed: int) -> VarianceProfile:
    """Symmetric random graph with max degree ``degree_cap``; every edge carries 1/max(2k, degree_cap).

    Edges are added greedily over a seeded shuffle of all pairs, so the graph
    is close to ``degree_cap``-regular. The edge value is 1/(2k) whenever
    ``degree_cap <= 2k``, and is lowered otherwise so row sums stay <= 1.
    With ``degree_cap = n - 1`` and ``2k <= n - 1`` every pair is an edge with
    value 1/(n - 1).
    """
    if n < 2:
        raise ValueError("sparse_random needs n >= 2")
    if not 1 <= degree_cap <= n - 1:
        raise ValueError(f"need 1 <= degree_cap <= n - 1, got {degree_cap}")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    gen = rng.stream(seed, "profile.sparse_random", n, k, degree_cap)
    iu, ju = np.triu_indices(n, k=1)
    order = gen.permutation(len(iu))
    deg = np.zeros(n, dtype=np.int64)
    keep = np.zeros(len(iu), dtype=bool)
    for p in order:
        i, j = iu[p], ju[p]
        if deg[i] < degree_cap and deg[j] < degree_cap:
            keep[p] = True
            deg[i] += 1
            deg[j] += 1
    value = 1.0 / max(2 * k, degree_cap)
    rows, cols = iu[keep], ju[keep]
    data = np.full(len(rows), value)
    s = sp.coo_matrix(
        (np.concatenate([data, data]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    ).tocsr()
    params = {"n": n, "k": k, "degree_cap": degree_cap, "seed": seed}
    return from_matrix(s, k_scale=k, kind="sparse_random", params=params)


def validate(
    profile: VarianceProfile,
    t: float,
    c_card: float | None = None,
    c_s: float | None = None,
) -> AssumptionReport:
    """Check the high-temperature, cardinality and K_n >= log n conditions; never raises."""
    messages: list[str] = []
    threshold = math.log(2) / profile.row_norm if profile.row_norm > 0 else math.inf
    ht_ok = t < threshold
    if not ht_ok:
        messages.append(f"high-temperature condition fails: t={t} >= log(2)/row_norm={threshold:.6g}")
    card_ok = True
    if c_card is not None and profile.max_row_support > c_card * profile.k_scale:
        card_ok = False
        messages.append(
            f"row support {profile.max_row_support} exceeds c_card * K_n = {c_card * profile.k_scale}"
        )
    if c_s is not None and profile.c_s > c_s:
        card_ok = False
        messages.append(f"K_n * max s_ij = {profile.c_s:.6g} exceeds declared c_s = {c_s}")
    if profile.k_scale > profile.n:
        messages.append(f"K_n = {profile.k_scale} exceeds n = {profile.n}")
    klogn_ok = profile.k_scale >= math.log(profile.n)
    if not klogn_ok:
        messages.append(f"K_n = {profile.k_scale} < log(n) = {math.log(profile.n):.6g}")
    return AssumptionReport(
        ht_ok=ht_ok,
        ht_margin=threshold - t,
        card_ok=card_ok,
        klogn_ok=klogn_ok,
        messages=messages,
    )


def from_spec(spec: Mapping[str, Any]) -> VarianceProfile:
    """Build a profile from a ``kind``-discriminated spec document."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    allowed = {
        "mean_field": {"n"},
        "banded_toeplitz": {"n", "k", "psi", "c_s"},
        "circulant": {"n", "k", "psi", "c_s"},
        "sparse_random": {"n", "k", "degree_cap", "seed"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {sorted(allowed)}")
    unknown = set(spec) - allowed[kind]
    if unknown:
        raise ValueError(f"unknown keys for {kind} profile: {sorted(unknown)}")
    if kind == "mean_field":
        return build_mean_field(int(spec["n"]))
    if kind in ("banded_toeplitz", "circulant"):
        band = build_banded_toeplitz(int(spec["n"]), spec.get("psi", "uniform"), int(spec["k"]), spec.get("c_s"))
        return band if kind == "banded_toeplitz" else build_circulant_deformation(band)
    return build_sparse_random(int(spec["n"]), int(spec["k"]), int(spec["degree_cap"]), int(spec["seed"]))


def load_spec(path: str) -> VarianceProfile:
    with open(path) as fh:
        return from_spec(json.load(fh))


def from_triplets(n: int, triplets: Sequence[tuple[int, int, float]], k_scale: int) -> VarianceProfile:
    """Assemble a profile from (i, j, s_ij) upper-triangle triplets."""
    rows, cols, vals = [], [], []
    for i, j, v in triplets:
        i, j = int(i), int(j)
        if not 0 <= i < j < n:
            raise ValueError(f"triplet ({i}, {j}) must satisfy 0 <= i < j < n")
        rows += [i, j]
        cols += [j, i]
        vals += [float(v), float(v)]
    s = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return from_matrix(s, k_scale=k_scale, kind="triplets", params={"n": n, "k": k_scale})
