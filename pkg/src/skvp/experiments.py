"""Config-driven experiments: one runner per desk-scale check, each producing CSV rows plus pass/fail checks."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import io
from .amp import amp_error, amp_run, nb_run, poly_amp_run
from .free_energy import asymptotic_free_energy, free_energy_at, scalar_free_energy
from .gibbs import cavity_matrix, log_partition, overlap, sample_replicas, stats, tap_residual
from .polyapprox import fit_tanh_poly, poly_state_evolution
from .profile import (
    VarianceProfile,
    build_circulant_deformation,
    build_mean_field,
    from_spec,
    validate,
)
from .sampler import sample_coupling, sample_coupling_pair, sample_field, spectral_report
from .scalar import LOG2, ModelParams, iterate_q, solve_fixed_point

EXPERIMENTS = (
    "fixed_point",
    "free_energy_gap",
    "amp_accuracy",
    "covariance_scaling",
    "overlap_concentration",
    "banded_convergence",
    "spectral_norm",
    "poly_bridge",
)

DEFAULT_TOLERANCES: dict[str, float] = {
    "fixed_point_tol": 1e-12,
    "stderr_fraction": 0.25,
    "separation_sigmas": 2.0,
    "fixture_rel": 0.2,
    "fixture_factor": 1.2,
    "stderr_multiple": 1.0,
    "ratio_lo": 1.5,
    "ratio_hi": 2.8,
    "slope_lo": -1.4,
    "slope_hi": -0.6,
    "min_fraction": 0.95,
    "envelope_factor": 10.0,
}


class ConfigError(ValueError):
    pass


class FixtureMissing(LookupError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    n_list: list[int]
    profile: dict = field(default_factory=lambda: {"kind": "mean_field"})
    k_list: list[int] = field(default_factory=list)
    pairing: str = "product"
    t_list: list[float] = field(default_factory=list)
    u_list: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0])
    e_list: list[float] = field(default_factory=lambda: [0.05, 0.01, 0.002])
    steps: list[int] = field(default_factory=lambda: [2, 4, 6, 8])
    nb_k_list: list[int] = field(default_factory=list)
    nb_steps: int = 4
    samples: int = 100
    max_samples: int | None = None
    replica_pairs: int = 100
    seed: int = 1
    delta: float = 0.1
    alpha_max: float = math.sqrt(2.0)
    reference: str = "asymptotic"
    output: str | None = None
    fixture_key: str | None = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        unknown = set(self.params) - {"t", "h"}
        if unknown or "t" not in self.params:
            raise ConfigError(f"params needs t (and optionally h); unknown keys {sorted(unknown)}")
        if not self.n_list:
            raise ConfigError("n_list must be nonempty")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.pairing not in ("product", "zip"):
            raise ConfigError(f"pairing must be 'product' or 'zip', got {self.pairing!r}")
        if self.pairing == "zip" and len(self.k_list) != len(self.n_list):
            raise ConfigError("pairing 'zip' needs k_list and n_list of equal length")
        if self.reference not in ("asymptotic", "scalar"):
            raise ConfigError(f"reference must be 'asymptotic' or 'scalar', got {self.reference!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        bad_tol = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if bad_tol:
            raise ConfigError(f"unknown tolerance keys {sorted(bad_tol)}")

    @property
    def model(self) -> ModelParams:
        return ModelParams(t=float(self.params["t"]), h=float(self.params.get("h", 0.0)))

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def cells(self) -> list[tuple[int, int | None]]:
        if not self.k_list:
            return [(n, None) for n in self.n_list]
        if self.pairing == "zip":
            return list(zip(self.n_list, self.k_list))
        return [(n, k) for n in self.n_list for k in self.k_list]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class ExperimentResult:
    name: str
    header: list[str]
    rows: list[list[Any]]
    checks: list[Check] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    extra_tables: dict[str, tuple[list[str], list[list[Any]]]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def column(self, name: str) -> list[Any]:
        i = self.header.index(name)
        return [r[i] for r in self.rows]

    def write(self, out_dir: str | Path, filename: str | None = None, meta: dict | None = None) -> Path:
        out_dir = Path(out_dir)
        path = out_dir / (filename or f"{self.name}.csv")
        io.write_csv(path, self.header, self.rows, meta)
        for suffix, (hdr, rows) in self.extra_tables.items():
            io.write_csv(path.with_name(f"{path.stem}_{suffix}.csv"), hdr, rows, meta)
        return path


# --------------------------------------------------------------------------- helpers


def build_profile(spec: dict, n: int, k: int | None, seed: int) -> VarianceProfile:
    """Instantiate a profile spec for one (n, k) cell.

    Cell values override n/k in the spec. For ``sparse_random`` a missing
    ``degree_cap`` defaults to min(2k, n - 1), a missing seed to the master
    seed, and k >= n selects the mean-field profile (K_n = n).
    """
    spec = dict(spec)
    spec["n"] = n
    kind = spec.get("kind")
    if k is not None and kind != "mean_field":
        spec["k"] = k
    if kind == "sparse_random":
        if spec["k"] >= n:
            return build_mean_field(n)
        spec.setdefault("degree_cap", min(2 * spec["k"], n - 1))
        spec.setdefault("seed", seed)
    return from_spec(spec)


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map; fans out over processes when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def mean_se(values: Iterable[float]) -> tuple[float, float]:
    arr = np.asarray(list(values), dtype=float)
    if len(arr) < 2:
        return float(arr.mean()), math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(len(arr)))


def strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def default_fixture_path() -> Path:
    return Path(str(resources.files("skvp") / "data" / "fixtures.json"))


def load_fixtures(path: str | Path | None = None) -> dict:
    path = Path(path) if path else default_fixture_path()
    if not path.exists():
        raise FixtureMissing(f"fixture file {path} not found; run `skvp fixtures calibrate`")
    with open(path) as fh:
        return json.load(fh)


def _fixture(fixtures: dict | None, key: str | None) -> dict | None:
    if key is None or fixtures is None:
        return None
    if key not in fixtures.get("entries", {}):
        raise FixtureMissing(f"fixture {key!r} missing; run `skvp fixtures calibrate`")
    return fixtures["entries"][key]


# --------------------------------------------------------------------------- runners


def run_fixed_point(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    """Solve the state evolution from two starts for every cell and t; report convergence and uniqueness."""
    tol = cfg.tol("fixed_point_tol")
    base = cfg.model
    t_values = cfg.t_list or [base.t]
    header = [
        "n", "k_scale", "t", "h", "start", "iterations", "residual", "converged",
        "q_min", "q_max", "constancy_dev", "contraction_est",
    ]
    rows, checks, q_stars = [], [], {}
    for n, k in cfg.cells():
        prof = build_profile(cfg.profile, n, k, cfg.seed)
        counts = []
        for t in t_values:
            params = ModelParams(t=t, h=base.h)
            report = validate(prof, t)
            sols = {}
            for start, q0 in (("zero", None), ("log2", np.full(n, LOG2))):
                se = solve_fixed_point(prof, params, tol=tol, override=not report.ht_ok, q0=q0)
                sols[start] = se
                diffs = [np.max(np.abs(b - a)) for a, b in zip(se.q_iterates, se.q_iterates[1:])]
                ratios = [d2 / d1 for d1, d2 in zip(diffs, diffs[1:]) if d1 > 1e-9 and d2 > 0]
                rate = float(np.median(ratios[-10:])) if ratios else 0.0
                q = se.q_star
                rows.append([
                    n, prof.k_scale, t, base.h, start, se.iterations, se.residual, se.converged,
                    float(q.min()), float(q.max()), float(q.max() - q.min()), rate,
                ])
            counts.append(sols["zero"].iterations)
            q_stars[f"n={n},k={prof.k_scale},t={t!r}"] = sols["zero"].q_star.tolist()
            both = all(s.converged for s in sols.values())
            checks.append(Check(f"converged n={n} t={t:g}", both, f"residuals {[s.residual for s in sols.values()]}"))
            dev = float(np.max(np.abs(sols["zero"].q_star - sols["log2"].q_star)))
            checks.append(Check(f"unique fixed point n={n} t={t:g}", dev <= 2 * tol, f"start-to-start deviation {dev:.3g}"))
            if prof.kind == "circulant":
                cdev = float(np.ptp(sols["zero"].q_star))
                checks.append(Check(f"constant fixed point n={n} t={t:g}", cdev <= tol, f"max-min {cdev:.3g}"))
        if len(t_values) > 1:
            order = np.argsort(t_values)
            grows = all(counts[b] >= counts[a] for a, b in zip(order, order[1:]))
            checks.append(Check(f"iteration count grows with t (n={n})", grows, f"iterations {counts}"))
    return ExperimentResult("fixed_point", header, rows, checks, {"q_star": q_stars})


def _log_z_draws(args) -> float:
    spec, n, k, seed, t, h, replica = args
    prof = build_profile(spec, n, k, seed)
    return log_partition(sample_coupling(prof, t, seed, replica), h) / n


def _reference_free_energy(cfg: ExperimentConfig, prof: VarianceProfile) -> float:
    if cfg.reference == "scalar":
        return scalar_free_energy(cfg.model)
    return asymptotic_free_energy(prof, cfg.model)


def run_free_energy_gap(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    """Quenched F_n by enumeration vs the asymptotic (or scalar) formula, per cell.

    Draw counts start at ``samples`` and double (prefix-consistent) until each
    stderr is below stderr_fraction * |gap(first cell)| and consecutive gaps
    are separated by separation_sigmas combined stderrs, capped at ``max_samples``.
    """
    p = cfg.model
    cells = cfg.cells()
    profs = [build_profile(cfg.profile, n, k, cfg.seed) for n, k in cells]
    refs = [_reference_free_energy(cfg, prof) for prof in profs]
    cap = max(cfg.max_samples or cfg.samples, cfg.samples)
    draws: list[list[float]] = [[] for _ in cells]
    target = cfg.samples
    frac, sep = cfg.tol("stderr_fraction"), cfg.tol("separation_sigmas")
    while True:
        for c, (n, k) in enumerate(cells):
            start = len(draws[c])
            items = [(cfg.profile, n, k, cfg.seed, p.t, p.h, r) for r in range(start, target)]
            draws[c].extend(parallel_map(_log_z_draws, items, jobs))
        est = [mean_se(d) for d in draws]
        gaps = [m - ref for (m, _), ref in zip(est, refs)]
        ses = [se for _, se in est]
        ok_se = all(se < frac * abs(gaps[0]) for se in ses)
        ok_sep = all(
            abs(abs(a) - abs(b)) >= sep * math.hypot(sa, sb)
            for a, b, sa, sb in zip(gaps, gaps[1:], ses, ses[1:])
        )
        if (ok_se and ok_sep) or target >= cap:
            break
        target = min(2 * target, cap)

    header = ["n", "t", "h", "profile_kind", "k_scale", "bold_f", "f_hat", "f_stderr", "gap", "samples", "seed"]
    rows = [
        [prof.n, p.t, p.h, prof.kind, prof.k_scale, ref, m, se, gap, len(d), cfg.seed]
        for prof, ref, (m, se), gap, d in zip(profs, refs, est, gaps, draws)
    ]
    abs_gaps = [abs(g) for g in gaps]
    checks = [
        Check("|gap| strictly decreasing", strictly_decreasing(abs_gaps), f"|gap| = {[f'{g:.3e}' for g in abs_gaps]}"),
        Check(
            f"stderr < {frac:g} |gap(first)|",
            ok_se,
            f"stderr = {[f'{s:.2e}' for s in ses]}, bound {frac * abs_gaps[0]:.2e}",
        ),
    ]
    fx = _fixture(fixtures, cfg.fixture_key)
    if fx is not None:
        rel = cfg.tol("fixture_rel")
        for n, g, ref_g in zip([c[0] for c in cells], gaps, fx["gap"]):
            checks.append(Check(
                f"gap n={n} within {rel:.0%} of fixture",
                abs(g - ref_g) <= rel * abs(ref_g),
                f"gap {g:.4e} vs fixture {ref_g:.4e}",
            ))
    summary = {"gap": gaps, "stderr": ses, "samples": [len(d) for d in draws]}
    return ExperimentResult("free_energy_gap", header, rows, checks, summary)


def _amp_errors(args) -> list[float]:
    spec, n, k, seed, t, h, replica, steps = args
    prof = build_profile(spec, n, k, seed)
    params = ModelParams(t=t, h=h)
    w = sample_coupling(prof, t, seed, replica)
    m = stats(w, h, covariance=False).m
    trace = amp_run(w, prof, params, k=max(steps))
    return [amp_error(m, trace, s) for s in steps]


def run_amp_accuracy(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    """AMP error ||m - Tanh(x^k)||_n^2 against enumerated m, per disorder seed and step."""
    p = cfg.model
    n, k = cfg.cells()[0]
    steps = sorted(cfg.steps)
    items = [(cfg.profile, n, k, cfg.seed, p.t, p.h, r, steps) for r in range(cfg.samples)]
    errs = np.array(parallel_map(_amp_errors, items, jobs))
    rows = [[r, s, errs[r, j]] for r in range(cfg.samples) for j, s in enumerate(steps)]
    agg = [mean_se(errs[:, j]) for j in range(len(steps))]
    agg_rows = [[s, m, se, cfg.samples] for s, (m, se) in zip(steps, agg)]
    mult = cfg.tol("stderr_multiple")
    slack_ok = []
    for (m1, s1), (m2, s2) in zip(agg, agg[1:]):
        slack_ok.append(m2 <= m1 + mult * math.hypot(s1, s2))
    checks = [Check(
        "AMP error non-increasing in k within one stderr",
        all(slack_ok),
        "means " + ", ".join(f"k={s}: {m:.3e}±{se:.1e}" for s, (m, se) in zip(steps, agg)),
    )]
    fx = _fixture(fixtures, cfg.fixture_key)
    if fx is not None:
        factor = cfg.tol("fixture_factor")
        plateau = agg[-1][0]
        checks.append(Check(
            f"plateau <= {factor:g} x fixture",
            plateau <= factor * fx["plateau"],
            f"plateau {plateau:.4e} vs fixture {fx['plateau']:.4e}",
        ))
    summary = {"steps": steps, "mean": [a[0] for a in agg], "stderr": [a[1] for a in agg], "plateau": agg[-1][0]}
    return ExperimentResult(
        "amp_accuracy", ["seed", "k", "amp_error"], rows, checks, summary,
        extra_tables={"summary": (["k", "amp_error", "stderr", "seeds"], agg_rows)},
    )


def _covariance_cell(args) -> tuple[float, float, float, float]:
    spec, n, k, seed, t, h, replica = args
    prof = build_profile(spec, n, k, seed)
    w = sample_coupling(prof, t, seed, replica)
    st = stats(w, h)
    cav = cavity_matrix(w, h)
    upper = np.triu(prof.support, k=1)
    mij2 = float(np.mean(st.cov[upper] ** 2))
    tap = float(np.mean(tap_residual(w, h, m=st.m, cavities=cav) ** 2))
    off = ~np.eye(n, dtype=bool)
    shift = (st.m[None, :] - cav) ** 2
    shift_all = float(np.mean(shift[off]))
    shift_nb = float(np.mean(shift[prof.support]))
    return mij2, tap, shift_all, shift_nb


def _loglog_slope(ks: Sequence[float], values: Sequence[float]) -> float:
    return float(np.polyfit(np.log(ks), np.log(values), 1)[0])


def run_covariance_scaling(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    """Mean squared covariances over coupled pairs, squared TAP residuals and cavity shifts, per K_n."""
    p = cfg.model
    header = [
        "n", "k_scale", "t", "h", "seeds", "mean_mij2", "se_mij2", "mean_tap2", "se_tap2",
        "mean_cavity_shift2", "mean_cavity_shift2_coupled",
    ]
    rows, ks, mij, taps = [], [], [], []
    for n, k in cfg.cells():
        prof = build_profile(cfg.profile, n, k, cfg.seed)
        items = [(cfg.profile, n, k, cfg.seed, p.t, p.h, r) for r in range(cfg.samples)]
        vals = np.array(parallel_map(_covariance_cell, items, jobs))
        m1, s1 = mean_se(vals[:, 0])
        m2, s2 = mean_se(vals[:, 1])
        rows.append([n, prof.k_scale, p.t, p.h, cfg.samples, m1, s1, m2, s2, float(vals[:, 2].mean()), float(vals[:, 3].mean())])
        ks.append(prof.k_scale)
        mij.append(m1)
        taps.append(m2)
    slope = _loglog_slope(ks, mij) if len(ks) > 1 else math.nan
    checks = []
    if len(ks) > 1:
        ratios = [a / b for a, b in zip(mij, mij[1:])]
        lo, hi = cfg.tol("ratio_lo"), cfg.tol("ratio_hi")
        checks.append(Check(
            f"E m_ij^2 ratio per K doubling in [{lo:g}, {hi:g}]",
            all(lo <= r <= hi for r in ratios),
            f"ratios {[f'{r:.3f}' for r in ratios]}",
        ))
        slo, shi = cfg.tol("slope_lo"), cfg.tol("slope_hi")
        checks.append(Check(f"log-log slope in [{slo:g}, {shi:g}]", slo <= slope <= shi, f"slope {slope:.3f}"))
        checks.append(Check("TAP residual decreasing in K", strictly_decreasing(taps), f"{[f'{v:.3e}' for v in taps]}"))
    fx = _fixture(fixtures, cfg.fixture_key)
    if fx is not None:
        factor = cfg.tol("fixture_factor")
        checks.append(Check(
            f"TAP residual <= {factor:g} x fixture",
            all(v <= factor * f for v, f in zip(taps, fx["tap2"])),
            f"{[f'{v:.3e}' for v in taps]} vs fixture {[f'{f:.3e}' for f in fx['tap2']]}",
        ))
    summary = {"k_scale": ks, "mean_mij2": mij, "tap2": taps, "slope": slope}
    return ExperimentResult("covariance_scaling", header, rows, checks, summary)


def _overlap_cell(args) -> list[float]:
    spec, n, k, seed, t, h, replica, u_list, pairs, q_star = args
    prof = build_profile(spec, n, k, seed)
    q_star = np.asarray(q_star)
    w = sample_coupling(prof, t, seed, replica)
    eta = sample_field(q_star, seed, replica)
    out = []
    for j, u in enumerate(u_list):
        reps = sample_replicas(w, h, u, eta, 2 * pairs, seed, index=replica * len(u_list) + j)
        r12 = overlap(prof, t, reps[0::2], reps[1::2]).r12
        out.append(float(np.mean((r12 - q_star) ** 2)))
    return out


def run_overlap_concentration(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    """E <||R12 - q*||_n^2>_u from exact replica pairs under G_u, for each u and K_n."""
    p = cfg.model
    header = ["n", "k_scale", "u", "seeds", "pairs", "mean_r12_dev2", "se"]
    rows = []
    by_u: dict[float, list[float]] = {u: [] for u in cfg.u_list}
    for n, k in cfg.cells():
        prof = build_profile(cfg.profile, n, k, cfg.seed)
        q_star = solve_fixed_point(prof, p).q_star
        items = [
            (cfg.profile, n, k, cfg.seed, p.t, p.h, r, list(cfg.u_list), cfg.replica_pairs, q_star.tolist())
            for r in range(cfg.samples)
        ]
        vals = np.array(parallel_map(_overlap_cell, items, jobs))
        for j, u in enumerate(cfg.u_list):
            m, se = mean_se(vals[:, j])
            rows.append([n, prof.k_scale, u, cfg.samples, cfg.replica_pairs, m, se])
            by_u[u].append(m)
    checks = []
    if len(cfg.cells()) > 1:
        for u, vals in by_u.items():
            checks.append(Check(f"R12 deviation decreasing in K at u={u:g}", strictly_decreasing(vals), f"{[f'{v:.3e}' for v in vals]}"))
    return ExperimentResult("overlap_concentration", header, rows, checks, {"by_u": {str(u): v for u, v in by_u.items()}})


def _banded_cell(args) -> tuple[float, float]:
    spec, n, k, seed, t, h, replica = args
    band = build_profile(spec, n, k, seed)
    circ = build_circulant_deformation(band)
    w, w_c = sample_coupling_pair(band, circ, t, seed, replica)
    return log_partition(w, h) / n, log_partition(w_c, h) / n


def run_banded_convergence(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    """Banded Toeplitz free energy vs the scalar formula, and vs its circulant deformation on a shared GOE draw.

    The coupled difference F~ - F must lie in [0, t K / (2n)] (up to Monte Carlo error).
    """
    p = cfg.model
    spec = dict(cfg.profile, kind="banded_toeplitz")
    scalar = scalar_free_energy(p)
    header = [
        "n", "k_scale", "t", "h", "samples", "scalar_f", "f_hat_band", "se_band", "gap_scalar",
        "f_hat_circ", "coupled_diff", "se_diff", "jensen_bound",
    ]
    rows, gaps, checks = [], [], []
    for n, k in cfg.cells():
        items = [(spec, n, k, cfg.seed, p.t, p.h, r) for r in range(cfg.samples)]
        vals = np.array(parallel_map(_banded_cell, items, jobs))
        mb, sb = mean_se(vals[:, 0])
        mc, _ = mean_se(vals[:, 1])
        md, sd = mean_se(vals[:, 1] - vals[:, 0])
        bound = p.t * k / (2 * n)
        rows.append([n, k, p.t, p.h, cfg.samples, scalar, mb, sb, mb - scalar, mc, md, sd, bound])
        gaps.append(abs(mb - scalar))
        checks.append(Check(
            f"0 <= F~ - F <= tK/(2n) at n={n}, k={k}",
            -3 * sd <= md <= bound + 3 * sd,
            f"diff {md:.4e} ± {sd:.1e}, bound {bound:.4e}",
        ))
    if len(gaps) > 1:
        checks.append(Check("gap to scalar formula decreasing in k", strictly_decreasing(gaps), f"{[f'{g:.3e}' for g in gaps]}"))
    return ExperimentResult("banded_convergence", header, rows, checks, {"gap_scalar": gaps})


def _spectral_cell(args) -> list[Any]:
    spec, n, k, seed, t, delta, replica = args
    prof = build_profile(spec, n, k, seed)
    rep = spectral_report(sample_coupling(prof, t, seed, replica), prof, delta)
    return [rep.norm_estimate, rep.bound_T, rep.bound_T_unscaled, rep.within_bound,
            rep.norm_estimate <= rep.bound_T_unscaled, rep.converged, rep.iterations]


def run_spectral_norm(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    """Power-iteration ||W|| against the concentration bound T, for both max-entry conventions."""
    p = cfg.model
    header = ["n", "k_scale", "seed", "replica", "norm", "bound_T", "bound_T_unscaled", "within", "within_unscaled", "converged", "iterations"]
    rows, checks, fractions = [], [], {}
    for n, k in cfg.cells():
        prof = build_profile(cfg.profile, n, k, cfg.seed)
        items = [(cfg.profile, n, k, cfg.seed, p.t, cfg.delta, r) for r in range(cfg.samples)]
        res = parallel_map(_spectral_cell, items, jobs)
        for r, vals in enumerate(res):
            rows.append([n, prof.k_scale, cfg.seed, r, *vals])
        frac = float(np.mean([v[3] for v in res]))
        fractions[str(n)] = frac
        need = cfg.tol("min_fraction")
        checks.append(Check(f"fraction within bound n={n} >= {need:g}", frac >= need, f"{frac:.3f}"))
    return ExperimentResult("spectral_norm", header, rows, checks, {"fraction_within": fractions})


def _bridge_cell(args) -> list[float]:
    spec, n, k, seed, t, h, replica, steps, coeff_list, delta = args
    from .polyapprox import Polynomial

    prof = build_profile(spec, n, k, seed)
    params = ModelParams(t=t, h=h)
    w = sample_coupling(prof, t, seed, replica)
    event = spectral_report(w, prof, delta).within_bound
    x = amp_run(w, prof, params, k=steps).iterates[steps]
    out = [float(event)]
    for coeffs in coeff_list:
        z = poly_amp_run(w, Polynomial(np.array(coeffs)), steps).iterates[steps]
        out.append(float(np.mean((z - x) ** 2)) * event)
    return out


def _nb_cell(args) -> float:
    spec, n, k, seed, t, replica, steps, coeffs = args
    from .polyapprox import Polynomial

    prof = build_profile(spec, n, k, seed)
    w = sample_coupling(prof, t, seed, replica)
    f = Polynomial(np.array(coeffs))
    z = poly_amp_run(w, f, steps).iterates[steps]
    return float(np.mean((nb_run(w, f, steps).final - z) ** 2))


def run_poly_bridge(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    """Polynomial-activation AMP vs Tanh AMP over an e ladder, the polynomial state-evolution envelope,
    and the non-backtracking vs polynomial AMP gap across K_n.

    The event ||W|| <= C_W uses C_W = T (the spectral bound at ``delta``).
    """
    p = cfg.model
    n, k = cfg.cells()[0]
    prof = build_profile(cfg.profile, n, k, cfg.seed)
    steps = max(cfg.steps)
    polys = [fit_tanh_poly(e, cfg.alpha_max, p) for e in cfg.e_list]
    coeff_list = [f.to_list() for f in polys]
    items = [(cfg.profile, n, k, cfg.seed, p.t, p.h, r, steps, coeff_list, cfg.delta) for r in range(cfg.samples)]
    vals = np.array(parallel_map(_bridge_cell, items, jobs))
    event_frac = float(vals[:, 0].mean())

    se_len = max(steps, 20)
    q = iterate_q(prof, p, k=se_len).q_iterates
    header = ["e", "degree", "samples", "event_fraction", "mean_bridge_gap", "se_bridge_gap", "cq_max_dev", "cq_max", "envelope"]
    rows, bridge, checks = [], [], []
    factor = cfg.tol("envelope_factor")
    for j, (e, f) in enumerate(zip(cfg.e_list, polys)):
        m, se = mean_se(vals[:, j + 1])
        cq = poly_state_evolution(prof, p, f, k=se_len).cq_iterates
        dev = max(float(np.max(np.abs(a - b))) for a, b in zip(cq, q))
        cq_max = max(float(np.max(c)) for c in cq)
        env = factor * math.sqrt(e)
        rows.append([e, f.degree, cfg.samples, event_frac, m, se, dev, cq_max, env])
        bridge.append(m)
        checks.append(Check(f"cq within {factor:g} sqrt(e) of q (e={e:g})", dev <= env, f"max dev {dev:.3e} vs {env:.3e}"))
        checks.append(Check(f"cq bounded by 1 (e={e:g})", cq_max <= 1.0, f"max {cq_max:.3e}"))
    order = np.argsort(cfg.e_list)[::-1]
    ladder = [bridge[i] for i in order]
    checks.append(Check("bridge gap decreasing as e shrinks", strictly_decreasing(ladder), f"{[f'{v:.3e}' for v in ladder]}"))

    nb_rows, nb_gaps = [], []
    if cfg.nb_k_list:
        f = polys[int(np.argmin(cfg.e_list))]
        for kk in cfg.nb_k_list:
            spec = {"kind": "sparse_random"}
            kprof = build_profile(spec, n, kk, cfg.seed)
            nb_items = [(spec, n, kk, cfg.seed, p.t, r, cfg.nb_steps, f.to_list()) for r in range(cfg.samples)]
            g = np.array(parallel_map(_nb_cell, nb_items, jobs))
            m, se = mean_se(g)
            nb_rows.append([n, kprof.k_scale, kprof.kind, cfg.nb_steps, cfg.samples, m, se])
            nb_gaps.append(m)
        checks.append(Check("NB vs polynomial AMP gap decreasing in K", strictly_decreasing(nb_gaps), f"{[f'{v:.3e}' for v in nb_gaps]}"))
    summary = {"bridge_gap": bridge, "nb_gap": nb_gaps, "degrees": [f.degree for f in polys], "event_fraction": event_frac}
    extra = {"nb": (["n", "k_scale", "profile_kind", "steps", "samples", "mean_nb_gap", "se"], nb_rows)} if nb_rows else {}
    return ExperimentResult("poly_bridge", header, rows, checks, summary, extra)


RUNNERS: dict[str, Callable[..., ExperimentResult]] = {
    "fixed_point": run_fixed_point,
    "free_energy_gap": run_free_energy_gap,
    "amp_accuracy": run_amp_accuracy,
    "covariance_scaling": run_covariance_scaling,
    "overlap_concentration": run_overlap_concentration,
    "banded_convergence": run_banded_convergence,
    "spectral_norm": run_spectral_norm,
    "poly_bridge": run_poly_bridge,
}


def run(cfg: ExperimentConfig, jobs: int = 1, fixtures: dict | None = None) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg, jobs=jobs, fixtures=fixtures)


def packaged_config(name: str) -> ExperimentConfig:
    """Load one of the bundled acceptance configs (``skvp/configs/<name>.json``)."""
    path = resources.files("skvp") / "configs" / f"{name}.json"
    return ExperimentConfig.from_dict(json.loads(path.read_text()))


def packaged_config_names() -> list[str]:
    return sorted(p.name[:-5] for p in (resources.files("skvp") / "configs").iterdir() if p.name.endswith(".json"))


# --------------------------------------------------------------------------- fixtures

FIXTURE_VERSION = 1


def _quad_gauss(phi: Callable[[float], float]) -> float:
    from scipy import integrate

    dens = lambda z: phi(z) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return integrate.quad(dens, -math.inf, math.inf, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def oracle_g(x: float, h: float) -> float:
    """E tanh(sqrt(x) xi + h)^2 by adaptive quadrature."""
    return _quad_gauss(lambda z: math.tanh(math.sqrt(x) * z + h) ** 2)


def oracle_logcosh(x: float, h: float) -> float:
    return _quad_gauss(lambda z: np.logaddexp(0.0, -2 * abs(math.sqrt(x) * z + h)) + abs(math.sqrt(x) * z + h) - LOG2)


def oracle_scalar_q(t: float, h: float, row: float = 1.0) -> float:
    """Root of q = t * row * g(q) by bisection on the adaptive-quadrature g."""
    from scipy import optimize

    if t * row * oracle_g(0.0, h) == 0.0:
        return 0.0
    return optimize.bisect(lambda q: q - t * row * oracle_g(q, h), 0.0, t * row, xtol=1e-14, rtol=1e-15)


def oracle_constant_row_free_energy(t: float, h: float, row: float = 1.0) -> float:
    """Free energy formula for a profile with constant row sums ``row`` (q* is then constant)."""
    q = oracle_scalar_q(t, h, row)
    g = oracle_g(q, h)
    return LOG2 + oracle_logcosh(q, h) + t * row / 4 * (1 - g) ** 2


def _tap_mean_field(args) -> float:
    n, t, h, seed, replica = args
    w = sample_coupling(build_mean_field(n), t, seed, replica)
    return float(np.mean(tap_residual(w, h) ** 2))


def calibrate_fixtures(jobs: int = 1, log: Callable[[str], None] = lambda s: None) -> dict:
    """Run every calibration (oracles plus the fixture-keyed bundled configs) and return the fixture document."""
    entries: dict[str, Any] = {}
    t, h = 0.5, 0.3
    entries["oracles"] = {
        "g_h0.3_x0.25": oracle_g(0.25, 0.3),
        "qbar_t0.5_h0.3": oracle_scalar_q(t, h),
        "scalar_f_t0.5_h0.3": oracle_constant_row_free_energy(t, h),
        "mean_field_n12_f_t0.5_h0.3": oracle_constant_row_free_energy(t, h, 11 / 12),
    }
    log("oracles done")
    prof12 = build_mean_field(12)
    ref = asymptotic_free_energy(prof12, ModelParams(t, h))
    vals = [_log_z_draws(({"kind": "mean_field"}, 12, None, 12, t, h, r)) for r in range(400)]
    m, se = mean_se(vals)
    entries["mean_field_n12_mc"] = {"seed": 12, "samples": 400, "gap": m - ref, "stderr": se}
    taps = parallel_map(_tap_mean_field, [(14, 0.4, 0.3, 14, r) for r in range(50)], jobs)
    entries["tap_mean_field_n14"] = {"seed": 14, "seeds": 50, "mean_tap2": float(np.mean(taps))}
    log("scalar fixtures done")
    for name in packaged_config_names():
        cfg = packaged_config(name)
        if cfg.fixture_key is None:
            continue
        res = run(cfg, jobs=jobs)
        if cfg.experiment == "free_energy_gap":
            entries[cfg.fixture_key] = {k: res.summary[k] for k in ("gap", "stderr", "samples")}
        elif cfg.experiment == "amp_accuracy":
            entries[cfg.fixture_key] = {"plateau": res.summary["plateau"], "mean": res.summary["mean"]}
        elif cfg.experiment == "covariance_scaling":
            entries[cfg.fixture_key] = {"tap2": res.summary["tap2"], "mean_mij2": res.summary["mean_mij2"]}
        log(f"{name} done")
    return {"version": FIXTURE_VERSION, "entries": entries}
