import json
import math

import numpy as np
import pytest
from scipy import integrate, optimize

from skvp.free_energy import (
    FixedPointNotConverged,
    asymptotic_free_energy,
    mc_free_energy,
    mc_log_partitions,
    scalar_free_energy,
)
from skvp.gibbs import log_partition
from skvp.profile import build_banded_toeplitz, build_circulant_deformation, build_mean_field, build_sparse_random
from skvp.sampler import sample_coupling
from skvp.scalar import LOG2, ModelParams

CORPUS = [
    build_mean_field(8),
    build_banded_toeplitz(12, "uniform", 3),
    build_circulant_deformation(build_banded_toeplitz(12, "triangular", 3)),
    build_sparse_random(10, 2, 4, seed=1),
]


def gauss(phi):
    dens = lambda z: phi(z) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    return integrate.quad(dens, -37, 37, epsabs=1e-14, epsrel=1e-13, limit=400)[0]


def logcosh(y):
    return abs(y) + math.log1p(math.exp(-2 * abs(y))) - LOG2


def constant_row_formula(t, h, row):
    """Independent evaluation of the free-energy formula when every row of S sums to ``row``."""
    g = lambda q: gauss(lambda z: math.tanh(math.sqrt(q) * z + h) ** 2)
    q = optimize.bisect(lambda q: q - t * row * g(q), 0.0, t * row, xtol=1e-14)
    return LOG2 + gauss(lambda z: logcosh(math.sqrt(q) * z + h)) + t * row / 4 * (1 - g(q)) ** 2


class TestAsymptotic:
    @pytest.mark.parametrize("prof", CORPUS, ids=lambda p: p.kind)
    @pytest.mark.parametrize("h", [0.0, 0.3, 1.0])
    def test_zero_temperature(self, prof, h):
        assert asymptotic_free_energy(prof, ModelParams(1e-10, h)) == pytest.approx(math.log(2 * math.cosh(h)), abs=1e-9)

    def test_doubly_stochastic_reduces_to_scalar(self):
        circ = build_circulant_deformation(build_banded_toeplitz(64, "uniform", 8))
        params = ModelParams(0.5, 0.3)
        assert asymptotic_free_energy(circ, params) == pytest.approx(scalar_free_energy(params), abs=1e-9)

    def test_mean_field_n12_against_independent_formula(self, frozen):
        val = asymptotic_free_energy(build_mean_field(12), ModelParams(0.5, 0.3))
        oracle = constant_row_formula(0.5, 0.3, 11 / 12)
        assert val == pytest.approx(oracle, abs=1e-10)
        assert val == pytest.approx(frozen["entries"]["oracles"]["mean_field_n12_f_t0.5_h0.3"], abs=1e-10)

    @pytest.mark.parametrize("prof", CORPUS, ids=lambda p: p.kind)
    def test_bounded(self, prof):
        for h in (-1.0, 0.0, 0.5):
            t = 0.9 * LOG2 / prof.row_norm
            bound = LOG2 + abs(h) + math.sqrt(2 / math.pi) * math.sqrt(LOG2) + t * prof.row_norm / 4 + 1
            assert abs(asymptotic_free_energy(prof, ModelParams(t, h))) <= bound

    def test_nonconvergence_carries_residual(self):
        with pytest.raises(FixedPointNotConverged) as info:
            asymptotic_free_energy(build_mean_field(10), ModelParams(0.5, 0.3), max_iter=1)
        assert info.value.residual > 0


class TestScalar:
    def test_small_t(self):
        assert scalar_free_energy(ModelParams(1e-10, 0.4)) == pytest.approx(math.log(2 * math.cosh(0.4)), abs=1e-9)

    def test_no_field(self):
        assert scalar_free_energy(ModelParams(0.1, 0.0)) == pytest.approx(LOG2 + 0.1 / 4, abs=1e-15)

    def test_fixture_and_oracle(self, frozen):
        val = scalar_free_energy(ModelParams(0.5, 0.3))
        assert val == pytest.approx(constant_row_formula(0.5, 0.3, 1.0), abs=1e-10)
        assert val == pytest.approx(frozen["entries"]["oracles"]["scalar_f_t0.5_h0.3"], abs=1e-10)

    def test_rejects_large_t(self):
        with pytest.raises(ValueError):
            scalar_free_energy(ModelParams(0.7, 0.3))


class TestMonteCarlo:
    @pytest.mark.parametrize("prof", CORPUS, ids=lambda p: p.kind)
    def test_zero_temperature(self, prof):
        rep = mc_free_energy(prof, ModelParams(1e-10, 0.3), samples=4, seed=1)
        assert rep.f_hat == pytest.approx(math.log(2 * math.cosh(0.3)), abs=1e-6)

    def test_single_spin(self):
        rep = mc_free_energy(build_mean_field(1), ModelParams(0.5, 0.7), samples=5, seed=1)
        assert rep.f_hat == pytest.approx(math.log(2 * math.cosh(0.7)), abs=1e-15)
        assert rep.f_stderr == 0.0

    def test_quenched_average_definition(self):
        prof = build_mean_field(6)
        params = ModelParams(0.5, 0.2)
        rep = mc_free_energy(prof, params, samples=20, seed=3)
        vals = [log_partition(sample_coupling(prof, 0.5, 3, r), 0.2) / 6 for r in range(20)]
        assert rep.f_hat == pytest.approx(np.mean(vals), abs=1e-15)
        assert rep.f_stderr == pytest.approx(np.std(vals, ddof=1) / math.sqrt(20), abs=1e-15)
        assert rep.gap == rep.f_hat - rep.bold_f
        # Jensen: quenched <= annealed
        annealed = math.log(np.mean(np.exp(np.array(vals) * 6))) / 6
        assert rep.f_hat <= annealed

    def test_prefix_consistent_draws(self):
        prof = build_mean_field(5)
        params = ModelParams(0.5, 0.1)
        np.testing.assert_array_equal(mc_log_partitions(prof, params, 10, 4)[:5], mc_log_partitions(prof, params, 5, 4))

    def test_mean_field_n12_fixture(self, frozen):
        fx = frozen["entries"]["mean_field_n12_mc"]
        rep = mc_free_energy(build_mean_field(12), ModelParams(0.5, 0.3), samples=fx["samples"], seed=fx["seed"])
        assert rep.gap == pytest.approx(fx["gap"], rel=0.2)
        assert rep.f_stderr == pytest.approx(fx["stderr"], rel=0.2)

    def test_report_export(self):
        rep = mc_free_energy(build_mean_field(4), ModelParams(0.5, 0.1), samples=3, seed=2)
        doc = json.loads(json.dumps(rep.to_dict()))
        assert set(doc) == {"bold_f", "f_hat", "f_stderr", "gap", "n", "t", "h", "samples", "seed"}

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            mc_free_energy(build_mean_field(4), ModelParams(0.5, 0.1), samples=1, seed=2)
