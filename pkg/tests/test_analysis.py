import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from unbiased_mvsde import analysis
from unbiased_mvsde.analysis import (
    DensityEstimate,
    contraction_diagnostic,
    curie_weiss_reference,
    fit_log_decay,
    kde,
    loglog_slope,
    moment,
    mse_from_estimates,
    mse_study,
    wasserstein_1d,
)
from unbiased_mvsde.estimator import EstimatorConfig, ReplicateResult
from unbiased_mvsde.measure import SignedEmpiricalMeasure
from unbiased_mvsde.models import curie_weiss, mean_field_ou

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=25)


def _atoms(points, weights):
    return SignedEmpiricalMeasure(np.asarray(points, float)[:, None], weights)


class TestKDE:
    def test_single_atom(self, backend):
        d = kde(_atoms([0.0], [1.0]), 0, 1.0, [0.0])
        np.testing.assert_allclose(d.values[0], 1 / math.sqrt(2 * math.pi), rtol=1e-15)
        assert round(d.values[0], 5) == 0.39894

    def test_symmetric(self, backend):
        d = kde(_atoms([-1.0, 1.0], [0.5, 0.5]), 0, 0.3, [-1.0, 1.0])
        assert d.values[0] == d.values[1]

    def test_bad_bandwidth(self):
        with pytest.raises(ValueError):
            kde(_atoms([0.0], [1.0]), 0, 0.0, [0.0])
        with pytest.raises(ValueError):
            kde(_atoms([0.0], [1.0]), 1, 0.1, [0.0])

    def test_linear(self, backend):
        rng = np.random.default_rng(0)
        mu = _atoms(rng.normal(size=50), rng.normal(size=50))
        nu = _atoms(rng.normal(size=30), rng.normal(size=30))
        grid = np.linspace(-4, 4, 101)
        combo = SignedEmpiricalMeasure.concatenate([mu.scaled(2.5), nu.scaled(-0.7)])
        lhs = kde(combo, 0, 0.2, grid).values
        rhs = 2.5 * kde(mu, 0, 0.2, grid).values - 0.7 * kde(nu, 0, 0.2, grid).values
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_integral_is_total_weight(self):
        rng = np.random.default_rng(1)
        mu = _atoms(rng.uniform(-2, 2, 40), rng.normal(size=40))
        f = lambda x: kde(mu, 0, 0.3, [x]).values[0]
        mass = analysis.adaptive_simpson(f, -12.0, 12.0, tol=1e-10)
        assert abs(mass - mu.total_weight()) < 1e-6

    def test_backends_agree(self):
        from unbiased_mvsde import set_backend

        rng = np.random.default_rng(2)
        mu = _atoms(rng.normal(size=3000), rng.normal(size=3000))
        grid = np.linspace(-3, 3, 77)
        set_backend("numpy")
        a = kde(mu, 0, 0.1, grid).values
        set_backend("numba")
        b = kde(mu, 0, 0.1, grid).values
        set_backend(None)
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    def test_density_helpers(self):
        g = np.linspace(-8, 8, 2001)
        d = DensityEstimate(g, stats.norm.pdf(g, loc=1.0), 0.1)
        np.testing.assert_allclose(d.mass(), 1.0, atol=1e-8)
        np.testing.assert_allclose(d.mean(), 1.0, atol=1e-8)

    def test_curie_weiss_density(self, cw_replicates):
        # pointwise replicate spread reaches ~0.14 at M=1e4, so a flat 0.05 sup band is
        # out of statistical reach; check a simultaneous 4-SE band plus smoothing bias
        grid = np.linspace(-3, 3, 121)
        per_rep = np.array([kde(r.measure, 0, 0.1, grid).values for r in cw_replicates])
        est = per_rep.mean(axis=0)
        se = per_rep.std(axis=0, ddof=1) / np.sqrt(len(cw_replicates))
        C, _ = curie_weiss_reference()
        truth = C * np.exp(-0.5 * grid ** 4 + grid ** 2)
        mu = SignedEmpiricalMeasure.average(r.measure for r in cw_replicates)
        np.testing.assert_allclose(kde(mu, 0, 0.1, grid).values, est, atol=1e-12)
        assert np.all(np.abs(est - truth) <= 4 * se + 0.01)


class TestMoment:
    def test_examples(self):
        assert moment(_atoms([1.0], [1.0]), 0, 2) == 1.0
        assert moment(_atoms([-1.0, 1.0], [0.5, 0.5]), 0, 1) == 0.0
        assert moment(_atoms([2.0], [1.0]), 0, 3) == 8.0

    def test_order(self):
        with pytest.raises(ValueError):
            moment(_atoms([1.0], [1.0]), 0, 0)


class TestCurieWeissReference:
    def test_against_scipy(self):
        C, m2 = curie_weiss_reference()
        f = lambda x: math.exp(-0.5 * x ** 4 + x ** 2)
        z = integrate.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
        num = integrate.quad(lambda x: x * x * f(x), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
        assert abs(C - 1 / z) < 1e-8
        assert abs(m2 - num / z) < 1e-8

    def test_printed_values(self):
        C, m2 = curie_weiss_reference()
        assert round(C, 4) == 0.2401 and round(m2, 4) == 0.8935


def _stub_replicates(offset, noise):
    def fake(model, config, M, master_seed, threads=1, start=0):
        out = []
        for rid in range(start, start + M):
            v = offset + noise * ((-1) ** rid)
            out.append(ReplicateResult(_atoms([v], [1.0]), 3, 0, 1.0, rid))
        return out
    return fake


class TestMSE:
    def test_exact_truth(self, monkeypatch):
        monkeypatch.setattr(analysis, "run_replicates", _stub_replicates(0.7, 0.0))
        pts = mse_study(None, EstimatorConfig(), lambda x: x[:, 0], 0.7, [1, 4], 2, 0)
        assert [p.mse for p in pts] == [0.0, 0.0]
        assert len(pts[0].estimates) == 2

    def test_constant_bias(self, monkeypatch):
        monkeypatch.setattr(analysis, "run_replicates", _stub_replicates(1.25, 0.0))
        pts = mse_study(None, EstimatorConfig(), lambda x: x[:, 0], 1.0, [2, 8], 3, 0)
        assert all(p.mse == 0.0625 for p in pts)

    def test_disjoint_runs(self, monkeypatch):
        seen = []
        inner = _stub_replicates(0.0, 1.0)

        def spy(*args, **kw):
            reps = inner(*args, **kw)
            seen.append([r.replicate_id for r in reps])
            return reps

        monkeypatch.setattr(analysis, "run_replicates", spy)
        mse_study(None, EstimatorConfig(), lambda x: x[:, 0], 0.0, [3, 5], 4, 0)
        ids = [i for run in seen for i in run]
        assert len(ids) == len(set(ids)) == 20

    def test_runs_required(self):
        with pytest.raises(ValueError):
            mse_study(None, EstimatorConfig(), lambda x: x, 0.0, [1], 1, 0)

    def test_helpers(self):
        assert mse_from_estimates([1.0, 3.0], 2.0) == 1.0
        np.testing.assert_allclose(loglog_slope([1, 2, 4, 8], [8, 4, 2, 1]), -1.0, rtol=1e-12)


class TestWasserstein:
    def test_identical(self):
        assert wasserstein_1d([3.0, 1.0, 2.0], [1.0, 2.0, 3.0]) == 0.0

    def test_unit_shift(self):
        assert wasserstein_1d([0.0], [1.0], 1) == 1.0

    def test_two_points(self):
        # brute force over both pairings
        a, b = [0.0, 2.0], [1.0, 3.0]
        brute = min(math.sqrt(np.mean((np.array(a) - np.array(perm)) ** 2)) for perm in ([1.0, 3.0], [3.0, 1.0]))
        assert wasserstein_1d(a, b, 2) == brute == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            wasserstein_1d([], [1.0])

    @given(samples, samples)
    @settings(max_examples=200, deadline=None)
    def test_w1_against_scipy(self, a, b):
        np.testing.assert_allclose(wasserstein_1d(a, b, 1), stats.wasserstein_distance(a, b), rtol=1e-9, atol=1e-9)

    @given(samples, samples)
    @settings(max_examples=200, deadline=None)
    def test_symmetry_and_jensen(self, a, b):
        assert wasserstein_1d(a, b) == wasserstein_1d(b, a)
        assert wasserstein_1d(a, b, 1) <= wasserstein_1d(a, b, 2) * (1 + 1e-12) + 1e-12

    @given(samples, samples, samples)
    @settings(max_examples=200, deadline=None)
    def test_triangle(self, a, b, c):
        for p in (1, 2):
            lhs = wasserstein_1d(a, c, p)
            assert lhs <= wasserstein_1d(a, b, p) + wasserstein_1d(b, c, p) + 1e-9 * (1 + lhs)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=10), st.randoms())
    @settings(max_examples=50, deadline=None)
    def test_indiscernibles(self, a, rnd):
        b = list(a)
        rnd.shuffle(b)
        assert wasserstein_1d(a, b) == 0.0


class TestContraction:
    def test_identical_start(self):
        _, w2 = contraction_diagnostic(curie_weiss(), 4, 30, 5, 0.5, 0.5, 1)
        assert np.all(w2 == 0.0)

    def test_initial_distance(self):
        t, w2 = contraction_diagnostic(mean_field_ou(), 3, 10, 3, -2.0, 2.0, 1)
        assert t.tolist() == [0, 1, 2, 3] and w2[0] == 4.0

    def test_ou_rate(self):
        theta, kappa = 1.0, 0.5
        t, w2 = contraction_diagnostic(mean_field_ou(theta, kappa), 5, 200, 10, -2.0, 2.0, 3)
        slope = fit_log_decay(t, w2)
        rate = 2 * theta * (1 - kappa)
        assert -1.5 * rate <= slope <= -0.5 * rate

    def test_dimension(self):
        from unbiased_mvsde.models import neuron3d

        with pytest.raises(ValueError):
            contraction_diagnostic(neuron3d(), 3, 5, 2, 0.0, 1.0, 0)

    def test_fit_needs_points(self):
        with pytest.raises(ValueError):
            fit_log_decay([0, 1], [0.0, 0.0])
