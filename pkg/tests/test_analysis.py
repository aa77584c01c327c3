import math

import numpy as np
import pytest

from src.film_growth.core.analysis import (
    LOG_PROBES,
    constant_pair_sampler,
    gaussian_pair_sampler,
    k_weight_moment,
    k_weight_variance_oracle,
    lemma61_experiment,
    lemma62_check,
    lemma62_constant,
    stationary_scan,
)
from src.film_growth.core.integrator import ModelSpec, SimParams
from src.film_growth.core.noise import NoiseSpectrum
from src.film_growth.core.spectral import BasisSpec, BoundaryCondition
from src.film_growth.platform.workers import EnsembleExecutor, WorkerPoolConfig
from src.film_growth.utils.errors import (
    InsufficientDataError,
    MomentPreconditionError,
    UnstableModeError,
)

TWO_PI = 2.0 * math.pi


def periodic_model(N=32, nu=1.0, noise=None):
    basis = BasisSpec(BoundaryCondition.PERIODIC, TWO_PI, N)
    return ModelSpec(basis, nu, noise or NoiseSpectrum.white(N))


def neumann_params(N=8, noise=None, **kwargs):
    basis = BasisSpec(BoundaryCondition.NEUMANN, TWO_PI, N)
    model = ModelSpec(basis, 1.0, noise or NoiseSpectrum.white(N))
    defaults = {"h": 1e-2, "T": 0.4, "burn_in": 0.1, "record_stride": 2}
    return SimParams(model=model, **{**defaults, **kwargs})


# ---------------------------------------------------------------------------
# log inequality


def test_lemma62_deterministic_zero_pair():
    report = lemma62_check([1.0], constant_pair_sampler(0.0, 0.0), K=1.0, samples=1000)
    row = report.rows[0]
    assert row.lhs == pytest.approx(math.log(2.0) ** 2, rel=1e-12)
    assert row.lhs_se == 0.0
    assert row.rhs >= report.constant.quadratic_part
    assert report.passed


@pytest.mark.parametrize("K", [1.0, 4.0])
def test_lemma62_gaussian_pairs(K):
    report = lemma62_check(
        [1.0, 10.0, 100.0, 1e4], gaussian_pair_sampler(K), K=K, eps=0.1, samples=200_000, seed=1
    )
    assert report.passed
    assert report.second_moment == pytest.approx(K, rel=0.02)
    assert all(math.isfinite(r.lhs) for r in report.rows)


@pytest.mark.slow
@pytest.mark.parametrize("K", [1.0, 4.0])
def test_lemma62_full_sample_size(K):
    x_grid = [1.0, 10.0, 100.0, 1e4]
    report = lemma62_check(x_grid, gaussian_pair_sampler(K), K=K, samples=1_000_000)
    assert report.passed


def test_lemma62_leading_term_dominates_at_large_x():
    report = lemma62_check([1e12], gaussian_pair_sampler(1.0), K=1.0, samples=100_000, seed=2)
    lx = math.log(1e12)
    assert report.rows[0].lhs / lx**2 == pytest.approx(1.0, abs=0.05)


def test_lemma62_precondition_and_grid_checks():
    with pytest.raises(MomentPreconditionError):
        lemma62_check([1.0], gaussian_pair_sampler(4.0), K=1.0, samples=50_000)
    with pytest.raises(InsufficientDataError):
        lemma62_check([0.5, 2.0], gaussian_pair_sampler(1.0), K=1.0, samples=1000)
    with pytest.raises(InsufficientDataError):
        lemma62_check([], gaussian_pair_sampler(1.0), K=1.0, samples=1000)


def test_lemma62_constant_parts():
    constant = lemma62_constant(K=1.0, eps=0.1, e1=0.05)
    assert constant.eps_prime == pytest.approx(0.1 / (2.0 + math.log1p(0.1)))
    assert constant.transition_part == 0.0
    assert constant.value == pytest.approx(8.0)
    assert lemma62_constant(K=1.0, eps=0.1, e1=1.0).value > constant.value


def test_correlated_pairs_keep_marginals():
    rng = np.random.default_rng(0)
    w1, w2 = gaussian_pair_sampler(2.0, correlation=0.8)(rng, 200_000)
    assert np.var(w1) == pytest.approx(1.0, rel=0.02)
    assert np.var(w2) == pytest.approx(1.0, rel=0.02)
    assert np.corrcoef(w1, w2)[0, 1] == pytest.approx(0.8, abs=0.01)


# ---------------------------------------------------------------------------
# stochastic convolution moments


def test_lemma61_without_noise_is_zero():
    model = periodic_model(N=16, noise=NoiseSpectrum.zero(16))
    report = lemma61_experiment(
        model, t_grid=[1e-2, 1e-1], samples=100, truncations=(8, 16), chunk=50
    )
    assert all(row.estimate == 0.0 for row in report.rows)
    assert report.passed


def test_lemma61_small_run():
    model = periodic_model(N=16)
    report = lemma61_experiment(
        model,
        t_grid=[1e-3, 1e-2, 1e-1],
        samples=2000,
        truncations=(16, 32),
        chunk=500,
        oversampling_subsample=200,
    )
    assert len(report.rows) == 6
    assert all(math.isfinite(c) and c > 0 for c in report.c_hat().values())
    assert report.monotone_small_t()
    for row in report.rows:
        assert row.subsample == 200
        # doubling the sup grid can only find a larger maximum, up to sampling noise
        assert row.oversampled_estimate > 0


def test_lemma61_rejects_bad_inputs():
    model = periodic_model(N=8)
    for grid in ([], [0.0, 0.1], [0.5, 2.0], [0.1, 0.1]):
        with pytest.raises(InsufficientDataError):
            lemma61_experiment(model, t_grid=grid, samples=10, truncations=(8,))
    with pytest.raises(UnstableModeError):
        lemma61_experiment(periodic_model(N=8, nu=-2.0), t_grid=[0.1], samples=10, truncations=(8,))


@pytest.mark.slow
def test_lemma61_constant_is_stable_in_n():
    model = periodic_model(N=32)
    report = lemma61_experiment(model, samples=20_000, truncations=(32, 64, 128))
    assert report.passed
    assert report.variation < 2.0


def test_k_weight_without_noise_is_zero():
    model = periodic_model(N=16, noise=NoiseSpectrum.zero(16))
    report = k_weight_moment(0.01, 200, model, chunk=100)
    assert report.fourth_moment == 0.0
    assert report.pointwise_variance == 0.0
    assert report.variance_oracle == 0.0
    assert report.oracle_within_3se


@pytest.mark.parametrize("boundary", [BoundaryCondition.PERIODIC, BoundaryCondition.NEUMANN])
def test_k_weight_pointwise_variance_matches_oracle(boundary):
    basis = BasisSpec(boundary, TWO_PI, 64)
    model = ModelSpec(basis, 1.0, NoiseSpectrum.white(64))
    report = k_weight_moment(0.01, 20_000, model, seed=5)
    assert report.variance_oracle > 0
    gap = abs(report.pointwise_variance - report.variance_oracle)
    assert gap <= 4.0 * report.pointwise_variance_se
    assert report.fourth_moment > 0


def test_k_weight_variance_scales_like_t_to_one_sixteenth():
    model = periodic_model(N=128)
    ratios = [
        k_weight_variance_oracle(model, t, 1.0) / t**0.0625 for t in (1e-4, 1e-3, 1e-2, 1e-1)
    ]
    assert max(ratios) / min(ratios) < 4.0


# ---------------------------------------------------------------------------
# stationary scan


def test_stationary_scan_without_noise_has_zero_log_moments():
    params = neumann_params(noise=NoiseSpectrum.zero(8))
    report = stationary_scan([8, 16], params, ensemble=3, seed=0)
    assert report.n_values == [8, 16]
    for entry in report.entries:
        assert not entry.diverged
        for probe in LOG_PROBES:
            assert entry.means[probe] == 0.0
    assert report.n_stable
    assert all(report.agreement().values())


def test_stationary_scan_is_independent_of_thread_count():
    params = neumann_params()
    serial = stationary_scan([8, 16], params, ensemble=6, seed=11)
    threaded = stationary_scan(
        [8, 16], params, ensemble=6, seed=11, executor=EnsembleExecutor(WorkerPoolConfig(4))
    )
    assert [e.means for e in serial.entries] == [e.means for e in threaded.entries]
    assert serial.finite


def test_stationary_scan_records_divergence():
    params = neumann_params(blowup=1e-6)
    report = stationary_scan([8], params, ensemble=2)
    assert report.entries[0].diverged
    assert "blow-up" in report.entries[0].message
    assert not report.n_stable


def test_stationary_scan_default_burn_in_extends_the_horizon():
    params = neumann_params(noise=NoiseSpectrum.zero(8), burn_in=0.0, h=0.5, T=1.0)
    report = stationary_scan([8], params, ensemble=1)
    # slowest mode relaxes at 1/16 + 1/4
    assert report.burn_in == pytest.approx(10.0 / 0.3125)
    assert report.horizon == pytest.approx(1.0 + 10.0 / 0.3125)


def test_stationary_start_draws_a_nonzero_initial_state():
    params = neumann_params()
    cold = stationary_scan([8], params, ensemble=4, seed=2)
    warm = stationary_scan([8], params, ensemble=4, seed=2, stationary_start=True)
    again = stationary_scan([8], params, ensemble=4, seed=2, stationary_start=True)
    assert warm.entries[0].means == again.entries[0].means
    assert warm.entries[0].means != cold.entries[0].means
    assert warm.finite

    silent = neumann_params(noise=NoiseSpectrum.zero(8))
    report = stationary_scan([8], silent, ensemble=2, stationary_start=True)
    assert report.entries[0].means == {p: 0.0 for p in LOG_PROBES}


def test_stationary_start_tolerates_unstable_modes():
    basis = BasisSpec(BoundaryCondition.NEUMANN, TWO_PI, 8)
    model = ModelSpec(basis, -0.5, NoiseSpectrum.white(8))
    params = SimParams(h=1e-2, T=0.2, burn_in=0.1, record_stride=2, model=model)
    report = stationary_scan([8], params, ensemble=2, stationary_start=True)
    assert not report.entries[0].diverged
    assert report.finite


@pytest.mark.slow
def test_stationary_log_moments_do_not_grow_with_n():
    params = neumann_params(N=16, h=1e-3, T=60.0, burn_in=10.0, record_stride=100)
    report = stationary_scan([16, 32, 64], params, ensemble=200, seed=0)
    assert report.finite
    assert not any(report.growth_flags().values())
