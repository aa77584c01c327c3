import math

import numpy as np
import pytest

from src.film_growth.core.diagnostics import deterministic_order_check, refinement_check
from src.film_growth.core.integrator import (
    ModelSpec,
    SimParams,
    TrajectoryState,
    default_burn_in,
    drift,
    etd_step,
    phi1,
    run_trajectory,
    v_field,
)
from src.film_growth.core.noise import NoiseSpectrum
from src.film_growth.core.observables import energy_drift
from src.film_growth.core.spectral import (
    BasisSpec,
    BoundaryCondition,
    from_amplitudes,
    hs_squared,
    inner,
    l2_squared,
    random_field,
    smooth_field,
    zeros,
)
from src.film_growth.core.stabilizer import (
    StabilizerProfile,
    build_phi,
    tilde_a_form_check,
    tilde_a_quadratic_form,
)
from src.film_growth.utils.errors import ConfigError, DivergenceError

TWO_PI = 2.0 * math.pi


def neumann_model(N=16, nu=1.0, noise=None, drift_sign=-1):
    basis = BasisSpec(BoundaryCondition.NEUMANN, TWO_PI, N)
    return ModelSpec(basis, nu, noise or NoiseSpectrum.white(N), drift_sign)


def test_phi1_series_branch_is_continuous():
    assert phi1(0.0) == pytest.approx(1.0)
    for z in (1e-6, -1e-6, 2e-5, -2e-5):
        assert phi1(z) == pytest.approx(math.expm1(z) / z, rel=1e-12)
    assert phi1(-50.0) == pytest.approx((math.exp(-50.0) - 1.0) / -50.0)


def test_sim_params_collect_violations():
    model = neumann_model()
    with pytest.raises(ConfigError) as exc:
        SimParams(h=0.0, T=1.0, model=model, burn_in=2.0, record_stride=0)
    joined = " ".join(exc.value.violations)
    assert "sim.h" in joined
    assert "sim.T" in joined
    assert "sim.stride" in joined


def test_model_rejects_mismatched_noise():
    basis = BasisSpec(BoundaryCondition.NEUMANN, TWO_PI, 8)
    with pytest.raises(ConfigError):
        ModelSpec(basis, 1.0, NoiseSpectrum.white(4))
    with pytest.raises(ConfigError):
        ModelSpec(basis, 1.0, NoiseSpectrum.white(8), drift_sign=0)


def test_default_burn_in_is_ten_relaxation_times():
    model = neumann_model(nu=1.0)
    # slowest mode q = 1/2: 1/16 + 1/4
    assert default_burn_in(model.spectrum) == pytest.approx(10.0 / 0.3125)
    assert default_burn_in(model.spectrum, cap=5.0) == 5.0


def test_linear_noise_free_step_is_exact():
    model = neumann_model(nu=1.0, noise=NoiseSpectrum.zero(16))
    params = SimParams(h=0.01, T=0.5, model=model, nonlinear=False, record_stride=50)
    init = from_amplitudes(model.basis, [0.3, -0.2, 0.1])
    result = run_trajectory(init, params, probes=[], seed=0)
    expected = np.exp(model.spectrum.eigenvalues * 0.5) * init.coefficients
    assert np.allclose(result.state.u.coefficients, expected, rtol=1e-10, atol=1e-15)


def test_linear_solution_equals_stochastic_convolution():
    model = neumann_model(nu=1.0)
    params = SimParams(h=1e-3, T=0.1, model=model, nonlinear=False)
    state = TrajectoryState.initial(zeros(model.basis), seed=4)
    for _ in range(20):
        state = etd_step(state, params)
    assert np.array_equal(state.u.coefficients, state.w_a.field.coefficients)
    assert l2_squared(v_field(state)) == 0.0


def test_trajectories_are_deterministic_per_seed():
    model = neumann_model(N=16)
    params = SimParams(h=1e-3, T=0.2, model=model, burn_in=0.05, record_stride=10)
    a = run_trajectory(zeros(model.basis), params, seed=42)
    b = run_trajectory(zeros(model.basis), params, seed=42)
    c = run_trajectory(zeros(model.basis), params, seed=43)
    for name, series in a.series.items():
        assert np.array_equal(series.values, b.series[name].values)
    assert len(a.series["u_l2_sq"]) == 15
    assert not np.array_equal(a.series["u_l2_sq"].values, c.series["u_l2_sq"].values)


@pytest.mark.parametrize("boundary", [BoundaryCondition.NEUMANN, BoundaryCondition.PERIODIC])
def test_mass_and_orthogonality_along_trajectories(boundary):
    basis = BasisSpec(boundary, TWO_PI, 32)
    model = ModelSpec(basis, 1.0, NoiseSpectrum.white(32))
    params = SimParams(h=1e-3, T=0.5, model=model, record_stride=25)
    for seed in range(5):
        result = run_trajectory(zeros(basis), params, seed=seed)
        assert np.max(np.abs(result.series["mass"].values)) <= 1e-10
        scale = np.clip(result.series["dxu_l2_sq"].values ** 1.5, 1.0, None)
        residual = np.abs(result.series["orthogonality_residual"].values) / scale
        assert np.max(residual) <= 1e-10


@pytest.mark.slow
def test_mass_conservation_over_long_ensemble():
    model = neumann_model(N=32, nu=1.0)
    params = SimParams(h=1e-3, T=20.0, model=model, record_stride=100)
    for seed in range(100):
        result = run_trajectory(zeros(model.basis), params, probes=["mass"], seed=seed)
        assert np.max(np.abs(result.series["mass"].values)) <= 1e-10


def test_blowup_raises_divergence_with_context():
    model = neumann_model(N=8)
    params = SimParams(h=1e-3, T=1.0, model=model, blowup=1e-6)
    with pytest.raises(DivergenceError) as exc:
        run_trajectory(zeros(model.basis), params, seed=9)
    assert exc.value.context["seed"] == 9
    assert exc.value.context["step"] == 1
    assert exc.value.norm > 1e-6


def test_diagnostic_trace_starts_at_zero():
    model = neumann_model(N=8)
    params = SimParams(h=1e-2, T=0.5, model=model, record_stride=5)
    result = run_trajectory(zeros(model.basis), params, seed=1)
    data = result.trace.arrays()
    assert data["t"][0] == 0.0
    assert data["t"].size == 11
    assert result.state.accumulators.w_integral > 0


def test_energy_drift_matches_linear_part_of_the_drift():
    model = neumann_model(N=16, nu=-0.5, noise=NoiseSpectrum.zero(16))
    u = random_field(model.basis, np.random.default_rng(2), decay=2.0, scale=0.3)
    assert energy_drift(u, model.nu) == pytest.approx(2.0 * inner(u, drift(u, model)), rel=1e-9)


def first_step_rate(u0, params, stabilizer=None):
    """(||v(h)||^2 - ||v(0)||^2) / h over one exponential Euler step."""
    state = TrajectoryState.initial(u0, seed=0)
    after = etd_step(state, params)
    before_sq = l2_squared(v_field(state, stabilizer))
    return (l2_squared(v_field(after, stabilizer)) - before_sq) / params.h


def test_noise_free_energy_rate_converges_at_first_order():
    model = neumann_model(N=8, nu=1.0, noise=NoiseSpectrum.zero(8))
    u0 = smooth_field(model.basis, 0.5)
    exact = energy_drift(u0, model.nu)
    errors = []
    for h in (2e-4, 1e-4):
        params = SimParams(h=h, T=h, model=model)
        errors.append(abs(first_step_rate(u0, params) - exact))
    assert errors[0] < 1e-2 * abs(exact)
    assert errors[1] == pytest.approx(errors[0] / 2.0, rel=0.2)


@pytest.mark.parametrize("drift_sign", [-1, 1])
def test_stabilized_energy_identity(drift_sign):
    """d/dt ||v||^2 / 2 along the shifted flow is the quadratic form of A~."""
    nu = -0.5
    N = 16
    model = neumann_model(N=N, nu=nu, noise=NoiseSpectrum.zero(N), drift_sign=drift_sign)
    profile = build_phi(2, nu, TWO_PI, N, drift_sign=drift_sign)
    shift = profile.shift_field(model.basis)
    rng = np.random.default_rng(8)
    for _ in range(10):
        v = random_field(model.basis, rng, decay=2.0, scale=0.2)
        rate = inner(v, drift(v + shift, model) - drift(shift, model))
        form = tilde_a_quadratic_form(profile, v)
        assert rate == pytest.approx(form, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("drift_sign", [-1, 1])
def test_stabilized_noise_free_run_dissipates_through_the_shifted_form(drift_sign):
    nu = -0.5
    N = 8
    model = neumann_model(N=N, nu=nu, noise=NoiseSpectrum.zero(N), drift_sign=drift_sign)
    profile = build_phi(2, nu, TWO_PI, N, drift_sign=drift_sign)
    shift = profile.shift_field(model.basis)
    v0 = random_field(model.basis, np.random.default_rng(21), decay=2.0, scale=0.05)
    u0 = v0 + shift

    # half of d/dt ||v||^2 at t = 0: the A~ form plus the forcing <v, drift(shift)>
    form = tilde_a_quadratic_form(profile, v0)
    forcing = inner(v0, drift(shift, model))
    errors = []
    for h in (1e-4, 5e-5):
        params = SimParams(h=h, T=h, model=model, stabilizer=profile)
        errors.append(abs(0.5 * first_step_rate(u0, params, profile) - (form + forcing)))
    assert errors[1] == pytest.approx(errors[0] / 2.0, rel=0.2)

    c = tilde_a_form_check(profile, samples=200, N=N).exact_min
    assert form <= -c * hs_squared(v0, 2.0) + 1e-12

    params = SimParams(h=1e-4, T=1e-3, model=model, stabilizer=profile)
    result = run_trajectory(u0, params, probes=[], seed=0)
    assert result.trace.v_l2_sq[0] == pytest.approx(l2_squared(v0), rel=1e-12)


def test_sim_params_reject_a_profile_for_the_other_drift_sign():
    model = neumann_model(N=16, nu=-0.5, drift_sign=-1)
    profile = build_phi(2, -0.5, TWO_PI, 16, drift_sign=1)
    with pytest.raises(ConfigError) as exc:
        SimParams(h=1e-3, T=0.1, model=model, stabilizer=profile)
    assert "drift_sign" in " ".join(exc.value.violations)


def test_null_profile_form_is_the_plain_energy():
    nu = -0.5
    basis = BasisSpec(BoundaryCondition.NEUMANN, TWO_PI, 16)
    profile = StabilizerProfile.null(nu, TWO_PI, basis)
    v = smooth_field(basis, 0.4)
    assert 2.0 * tilde_a_quadratic_form(profile, v) == pytest.approx(energy_drift(v, nu))


@pytest.mark.parametrize("drift_sign", [-1, 1])
def test_shift_is_subtracted_from_v(drift_sign):
    profile = build_phi(2, -0.5, TWO_PI, 16, drift_sign=drift_sign)
    shift = profile.shift_field(profile.Phi.basis)
    assert np.array_equal(shift.coefficients, drift_sign * profile.Phi.coefficients)
    state = TrajectoryState.initial(shift, seed=0)
    assert l2_squared(v_field(state, profile)) == pytest.approx(0.0, abs=1e-30)
    assert l2_squared(v_field(state)) > 0


def test_deterministic_order_is_one():
    model = neumann_model(N=32, nu=1.0)
    params = SimParams(h=1e-2, T=1.0, model=model)
    report = deterministic_order_check(params)
    assert not report.skipped
    assert 0.8 <= report.slope <= 1.2
    assert report.passed()
    assert all(e2 < e1 for e1, e2 in zip(report.errors, report.errors[1:], strict=False))


@pytest.mark.slow
def test_galerkin_refinement_distance_decreases():
    model = neumann_model(N=8, nu=1.0)
    params = SimParams(h=1e-3, T=5.0, model=model, record_stride=10)
    report = refinement_check(params, truncations=(8, 16, 32), seed=0, init_amplitude=0.5)
    assert report.strictly_decreasing
