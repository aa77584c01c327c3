import math
from functools import reduce

import numpy as np
import pytest

from src.film_growth.core.diagnostics import apriori_check, w_functional
from src.film_growth.core.integrator import ModelSpec, SimParams, TrajectoryState, run_trajectory
from src.film_growth.core.noise import NoiseSpectrum
from src.film_growth.core.observables import (
    PROBE_NAMES,
    EnsembleStats,
    KWeight,
    Moments,
    ObservableSeries,
    ProbeSet,
    fit_k_embedding_constant,
    merge,
    probes,
    series_frame,
)
from src.film_growth.core.spectral import (
    BasisSpec,
    BoundaryCondition,
    random_field,
    smooth_field,
    zeros,
)
from src.film_growth.utils.errors import FingerprintMismatchError, InsufficientDataError

TWO_PI = 2.0 * math.pi


def test_moments_combine_equals_pooled():
    rng = np.random.default_rng(0)
    values = rng.normal(3.0, 2.0, size=1000)
    parts = [Moments.of(values[:10]), Moments.of(values[10:400]), Moments.of(values[400:])]
    pooled = Moments.of(values)

    left = reduce(Moments.combine, parts)
    right = parts[0].combine(parts[1].combine(parts[2]))
    for combined in (left, right):
        assert combined.count == pooled.count
        assert combined.mean == pytest.approx(pooled.mean, rel=1e-12)
        assert combined.variance == pytest.approx(pooled.variance, rel=1e-10)
        assert combined.minimum == pooled.minimum
        assert combined.maximum == pooled.maximum

    assert Moments().combine(pooled) == pooled
    assert parts[1].combine(parts[0]).mean == pytest.approx(parts[0].combine(parts[1]).mean)


def test_std_error_halves_when_samples_quadruple():
    rng = np.random.default_rng(1)
    small = Moments.of(rng.standard_normal(10_000))
    large = Moments.of(rng.standard_normal(40_000))
    assert large.std_error / small.std_error == pytest.approx(0.5, rel=0.05)


def test_merge_checks_fingerprints_and_probes():
    a = EnsembleStats.from_samples({"u_l2_sq": [1.0, 2.0]}, "abc")
    b = EnsembleStats.from_samples({"u_l2_sq": [3.0]}, "abc")
    merged = merge(a, b)
    assert merged["u_l2_sq"].count == 3
    assert merged["u_l2_sq"].mean == pytest.approx(2.0)
    assert merge(EnsembleStats("abc"), a) is a

    with pytest.raises(FingerprintMismatchError):
        merge(a, EnsembleStats.from_samples({"u_l2_sq": [3.0]}, "xyz"))
    with pytest.raises(FingerprintMismatchError):
        merge(a, EnsembleStats.from_samples({"mass": [0.0]}, "abc"))


def test_observable_series_validation():
    with pytest.raises(InsufficientDataError):
        ObservableSeries("u_l2_sq", np.array([0.1, 0.1]), np.array([1.0, 2.0]), 0, "f")
    with pytest.raises(InsufficientDataError):
        ObservableSeries("u_l2_sq", np.array([0.1, 0.2]), np.array([1.0, np.nan]), 0, "f")
    empty = ObservableSeries("u_l2_sq", np.array([]), np.array([]), 0, "f")
    with pytest.raises(InsufficientDataError):
        empty.time_average()
    diverged = ObservableSeries(
        "u_l2_sq", np.array([0.1]), np.array([np.inf]), 0, "f", diverged=True
    )
    assert len(diverged) == 1


def test_probes_on_the_zero_state():
    basis = BasisSpec(BoundaryCondition.PERIODIC, TWO_PI, 8)
    state = TrajectoryState.initial(zeros(basis), seed=0)
    values = probes(state)
    assert set(values) == set(PROBE_NAMES)
    assert all(v == 0.0 for v in values.values())
    with pytest.raises(KeyError):
        ProbeSet(["not_a_probe"])


def test_log_probes_follow_their_norms():
    basis = BasisSpec(BoundaryCondition.NEUMANN, TWO_PI, 8)
    state = TrajectoryState.initial(smooth_field(basis), seed=0)
    values = ProbeSet(["u_l2_sq", "log1p_u_l2_sq", "u_c1", "log1p_u_c1_sq"]).evaluate(state)
    assert values["log1p_u_l2_sq"] == pytest.approx(math.log1p(values["u_l2_sq"]))
    assert values["log1p_u_c1_sq"] == pytest.approx(math.log1p(values["u_c1"] ** 2))


def test_series_frame_joins_probes():
    basis = BasisSpec(BoundaryCondition.NEUMANN, TWO_PI, 8)
    model = ModelSpec(basis, 1.0, NoiseSpectrum.white(8))
    params = SimParams(h=1e-2, T=0.2, model=model, record_stride=2)
    result = run_trajectory(zeros(basis), params, probes=["mass", "u_l2_sq"], seed=3)
    frame = series_frame(result.series)
    assert list(frame.columns) == ["t", "mass", "u_l2_sq"]
    assert len(frame) == 10
    assert series_frame({}).columns.tolist() == ["t"]


def test_k_weight_multiplier():
    weight = KWeight()
    assert np.allclose(weight.weights(4), np.arange(1, 5) ** 0.375)
    assert weight.squared().exponent == pytest.approx(0.75)
    basis = BasisSpec(BoundaryCondition.PERIODIC, TWO_PI, 4)
    f = smooth_field(basis)
    assert np.allclose(weight.apply(f).coefficients, f.coefficients * weight.weights(4))


def test_fit_k_embedding_constant():
    basis = BasisSpec(BoundaryCondition.PERIODIC, TWO_PI, 32)
    rng = np.random.default_rng(4)
    fields = [random_field(basis, rng, decay=1.0) for _ in range(20)]
    c = fit_k_embedding_constant(fields)
    assert math.isfinite(c) and c > 0
    with pytest.raises(InsufficientDataError):
        fit_k_embedding_constant([zeros(basis)])


def test_w_functional_is_additive():
    times = np.linspace(0.0, 1.0, 11)
    sup = 1.0 + times
    whole = w_functional(times, sup, 0.0, 1.0)
    split = w_functional(times, sup, 0.0, 0.35) + w_functional(times, sup, 0.35, 1.0)
    assert whole == pytest.approx(split, rel=1e-12)
    assert w_functional(times, np.ones(11), 0.0, 1.0) == pytest.approx(8.0)
    with pytest.raises(InsufficientDataError):
        w_functional(times, sup, 0.5, 0.5)
    with pytest.raises(InsufficientDataError):
        w_functional(times, sup, 0.0, 2.0)


def test_apriori_fit_on_short_ensemble():
    basis = BasisSpec(BoundaryCondition.NEUMANN, TWO_PI, 16)
    model = ModelSpec(basis, 1.0, NoiseSpectrum.white(16))
    params = SimParams(h=1e-3, T=0.5, model=model, record_stride=10)
    traces = [run_trajectory(zeros(basis), params, probes=[], seed=s).trace for s in range(4)]
    report = apriori_check(traces, model.spectrum.slowest_decay)
    assert report.finite
    assert report.c_fit >= 0
    assert len(report.path_norms) == 4
    assert report.tail_probabilities[0] <= 0.5
    with pytest.raises(InsufficientDataError):
        apriori_check([], 1.0)
