import math

import numpy as np
import pytest

from src.film_growth.core.spectral import (
    BasisSpec,
    BoundaryCondition,
    FieldKind,
    GridBuffer,
    NormKind,
    batch_derivative,
    batch_to_physical,
    dealiased_size,
    derivative,
    eigenvalue,
    eigenvalue_bounds,
    from_amplitudes,
    from_physical,
    hs_squared,
    inner,
    l2_squared,
    linear_spectrum,
    mass,
    nonlinearity,
    norm,
    nu_critical,
    quadrature_mass,
    random_field,
    resize,
    to_physical,
    wavenumber,
)
from src.film_growth.utils.errors import (
    BasisError,
    DerivativeOrderError,
    ModeIndexError,
    NormError,
    ResolutionError,
)

TWO_PI = 2.0 * math.pi


def neumann(N=16, L=TWO_PI):
    return BasisSpec(BoundaryCondition.NEUMANN, L, N)


def periodic(N=16, L=TWO_PI):
    return BasisSpec(BoundaryCondition.PERIODIC, L, N)


def test_wavenumbers_follow_boundary():
    assert wavenumber(neumann(), 2) == pytest.approx(1.0)
    assert wavenumber(periodic(), 2) == pytest.approx(2.0)
    assert eigenvalue(neumann(), 1.0, 2) == pytest.approx(-2.0)


def test_mode_index_out_of_range():
    basis = neumann(N=8)
    for j in (0, 9):
        with pytest.raises(ModeIndexError):
            wavenumber(basis, j)
    with pytest.raises(IndexError):
        eigenvalue(basis, 1.0, 9)


def test_nu_critical_marks_first_unstable_mode():
    basis = neumann()
    nu_c = nu_critical(basis)
    assert nu_c == pytest.approx(-0.25)
    assert linear_spectrum(basis, nu_c + 1e-9).all_stable
    assert not linear_spectrum(basis, 2 * nu_c).all_stable


@pytest.mark.parametrize("nu", [1.0, 0.0, -0.5, -3.0])
def test_eigenvalue_bounds_hold_beyond_j0(nu):
    basis = neumann(N=64)
    bounds = eigenvalue_bounds(basis, nu)
    lam = linear_spectrum(basis, nu).eigenvalues
    j = np.arange(1, 65, dtype=float)
    mask = j >= bounds.j0
    assert np.all(bounds.c1 * j[mask] ** 4 <= -lam[mask] * (1 + 1e-12))
    assert np.all(-lam[mask] <= bounds.c2 * j[mask] ** 4 * (1 + 1e-12))


@pytest.mark.parametrize("make_basis", [neumann, periodic])
def test_physical_round_trip(make_basis):
    basis = make_basis(N=24)
    f = random_field(basis, np.random.default_rng(1), decay=1.0)
    g = to_physical(f, 4 * basis.truncation)
    back = from_physical(g, basis)
    assert np.allclose(back.coefficients, f.coefficients, atol=1e-12)


def test_to_physical_rejects_coarse_grid():
    basis = periodic(N=10)
    f = random_field(basis, np.random.default_rng(0))
    with pytest.raises(ResolutionError):
        to_physical(f, 20)


def test_from_physical_rejects_odd_samples_for_neumann():
    basis = neumann(N=8)
    M = 64
    x = np.arange(M) * basis.period / M
    g = GridBuffer(np.sin(math.pi * x / basis.length), basis.period)
    with pytest.raises(BasisError):
        from_physical(g, basis)


def test_from_physical_rejects_period_mismatch():
    basis = neumann(N=8)
    g = GridBuffer(np.ones(64), basis.length)
    with pytest.raises(BasisError):
        from_physical(g, basis)


def test_derivative_swaps_neumann_parity():
    basis = neumann(N=4)
    f = from_amplitudes(basis, [1.0])
    q1 = wavenumber(basis, 1)

    d1 = derivative(f, 1)
    assert d1.kind is FieldKind.SINE
    assert d1.coefficients[0, 0] == pytest.approx(-q1)

    d2 = derivative(f, 2)
    assert d2.kind is FieldKind.COSINE
    assert d2.coefficients[0, 0] == pytest.approx(-(q1**2))

    with pytest.raises(DerivativeOrderError):
        derivative(f, 5)


def test_batch_helpers_match_single_field_transforms():
    basis = periodic(N=8)
    rng = np.random.default_rng(3)
    fields = [random_field(basis, rng) for _ in range(5)]
    batch = np.stack([f.coefficients for f in fields])
    dbatch, kind = batch_derivative(batch, basis, basis.default_kind)
    grids = batch_to_physical(dbatch, basis, kind, 64)
    for f, grid in zip(fields, grids, strict=True):
        expected = to_physical(derivative(f, 1), 64).samples
        assert np.allclose(grid, expected, atol=1e-12)


@pytest.mark.parametrize("N", [16, 64, 256])
@pytest.mark.parametrize("make_basis", [neumann, periodic])
def test_nonlinearity_is_orthogonal_to_u(N, make_basis):
    basis = make_basis(N=N)
    rng = np.random.default_rng(N)
    for _ in range(50):
        u = random_field(basis, rng, decay=1.5)
        h1 = math.sqrt(hs_squared(u, 1.0))
        assert abs(inner(u, nonlinearity(u))) <= 1e-10 * max(1.0, h1**3)


def test_dealiasing_requires_3n_plus_1():
    basis = periodic(N=10)
    assert dealiased_size(basis) >= 31
    with pytest.raises(ResolutionError):
        dealiased_size(basis, padding=30)


def test_norms_of_single_cosine_mode():
    basis = neumann(N=8)
    a = 0.7
    f = from_amplitudes(basis, [0.0, 0.0, a])
    L = basis.length
    assert l2_squared(f) == pytest.approx(a**2 * L / 2)
    assert norm(f, NormKind.LINF) == pytest.approx(a)
    assert norm(f, NormKind.L4) == pytest.approx((3 * L / 8) ** 0.25 * a)
    q3 = wavenumber(basis, 3)
    assert norm(f, NormKind.HS, s=2.0) ** 2 == pytest.approx(q3**4 * a**2 * L / 2)
    with pytest.raises(NormError):
        norm(f, NormKind.HS, s=5.0)
    with pytest.raises(NormError):
        norm(f, NormKind.HS)


def test_mass_vanishes():
    basis = periodic(N=32)
    u = random_field(basis, np.random.default_rng(5), decay=0.5)
    assert mass(u) == 0.0
    assert abs(quadrature_mass(u)) <= 1e-12
    assert abs(quadrature_mass(random_field(neumann(N=32), np.random.default_rng(6)))) <= 1e-12


def test_resize_is_projection_then_padding():
    basis = periodic(N=8)
    f = random_field(basis, np.random.default_rng(7))
    small = resize(f, 4)
    assert small.basis.truncation == 4
    assert np.array_equal(small.coefficients, f.coefficients[:, :4])
    padded = resize(small, 8)
    assert np.all(padded.coefficients[:, 4:] == 0)


def test_field_arithmetic_checks_compatibility():
    f = random_field(periodic(N=4), np.random.default_rng(0))
    g = random_field(periodic(N=8), np.random.default_rng(1))
    with pytest.raises(BasisError):
        _ = f + g
    assert np.allclose((f * 2.0 - f).coefficients, f.coefficients)
