"""Periodic spectral algebra tests.

Oracles are closed-form trig identities plus brute-force evaluation of the
interpolant definition; linear-operator identities are checked against exact
formulas on single modes and random band-limited samples.
"""

import numpy as np
import pytest

from isocycle.errors import SingularModeError
from isocycle.fourier import (
    PeriodicFn,
    PlaneLoop,
    TorusLift,
    antiderivative,
    c0_distance,
    compose_shift,
    differentiate,
    fn_from_dict,
    fn_to_dict,
    from_function,
    low_pass,
    make_periodic,
    nodes,
    resample,
    spectral_solve,
)


def random_bandlimited(rng, n, kmax=None):
    """Random real trig polynomial with modes up to kmax < n/2."""
    if kmax is None:
        kmax = n // 2 - 2
    cs = rng.normal(size=kmax + 1) / (1 + np.arange(kmax + 1)) ** 2
    sn = rng.normal(size=kmax + 1) / (1 + np.arange(kmax + 1)) ** 2
    sn[0] = 0.0

    def f(t):
        t = np.asarray(t)[..., None]
        k = np.arange(kmax + 1)
        return (np.cos(2 * np.pi * k * t) @ cs) + (np.sin(2 * np.pi * k * t) @ sn)

    return f


def test_interpolant_reproduces_samples_and_closed_form():
    n = 32
    f = from_function(lambda t: np.cos(2 * np.pi * t) + 0.3 * np.sin(6 * np.pi * t), n)
    np.testing.assert_allclose(f(nodes(n)), f.values, atol=1e-13)
    t = np.linspace(0, 1, 97)
    want = np.cos(2 * np.pi * t) + 0.3 * np.sin(6 * np.pi * t)
    np.testing.assert_allclose(f(t), want, atol=1e-12)


def test_off_grid_evaluation_matches_direct_dft_sum():
    rng = np.random.default_rng(0)
    n = 16
    f = make_periodic(rng.normal(size=n))
    t = rng.uniform(0, 1, size=7)
    # brute-force interpolant: c_0 + 2 Re sum c_k e^{2pi i k t} + c_{n/2} cos(pi n t)
    c = np.fft.rfft(f.values) / n
    want = np.full_like(t, c[0].real)
    for k in range(1, n // 2):
        want += 2 * (c[k] * np.exp(2j * np.pi * k * t)).real
    want += c[n // 2].real * np.cos(np.pi * n * t)
    np.testing.assert_allclose(f(t), want, atol=1e-12)


def test_values_validation():
    with pytest.raises(ValueError):
        PeriodicFn([1.0, 2.0])  # too short
    with pytest.raises(ValueError):
        PeriodicFn(np.ones(7))  # odd
    with pytest.raises(ValueError):
        PeriodicFn([1.0, np.nan, 0.0, 0.0])
    with pytest.raises(ValueError):
        PeriodicFn(np.ones((4, 4)))


def test_derivative_single_mode():
    n = 64
    for k in (1, 3, 11):
        f = from_function(lambda t, k=k: np.sin(2 * np.pi * k * t), n)
        df = differentiate(f)
        want = from_function(
            lambda t, k=k: 2 * np.pi * k * np.cos(2 * np.pi * k * t), n
        )
        np.testing.assert_allclose(df.values, want.values, atol=1e-9)
    d2 = differentiate(from_function(lambda t: np.cos(2 * np.pi * t), n), order=2)
    np.testing.assert_allclose(
        d2.values, -(2 * np.pi) ** 2 * np.cos(2 * np.pi * nodes(n)), atol=1e-9
    )


def test_derivative_kills_nyquist():
    n = 8
    f = from_function(lambda t: np.cos(np.pi * n * t), n)  # pure Nyquist cosine
    np.testing.assert_allclose(differentiate(f).values, 0.0, atol=1e-13)


def test_antiderivative_inverts_derivative():
    rng = np.random.default_rng(1)
    n = 48
    g = random_bandlimited(rng, n)
    f = from_function(g, n)
    f = f - f.mean()
    G = antiderivative(f)
    assert abs(G.values[0]) < 1e-14  # pinned at theta = 0
    np.testing.assert_allclose(differentiate(G).values, f.values, atol=1e-10)


def test_antiderivative_rejects_nonzero_mean():
    f = make_periodic(np.ones(8) + 0.01)
    with pytest.raises(ValueError):
        antiderivative(f)


def test_spectral_solve_single_modes():
    # a u' + c u = g with g = e_k has solution u_k = 1/(c + 2 pi i k a)
    n, a, c = 32, 0.7, -1.3
    t = nodes(n)
    for k in (0, 1, 5):
        g = make_periodic(np.cos(2 * np.pi * k * t))
        u = spectral_solve(g, a, c)
        z = c + 2j * np.pi * k * a
        want = (np.exp(2j * np.pi * k * t) / z).real
        np.testing.assert_allclose(u.values, want, atol=1e-12)
        # verify by substitution
        lhs = a * differentiate(u).values + c * u.values
        np.testing.assert_allclose(lhs, g.values, atol=1e-10)


def test_spectral_solve_singular_zero_mode():
    g = make_periodic(np.ones(8))
    with pytest.raises(SingularModeError):
        spectral_solve(g, 1.0, 0.0)


def test_compose_shift_constant_and_variable():
    n = 64
    f = from_function(lambda t: np.sin(2 * np.pi * t), n)
    g = compose_shift(f, 0.25)
    np.testing.assert_allclose(
        g.values, np.sin(2 * np.pi * (nodes(n) + 0.25)), atol=1e-12
    )
    delta = from_function(lambda t: 0.1 * np.cos(2 * np.pi * t), n)
    h = compose_shift(f, delta)
    np.testing.assert_allclose(
        h.values, np.sin(2 * np.pi * (nodes(n) + delta.values)), atol=1e-12
    )


def test_compose_shift_lift_keeps_degree_one():
    n = 32
    lift = TorusLift(from_function(lambda t: 0.05 * np.sin(2 * np.pi * t), n))
    shifted = compose_shift(lift, 0.3)
    assert isinstance(shifted, TorusLift)
    t = nodes(n)
    want = (t + 0.3) + 0.05 * np.sin(2 * np.pi * (t + 0.3))
    np.testing.assert_allclose(shifted.full_values, want, atol=1e-12)


def test_resample_exact_on_bandlimited():
    rng = np.random.default_rng(2)
    fref = random_bandlimited(rng, 16)
    f16 = from_function(fref, 16)
    f64 = resample(f16, 64)
    np.testing.assert_allclose(f64.values, fref(nodes(64)), atol=1e-12)
    back = resample(f64, 16)
    np.testing.assert_allclose(back.values, f16.values, atol=1e-12)


def test_resample_nyquist_split():
    # resampling the Nyquist cosine upward must keep the function values
    n = 8
    f = from_function(lambda t: np.cos(np.pi * n * t), n)
    up = resample(f, 32)
    np.testing.assert_allclose(up.values, np.cos(np.pi * n * nodes(32)), atol=1e-12)


def test_resample_containers():
    n = 16
    loop = PlaneLoop(
        TorusLift(from_function(lambda t: 0.1 * np.sin(2 * np.pi * t), n)),
        from_function(lambda t: np.cos(2 * np.pi * t), n),
    )
    up = resample(loop, 32)
    assert up.n == 32 and up.has_lift
    np.testing.assert_allclose(
        up.comp2.values, np.cos(2 * np.pi * nodes(32)), atol=1e-12
    )


def test_low_pass_cuts_high_modes():
    n = 32
    f = from_function(
        lambda t: np.cos(2 * np.pi * t) + 0.5 * np.cos(2 * np.pi * 9 * t), n
    )
    g = low_pass(f, kmax=5)
    np.testing.assert_allclose(g.values, np.cos(2 * np.pi * nodes(n)), atol=1e-12)


def test_c0_distance_mixed_grids():
    f = from_function(lambda t: np.sin(2 * np.pi * t), 16)
    g = from_function(lambda t: np.sin(2 * np.pi * t), 64)
    assert c0_distance(f, g) < 1e-12
    h = from_function(lambda t: np.sin(2 * np.pi * t) + 0.25, 64)
    assert abs(c0_distance(f, h) - 0.25) < 1e-12


def test_c0_distance_rejects_mixtures():
    n = 8
    lift = TorusLift.identity(n)
    plain = make_periodic(np.zeros(n))
    with pytest.raises(ValueError):
        c0_distance(lift, plain)
    with pytest.raises(ValueError):
        c0_distance(
            PlaneLoop(lift, plain), PlaneLoop(make_periodic(np.zeros(n)), plain)
        )


def test_serialization_roundtrip_exact():
    rng = np.random.default_rng(3)
    n = 16
    loop = PlaneLoop(
        TorusLift(make_periodic(rng.normal(size=n))),
        make_periodic(rng.normal(size=n)),
    )
    d = fn_to_dict(loop)
    back = fn_from_dict(d)
    assert back.has_lift
    np.testing.assert_array_equal(back.comp1.periodic.values, loop.comp1.periodic.values)
    np.testing.assert_array_equal(back.comp2.values, loop.comp2.values)


def test_arithmetic_and_grid_mismatch():
    f = make_periodic(np.arange(8.0))
    g = make_periodic(np.ones(8))
    np.testing.assert_array_equal((f + g).values, f.values + 1)
    np.testing.assert_array_equal((f - 2.0).values, f.values - 2)
    np.testing.assert_array_equal((3.0 * f).values, 3 * f.values)
    np.testing.assert_array_equal((-f).values, -f.values)
    with pytest.raises(ValueError):
        f + make_periodic(np.ones(16))


def test_torus_lift_derivative():
    n = 32
    p = from_function(lambda t: 0.1 * np.sin(2 * np.pi * t), n)
    lift = TorusLift(p)
    d = lift.derivative()
    want = 1.0 + 0.2 * np.pi * np.cos(2 * np.pi * nodes(n))
    np.testing.assert_allclose(d.values, want, atol=1e-12)
