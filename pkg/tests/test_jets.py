"""Fourier-Taylor jet ring tests.

Oracles: per-node truncated polynomial arithmetic (numpy convolutions),
closed-form Taylor coefficients for the transcendentals, and direct pointwise
evaluation of delayed compositions at small s (remainder-order scaling).
"""

import math

import numpy as np
import pytest

from isocycle.cutoff import Cutoff
from isocycle.errors import DomainError
from isocycle.fourier import nodes
from isocycle.jets import (
    ScalarFT,
    VectorJet,
    as_jet,
    dealias_rows,
    delayed_composition,
    differentiate_rows,
    phi_jet,
    rhs_jet,
)
from isocycle.models import model_from_dict


def random_jet(rng, order, n, scale=1.0):
    return ScalarFT(scale * rng.normal(size=(order, n)))


def jet_eval(S, s):
    """Evaluate the truncated series at radial offset s (all theta nodes)."""
    return sum(S.rows[j] * s**j for j in range(S.order))


# ---------------------------------------------------------------------------
# ring arithmetic


def test_mul_matches_truncated_convolution():
    rng = np.random.default_rng(101)
    a, b = random_jet(rng, 4, 8), random_jet(rng, 4, 8)
    prod = a * b
    for m in range(8):
        want = np.convolve(a.rows[:, m], b.rows[:, m])[:4]
        np.testing.assert_allclose(prod.rows[:, m], want, atol=1e-13)


def test_div_inverts_mul():
    rng = np.random.default_rng(103)
    a = random_jet(rng, 5, 8)
    b = random_jet(rng, 5, 8)
    b.rows[0] += 3.0  # keep the constant term away from zero
    q = (a * b) / b
    np.testing.assert_allclose(q.rows, a.rows, atol=1e-12)
    with pytest.raises(ZeroDivisionError):
        a / random_jet(rng, 5, 8, scale=1e-12)


def test_pow_binary_exponentiation():
    rng = np.random.default_rng(107)
    a = random_jet(rng, 4, 8, scale=0.3)
    p = a**5
    want = a * a * a * a * a
    np.testing.assert_allclose(p.rows, want.rows, atol=1e-13)
    one = a**0
    assert np.all(one.rows[0] == 1.0) and np.all(one.rows[1:] == 0.0)
    with pytest.raises(ValueError):
        a**-1


def test_scalar_and_array_coefficients():
    rng = np.random.default_rng(109)
    a = random_jet(rng, 3, 8)
    th_factor = rng.normal(size=8)
    out = a * th_factor  # s-independent factor multiplies every row
    np.testing.assert_allclose(out.rows, a.rows * th_factor, atol=0)
    shifted = a + 2.5  # constants enter row 0 only
    np.testing.assert_allclose(shifted.rows[0], a.rows[0] + 2.5, atol=0)
    np.testing.assert_allclose(shifted.rows[1:], a.rows[1:], atol=0)


def test_shift_up_and_s_var():
    s = ScalarFT.s_var(4, 8)
    s3 = s.shift_up(2)
    assert np.all(s3.rows[3] == 1.0)
    assert not np.any(s3.rows[:3])
    top = s.shift_up(4)  # falls entirely off the truncation
    assert not np.any(top.rows)


# ---------------------------------------------------------------------------
# transcendentals: closed-form Taylor coefficients of f(a + b s)


def test_exp_closed_form():
    rng = np.random.default_rng(113)
    n, N = 8, 5
    a, b = rng.normal(size=n), rng.normal(size=n)
    rows = np.zeros((N, n))
    rows[0], rows[1] = a, b
    f = ScalarFT(rows).exp()
    for j in range(N):
        want = np.exp(a) * b**j / math.factorial(j)
        np.testing.assert_allclose(f.rows[j], want, atol=1e-12)


def test_sincos_closed_form():
    rng = np.random.default_rng(127)
    n, N = 8, 5
    a, b = rng.normal(size=n), rng.normal(size=n)
    rows = np.zeros((N, n))
    rows[0], rows[1] = a, b
    S = ScalarFT(rows)
    sj, cj = S.sin(), S.cos()
    # d^j/ds^j sin(a+bs) = b^j sin(a + j pi/2)
    for j in range(N):
        np.testing.assert_allclose(
            sj.rows[j],
            b**j * np.sin(a + j * np.pi / 2) / math.factorial(j),
            atol=1e-12,
        )
        np.testing.assert_allclose(
            cj.rows[j],
            b**j * np.cos(a + j * np.pi / 2) / math.factorial(j),
            atol=1e-12,
        )


def test_sqrt_binomial_series():
    n, N = 4, 5
    rows = np.zeros((N, n))
    rows[0], rows[1] = 1.0, 1.0
    f = ScalarFT(rows).sqrt()  # sqrt(1 + s)
    want = [1.0, 0.5, -0.125, 0.0625, -0.0390625]
    for j in range(N):
        np.testing.assert_allclose(f.rows[j], want[j], atol=1e-13)
    bad = ScalarFT(np.zeros((2, 4)))
    with pytest.raises(DomainError):
        bad.sqrt()


def test_sqrt_squares_back():
    rng = np.random.default_rng(131)
    a = random_jet(rng, 5, 8, scale=0.2)
    a.rows[0] = np.abs(a.rows[0]) + 1.0
    r = a.sqrt()
    np.testing.assert_allclose((r * r).rows, a.rows, atol=1e-12)


# ---------------------------------------------------------------------------
# row operators


def test_differentiate_rows_single_mode():
    n = 16
    t = nodes(n)
    rows = np.stack([np.sin(2 * np.pi * t), np.cos(4 * np.pi * t)])
    d = differentiate_rows(ScalarFT(rows))
    np.testing.assert_allclose(d.rows[0], 2 * np.pi * np.cos(2 * np.pi * t), atol=1e-11)
    np.testing.assert_allclose(
        d.rows[1], -4 * np.pi * np.sin(4 * np.pi * t), atol=1e-11
    )


def test_dealias_rows():
    n = 12
    t = nodes(n)
    rows = np.stack([np.cos(2 * np.pi * t) + np.cos(10 * np.pi * t)])
    out = dealias_rows(ScalarFT(rows))  # kmax = 4 kills the k=5 mode
    np.testing.assert_allclose(out.rows[0], np.cos(2 * np.pi * t), atol=1e-12)


# ---------------------------------------------------------------------------
# cut-off of a jet


def test_phi_jet_plateau_and_outside():
    cut = Cutoff(0.5, 1.0)
    n, N = 8, 3
    rows = np.zeros((N, n))
    rows[0] = np.concatenate([np.full(4, 0.2), np.full(4, 1.5)])
    rows[1] = 1.0
    out = phi_jet(ScalarFT(rows), cut)
    np.testing.assert_allclose(out.rows[0][:4], 1.0, atol=0)
    np.testing.assert_allclose(out.rows[1:, :4], 0.0, atol=0)
    np.testing.assert_allclose(out.rows[:, 4:], 0.0, atol=0)


def test_phi_jet_transition_matches_pointwise():
    cut = Cutoff(0.5, 1.0)
    n, N = 8, 4
    rng = np.random.default_rng(137)
    rows = np.zeros((N, n))
    rows[0] = rng.uniform(0.6, 0.9, n) * rng.choice([-1, 1], n)
    rows[1] = rng.normal(size=n) * 0.5
    rows[2] = rng.normal(size=n) * 0.5
    S = ScalarFT(rows)
    out = phi_jet(S, cut)
    # remainder of the truncated series is O(s^N); halving s must shrink it
    # by about 2^N (the leading Taylor coefficient is large: bump-function
    # derivatives grow fast near the transition edges, so no fixed constant)
    sups = []
    for s in (1e-2, 5e-3):
        got = jet_eval(out, s)
        want = cut.phi(jet_eval(S, s))
        sups.append(np.max(np.abs(got - want)))
    assert sups[0] < 1e-4
    assert sups[1] < sups[0] / 10


# ---------------------------------------------------------------------------
# delayed composition


def make_w_jet(rng, order, n):
    """Random lifted jet with band-limited rows (exact re-interpolation)."""
    t = nodes(n)
    rows1 = np.zeros((order, n))
    rows2 = np.zeros((order, n))
    for j in range(order):
        for k in range(1, 4):
            rows1[j] += rng.normal() / (k * k) * np.cos(2 * np.pi * k * t)
            rows1[j] += rng.normal() / (k * k) * np.sin(2 * np.pi * k * t)
            rows2[j] += rng.normal() / (k * k) * np.cos(2 * np.pi * k * t)
    rows2[1] += 1.0
    return VectorJet(ScalarFT(0.1 * rows1), ScalarFT(rows2), lift=True)


def eval_w(W, theta, s):
    """Direct evaluation of the truncated W at scattered (theta, s)."""
    from isocycle.kernels import trig_eval

    halves1 = np.fft.rfft(W.comp1.rows, axis=1) / W.n
    halves2 = np.fft.rfft(W.comp2.rows, axis=1) / W.n
    v1 = trig_eval(halves1, theta)
    v2 = trig_eval(halves2, theta)
    p1 = sum(v1[j] * s**j for j in range(W.order))
    p2 = sum(v2[j] * s**j for j in range(W.order))
    if W.lift:
        p1 = p1 + theta
    return p1, p2


def test_delayed_composition_constant_rho():
    # rho independent of (theta, s): exact closed form by shift and scaling
    rng = np.random.default_rng(139)
    N, n = 4, 32
    W = make_w_jet(rng, N, n)
    omega, lam, rho0 = 1.1, -1.7, 0.21
    rho = ScalarFT.const(rho0, N, n)
    Wt = delayed_composition(W, rho, omega, lam)
    t = nodes(n)
    th = t - omega * rho0
    sig = math.exp(-lam * rho0)
    halves1 = np.fft.rfft(W.comp1.rows, axis=1) / n
    halves2 = np.fft.rfft(W.comp2.rows, axis=1) / n
    from isocycle.kernels import trig_eval

    r1 = trig_eval(halves1, th)
    r2 = trig_eval(halves2, th)
    for j in range(N):
        want1 = r1[j] * sig**j
        if j == 0:
            want1 = want1 - omega * rho0  # lift: theta' - theta = -omega rho0
        np.testing.assert_allclose(Wt.comp1.rows[j], want1, atol=1e-11)
        np.testing.assert_allclose(Wt.comp2.rows[j], r2[j] * sig**j, atol=1e-11)


def test_delayed_composition_remainder_order():
    rng = np.random.default_rng(149)
    N, n = 4, 32
    W = make_w_jet(rng, N, n)
    omega, lam = 0.9, -2.0
    t = nodes(n)
    rho_rows = np.zeros((N, n))
    rho_rows[0] = 0.15 + 0.05 * np.cos(2 * np.pi * t)
    rho_rows[1] = 0.03 * np.sin(2 * np.pi * t)
    rho_rows[2] = 0.02
    rho = ScalarFT(rho_rows)
    Wt = delayed_composition(W, rho, omega, lam)
    sups = []
    for s in (2e-2, 1e-2):
        got1 = jet_eval(Wt.comp1, s) + t
        got2 = jet_eval(Wt.comp2, s)
        rho_s = jet_eval(rho, s)
        want1, want2 = eval_w(W, t - omega * rho_s, s * np.exp(-lam * rho_s))
        sups.append(max(np.max(np.abs(got1 - want1)), np.max(np.abs(got2 - want2))))
    # halving s must shrink the defect by about 2^N
    assert sups[0] < 1e-5
    assert sups[1] < sups[0] / 2 ** (N - 1)


def test_delayed_composition_zero_rho_is_identity():
    rng = np.random.default_rng(151)
    W = make_w_jet(rng, 3, 16)
    out = delayed_composition(W, ScalarFT(np.zeros((3, 16))), 1.0, -2.0)
    assert out.dist(W) == 0.0


# ---------------------------------------------------------------------------
# the right-hand-side jet


def flat_model(eps=0.01):
    return model_from_dict(
        {
            "type": "coords",
            "omega0": 1.0,
            "lambda0": -2.0,
            "eps": eps,
            "h": 0.25,
            "Y": ["0", "v2"],
            "rho": "0.2",
        }
    )


def test_rhs_jet_closed_form_flat_model():
    m = flat_model()
    N, n = 3, 16
    W = VectorJet.identity(N, n)
    out = rhs_jet(W, m, omega=1.0, lam=-2.0)
    assert out.interior
    sig = math.exp(0.2 * 2.0)  # e^{-lam*rho} with lam=-2, rho=0.2
    np.testing.assert_allclose(out.ybar.comp2.rows[1], sig, atol=1e-12)
    np.testing.assert_allclose(out.ybar.comp2.rows[0], 0.0, atol=0)
    np.testing.assert_allclose(out.ybar.comp2.rows[2], 0.0, atol=1e-13)
    np.testing.assert_allclose(out.ybar.comp1.rows, 0.0, atol=0)
    np.testing.assert_allclose(out.jet.comp2.rows, 0.01 * out.ybar.comp2.rows, atol=0)
    # delayed angle recorded in wtilde
    np.testing.assert_allclose(out.wtilde.comp1.rows[0], -0.2, atol=1e-12)


def test_rhs_jet_eps_zero():
    m = flat_model(eps=0.0)
    W = VectorJet.identity(3, 16)
    out = rhs_jet(W, m, omega=1.0, lam=-2.0)
    assert out.interior
    assert not np.any(out.jet.comp1.rows) and not np.any(out.jet.comp2.rows)
    assert out.wtilde.dist(W) == 0.0


def test_rhs_jet_interior_vs_masked_agree():
    # when W stays strictly inside the plateau both evaluation paths must
    # produce the same jet (phi factors are identically one there)
    m = model_from_dict(
        {
            "type": "coords",
            "omega0": 1.0,
            "lambda0": -2.0,
            "eps": 0.05,
            "h": 0.3,
            "Y": ["sin(u1)*v2", "v2*cos(v1) - u2"],
            "rho": "0.1*(1 + u2^2)",
        }
    )
    rng = np.random.default_rng(157)
    N, n = 4, 32
    W = VectorJet.identity(N, n)
    W.comp2.rows[0] = 0.05 * np.cos(2 * np.pi * nodes(n))  # small radial offset
    W.comp1.rows[1] = 0.02 * np.sin(2 * np.pi * nodes(n))
    a = rhs_jet(W, m, omega=1.0, lam=-2.0, assume_interior=True)
    b = rhs_jet(W, m, omega=1.0, lam=-2.0, assume_interior=False)
    assert a.interior and not b.interior
    np.testing.assert_allclose(a.jet.comp1.rows, b.jet.comp1.rows, atol=1e-12)
    np.testing.assert_allclose(a.jet.comp2.rows, b.jet.comp2.rows, atol=1e-12)
    np.testing.assert_allclose(a.rho_bar.rows, b.rho_bar.rows, atol=1e-12)
