"""Smooth plateau cut-off tests."""

import numpy as np
import pytest

from isocycle.cutoff import Cutoff
from isocycle.exprs import Dual


def test_plateau_and_support_are_exact():
    cut = Cutoff(0.5, 1.0)
    assert cut.phi(0.0) == 1.0
    assert cut.phi(0.5) == 1.0
    assert cut.phi(-0.49) == 1.0
    assert cut.phi(1.0) == 0.0
    assert cut.phi(-3.7) == 0.0  # exactly zero, not just tiny
    assert cut.phi(1.0 + 1e-12) == 0.0


def test_midpoint_symmetry():
    cut = Cutoff(0.5, 1.0)
    assert abs(cut.phi(0.75) - 0.5) < 1e-15
    # phi(a1 + t) + phi(a2 - t) == 1 across the band
    t = np.linspace(0.0, 0.5, 31)
    np.testing.assert_allclose(cut.phi(0.5 + t) + cut.phi(1.0 - t), 1.0, atol=1e-14)


def test_even_and_monotone():
    cut = Cutoff(0.5, 1.0)
    x = np.linspace(0.0, 1.2, 200)
    np.testing.assert_allclose(cut.phi(x), cut.phi(-x), atol=0)
    band = cut.phi(np.linspace(0.5, 1.0, 100))
    assert np.all(np.diff(band) <= 0)
    assert np.all((band >= 0) & (band <= 1))


def test_general_radii():
    cut = Cutoff(0.2, 1.7)
    assert cut.phi(0.19) == 1.0
    assert cut.phi(1.71) == 0.0
    mid = 0.5 * (0.2 + 1.7)
    assert abs(cut.phi(mid) - 0.5) < 1e-15
    with pytest.raises(ValueError):
        Cutoff(1.0, 0.5)
    with pytest.raises(ValueError):
        Cutoff(0.0, 1.0)


def test_dphi_matches_finite_differences():
    cut = Cutoff(0.5, 1.0)
    rng = np.random.default_rng(11)
    x = np.concatenate([rng.uniform(0.52, 0.98, 40), -rng.uniform(0.52, 0.98, 40)])
    hstep = 1e-6
    fd = (cut.phi(x + hstep) - cut.phi(x - hstep)) / (2 * hstep)
    np.testing.assert_allclose(cut.dphi(x), fd, atol=5e-9)


def test_dphi_zero_off_band():
    cut = Cutoff(0.5, 1.0)
    x = np.array([-2.0, -1.0, -0.3, 0.0, 0.4999, 1.0, 1.5])
    np.testing.assert_allclose(cut.dphi(x), 0.0, atol=0)


def test_phi_accepts_dual():
    cut = Cutoff(0.5, 1.0)
    x = 0.8
    d = cut.phi(Dual(x, (1.0,)))
    assert isinstance(d, Dual)
    assert d.val == cut.phi(x)
    assert d.grad[0] == cut.dphi(x)
    # flat region: derivative exactly zero
    d0 = cut.phi(Dual(0.1, (1.0,)))
    assert d0.val == 1.0 and d0.grad[0] == 0.0


def test_support_mask():
    cut = Cutoff(0.5, 1.0)
    x = np.array([-1.2, -0.999, 0.0, 0.999, 1.0, 2.0])
    np.testing.assert_array_equal(
        cut.support_mask(x), [False, True, True, True, False, False]
    )
    consistent = cut.phi(x)[~cut.support_mask(x)]
    np.testing.assert_allclose(consistent, 0.0, atol=0)
