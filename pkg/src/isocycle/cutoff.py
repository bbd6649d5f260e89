"""Smooth radial plateau cut-off.

    q(t)   = exp(-1/t) for t > 0, 0 otherwise        (flat at 0)
    u(x)   = clip((a2 - |x|)/(a2 - a1), 0, 1)
    phi(x) = q(u) / (q(u) + q(1 - u))

phi is C-infinity, identically 1 for |x| <= a1, identically 0 for |x| >= a2
(exactly, since q(0) = 0), strictly decreasing in |x| across the transition
band, and even in x. At the defaults a1 = 0.5, a2 = 1 the midpoint value is
phi(0.75) = 1/2 by symmetry of u <-> 1-u.

Multiplying a quantity by phi(x) extends it by zero outside |x| < a2; the
solvers rely on phi vanishing exactly there so that factors it multiplies
never need to be evaluated outside the band (see the masked-evaluation notes
in isocycle.models).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from isocycle.exprs import Dual

__all__ = ["Cutoff"]


def _q(t):
    """exp(-1/t), extended by 0 for t <= 0 (vectorized, warning-free)."""
    t = np.asarray(t, dtype=np.float64)
    safe = np.where(t > 0.0, t, 1.0)
    with np.errstate(under="ignore"):
        return np.where(t > 0.0, np.exp(-1.0 / safe), 0.0)


@dataclass(frozen=True)
class Cutoff:
    """Plateau radius a1 and support radius a2, 0 < a1 < a2."""

    a1: float = 0.5
    a2: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.a1 < self.a2):
            raise ValueError("cut-off radii must satisfy 0 < a1 < a2")

    def phi(self, x):
        """The cut-off value; accepts scalars, arrays, or Dual."""
        if isinstance(x, Dual):
            d = self.dphi(x.val)
            return Dual(self.phi(x.val), tuple(d * g for g in x.grad))
        x = np.asarray(x, dtype=np.float64)
        u = np.clip((self.a2 - np.abs(x)) / (self.a2 - self.a1), 0.0, 1.0)
        qa = _q(u)
        out = qa / (qa + _q(1.0 - u))
        return float(out) if out.ndim == 0 else out

    def dphi(self, x):
        """d phi / dx (vanishes identically outside the open transition band)."""
        x = np.asarray(x, dtype=np.float64)
        ax = np.abs(x)
        trans = (ax > self.a1) & (ax < self.a2)
        out = np.zeros_like(ax)
        if np.any(trans):
            width = self.a2 - self.a1
            u = (self.a2 - ax[trans]) / width
            qa, qb = _q(u), _q(1.0 - u)
            # q'(t) = q(t)/t^2; u in (0,1) strictly on the band
            with np.errstate(under="ignore"):
                qpa = qa / u**2
                qpb = qb / (1.0 - u) ** 2
            dphi_du = (qpa * qb + qa * qpb) / (qa + qb) ** 2
            out[trans] = dphi_du * (-np.sign(x[trans]) / width)
        return float(out) if out.ndim == 0 else out

    def support_mask(self, x):
        """True where phi(x) > 0 (the open support |x| < a2)."""
        return np.abs(np.asarray(x, dtype=np.float64)) < self.a2
