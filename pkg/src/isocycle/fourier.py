"""Real 1-periodic functions on a uniform grid, represented spectrally.

Conventions
-----------
Grid nodes are theta_m = m/n, m = 0..n-1, n even. A function is stored by its
samples; everything else refers to the trigonometric interpolant

    f(theta) = c_0 + 2 Re sum_{k=1}^{n/2-1} c_k e^{2 pi i k theta}
                   + c_{n/2} cos(pi n theta),

with c_k = (1/n) sum_m f_m e^{-2 pi i k m/n}. Sampling the interpolant on the
grid returns the stored values (to rounding). The Nyquist coefficient c_{n/2}
is kept for that round trip but forced to zero by every linear operator here
(derivative, antiderivative, resolvent, low-pass): its sine partner is
invisible on the grid, so it cannot transform consistently.

Three containers build on one grid:

- PeriodicFn   : a plain periodic function
- TorusLift    : theta + p(theta) with p periodic (a degree-one circle map
                 lift; the angular component of an invariant loop)
- PlaneLoop    : a pair (comp1, comp2) with comp1 either of the above
"""

from __future__ import annotations

import numpy as np

from isocycle import kernels
from isocycle.errors import SingularModeError

__all__ = [
    "PeriodicFn",
    "TorusLift",
    "PlaneLoop",
    "nodes",
    "make_periodic",
    "from_function",
    "differentiate",
    "antiderivative",
    "spectral_solve",
    "compose_shift",
    "resample",
    "low_pass",
    "c0_distance",
    "fn_to_dict",
    "fn_from_dict",
]


def nodes(n):
    """Uniform grid theta_m = m/n."""
    return np.arange(n) / n


def _check_values(values):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    n = v.size
    if n < 4 or n % 2 != 0:
        raise ValueError("grid size must be even and >= 4")
    if not np.all(np.isfinite(v)):
        raise ValueError("samples must be finite")
    return v


class PeriodicFn:
    """A real 1-periodic function given by samples on the uniform grid."""

    __slots__ = ("values", "n", "_half")

    def __init__(self, values):
        self.values = _check_values(values)
        self.n = self.values.size
        self._half = None

    @property
    def half(self):
        """Half-spectrum c_k = rfft(values)/n, k = 0..n/2."""
        if self._half is None:
            self._half = np.fft.rfft(self.values) / self.n
        return self._half

    def __call__(self, theta):
        """Evaluate the interpolant at arbitrary points (scalar or array)."""
        pts = np.asarray(theta, dtype=np.float64)
        out = kernels.trig_eval(self.half[None, :], pts.ravel())[0]
        if pts.ndim == 0:
            return float(out[0])
        return out.reshape(pts.shape)

    def mean(self):
        return float(np.mean(self.values))

    def derivative(self, order=1):
        return differentiate(self, order)

    # pointwise arithmetic on a shared grid -------------------------------
    def _coerce(self, other):
        if isinstance(other, PeriodicFn):
            if other.n != self.n:
                raise ValueError("grid sizes differ; resample first")
            return other.values
        return np.asarray(other, dtype=np.float64)

    def __add__(self, other):
        return PeriodicFn(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return PeriodicFn(self.values - self._coerce(other))

    def __rsub__(self, other):
        return PeriodicFn(self._coerce(other) - self.values)

    def __mul__(self, other):
        return PeriodicFn(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicFn(-self.values)

    def __repr__(self):
        return f"PeriodicFn(n={self.n})"


class TorusLift:
    """theta + p(theta) with periodic p: the lift of a degree-one circle map.

    Only the periodic part is stored; `full_values` are the non-periodic
    samples theta_m + p(theta_m).
    """

    __slots__ = ("periodic",)

    def __init__(self, periodic):
        if not isinstance(periodic, PeriodicFn):
            periodic = PeriodicFn(periodic)
        self.periodic = periodic

    @classmethod
    def identity(cls, n):
        return cls(PeriodicFn(np.zeros(n)))

    @property
    def n(self):
        return self.periodic.n

    @property
    def full_values(self):
        return nodes(self.n) + self.periodic.values

    def __call__(self, theta):
        return np.asarray(theta, dtype=np.float64) + self.periodic(theta)

    def derivative(self, order=1):
        d = differentiate(self.periodic, order)
        if order == 1:
            d = d + 1.0
        return d

    def __repr__(self):
        return f"TorusLift(n={self.n})"


class PlaneLoop:
    """A curve theta -> (comp1(theta), comp2(theta)); comp1 may carry the
    degree-one lift (angular coordinate), comp2 is plain periodic."""

    __slots__ = ("comp1", "comp2")

    def __init__(self, comp1, comp2):
        if not isinstance(comp1, (PeriodicFn, TorusLift)):
            raise TypeError("comp1 must be PeriodicFn or TorusLift")
        if not isinstance(comp2, PeriodicFn):
            comp2 = PeriodicFn(comp2)
        if comp1.n != comp2.n:
            raise ValueError("components live on different grids")
        self.comp1 = comp1
        self.comp2 = comp2

    @property
    def n(self):
        return self.comp2.n

    @property
    def has_lift(self):
        return isinstance(self.comp1, TorusLift)

    def __call__(self, theta):
        return np.stack([np.asarray(self.comp1(theta)), np.asarray(self.comp2(theta))])

    def __repr__(self):
        kind = "lift" if self.has_lift else "periodic"
        return f"PlaneLoop(n={self.n}, comp1={kind})"


# ---------------------------------------------------------------------------
# constructors


def make_periodic(values):
    """Wrap samples on the uniform grid (even length >= 4, finite)."""
    return PeriodicFn(values)


def from_function(fn, n):
    """Sample a callable on the n-point grid."""
    return PeriodicFn(np.asarray(fn(nodes(n)), dtype=np.float64))


# ---------------------------------------------------------------------------
# linear operators (all zero the Nyquist mode; see module docstring)


def differentiate(f, order=1):
    """order-th derivative of the interpolant, sampled on the grid."""
    if order < 1:
        raise ValueError("order must be >= 1")
    H = np.fft.rfft(f.values)
    k = np.arange(H.size)
    H = H * (2j * np.pi * k) ** order
    H[-1] = 0.0
    return PeriodicFn(np.fft.irfft(H, f.n))


def antiderivative(f, rtol=1e-9):
    """The antiderivative G with G(0) = 0 of a zero-mean function.

    Raises ValueError when |mean(f)| exceeds rtol * max(1, |f|_sup): a
    nonzero mean has no periodic antiderivative.
    """
    H = np.fft.rfft(f.values)
    scale = max(1.0, float(np.max(np.abs(f.values))) if f.n else 1.0)
    if abs(H[0]) > rtol * f.n * scale:
        raise ValueError("antiderivative needs a zero-mean input")
    k = np.arange(H.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        H = np.where(k > 0, H / (2j * np.pi * k), 0.0)
    H[-1] = 0.0
    G = np.fft.irfft(H, f.n)
    return PeriodicFn(G - G[0])


def spectral_solve(g, a, c):
    """Solve a*u' + c*u = g for periodic u, mode by mode.

    u_k = g_k / (c + 2 pi i k a). Raises SingularModeError when the k = 0
    mode is (near-)uninvertible: |c| < 1e-12 * (1 + 2 pi |a|).
    """
    if abs(c) < 1e-12 * (1.0 + 2.0 * np.pi * abs(a)):
        raise SingularModeError(
            f"zero mode not invertible: |c| = {abs(c):.3e} too small"
        )
    H = np.fft.rfft(g.values)
    k = np.arange(H.size)
    H = H / (c + 2j * np.pi * k * a)
    H[-1] = 0.0
    return PeriodicFn(np.fft.irfft(H, g.n))


# ---------------------------------------------------------------------------
# composition, resampling, distances


def compose_shift(f, delta):
    """Samples of theta -> f(theta + delta(theta)).

    `delta` may be a PeriodicFn on the same grid, an array of node values, or
    a scalar. TorusLift inputs return a TorusLift (the shifted lift keeps
    degree one: new periodic part delta + p(theta + delta)).
    """
    n = f.n
    if isinstance(delta, PeriodicFn):
        if delta.n != n:
            raise ValueError("shift lives on a different grid")
        dv = delta.values
    else:
        dv = np.broadcast_to(np.asarray(delta, dtype=np.float64), (n,))
    pts = nodes(n) + dv
    if isinstance(f, TorusLift):
        return TorusLift(PeriodicFn(dv + f.periodic(pts)))
    return PeriodicFn(f(pts))


def resample(f, n2):
    """Re-sample onto an n2-point grid (spectral pad/truncate).

    Upsampling is exact for the interpolant (the old Nyquist cosine splits
    into a +/- pair); downsampling simply drops modes above the new band.
    TorusLift and PlaneLoop inputs are resampled per part.
    """
    if isinstance(f, PlaneLoop):
        return PlaneLoop(resample(f.comp1, n2), resample(f.comp2, n2))
    if isinstance(f, TorusLift):
        return TorusLift(resample(f.periodic, n2))
    n = f.n
    if n2 == n:
        return PeriodicFn(f.values)
    if n2 < 4 or n2 % 2:
        raise ValueError("grid size must be even and >= 4")
    H = np.fft.rfft(f.values)
    if n2 > n:
        H2 = np.zeros(n2 // 2 + 1, dtype=np.complex128)
        H2[: H.size] = H
        H2[n // 2] *= 0.5
    else:
        H2 = H[: n2 // 2 + 1].copy()
        H2[-1] = H2[-1].real
    return PeriodicFn(np.fft.irfft(H2 * (n2 / n), n2))


def low_pass(f, kmax=None):
    """Zero all modes with k > kmax (default floor(n/3): the 2/3 rule)."""
    if kmax is None:
        kmax = f.n // 3
    H = np.fft.rfft(f.values)
    H[kmax + 1 :] = 0.0
    return PeriodicFn(np.fft.irfft(H, f.n))


def c0_distance(f, g):
    """Grid-sup distance. Pairs of PeriodicFn (resampled to the finer grid),
    TorusLift (distance of periodic parts), or PlaneLoop (max over
    components) are accepted; lift/periodic mixtures are not comparable."""
    if isinstance(f, PlaneLoop) and isinstance(g, PlaneLoop):
        if f.has_lift != g.has_lift:
            raise ValueError("loops with and without lift are not comparable")
        return max(c0_distance(f.comp1, g.comp1), c0_distance(f.comp2, g.comp2))
    if isinstance(f, TorusLift) and isinstance(g, TorusLift):
        return c0_distance(f.periodic, g.periodic)
    if isinstance(f, TorusLift) or isinstance(g, TorusLift):
        raise ValueError("lift and plain periodic are not comparable")
    n = max(f.n, g.n)
    fv = resample(f, n).values if f.n != n else f.values
    gv = resample(g, n).values if g.n != n else g.values
    return float(np.max(np.abs(fv - gv)))


# ---------------------------------------------------------------------------
# serialization (values are authoritative: exact float round trip via repr)


def fn_to_dict(f):
    if isinstance(f, PlaneLoop):
        return {"comp1": fn_to_dict(f.comp1), "comp2": fn_to_dict(f.comp2)}
    if isinstance(f, TorusLift):
        return {"kind": "lift", "values": f.periodic.values.tolist()}
    return {"kind": "periodic", "values": f.values.tolist()}


def fn_from_dict(d):
    if "comp1" in d:
        return PlaneLoop(fn_from_dict(d["comp1"]), fn_from_dict(d["comp2"]))
    values = np.asarray(d["values"], dtype=np.float64)
    if d["kind"] == "lift":
        return TorusLift(PeriodicFn(values))
    if d["kind"] == "periodic":
        return PeriodicFn(values)
    raise ValueError(f"unknown function kind {d['kind']!r}")
