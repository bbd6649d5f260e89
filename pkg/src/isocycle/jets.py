"""Truncated power series in the stable coordinate with periodic-function
coefficients, and the delayed-argument composition built on them.

A `ScalarFT` holds rows[j][m] = j-th series coefficient sampled at grid node
theta_m; arithmetic is exact on the grid (truncated Cauchy products, no
re-interpolation, no smoothing). Series recurrences implement sin/cos/exp/
sqrt and division, so the expression evaluator of `isocycle.exprs` runs
unchanged over this ring.

A `VectorJet` is a pair of ScalarFT components; `lift=True` marks the first
component as a degree-one angular coordinate theta + (periodic), stored by
its periodic part (row 0) so that spectral operations stay well defined.

`delayed_composition` computes the jet of

    (theta, s) -> W(theta - omega*rho(theta,s), s * e^{-lam*rho(theta,s)})

for a jet-valued delay rho, by splitting the angular shift into its s-free
part (applied exactly as a trigonometric re-interpolation) plus an O(s)
remainder expanded as a Taylor series in the shift. The radial scaling
enters through powers of the jet exponential sigma = e^{-lam*rho}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from isocycle import kernels
from isocycle.errors import DomainError
from isocycle.exprs import Dual
from isocycle.fourier import nodes

__all__ = [
    "ScalarFT",
    "VectorJet",
    "as_jet",
    "differentiate_rows",
    "dealias_rows",
    "phi_jet",
    "delayed_composition",
    "rhs_jet",
    "RhsResult",
]


class ScalarFT:
    """Truncated power series sum_j rows[j](theta) s^j on the uniform grid."""

    __slots__ = ("rows",)
    __array_ufunc__ = None

    def __init__(self, rows):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("jet rows must form a 2-d array (order x grid)")
        self.rows = rows

    @property
    def order(self):
        return self.rows.shape[0]

    @property
    def n(self):
        return self.rows.shape[1]

    @classmethod
    def const(cls, value, order, n):
        rows = np.zeros((order, n))
        rows[0] = value
        return cls(rows)

    @classmethod
    def s_var(cls, order, n):
        """The jet of s itself."""
        rows = np.zeros((order, n))
        if order > 1:
            rows[1] = 1.0
        return cls(rows)

    def copy(self):
        return ScalarFT(self.rows.copy())

    def take_cols(self, idx):
        return ScalarFT(self.rows[:, idx])

    def shift_up(self, j):
        """Multiply by s^j (rows above the truncation order fall off)."""
        out = np.zeros_like(self.rows)
        if j < self.order:
            out[j:] = self.rows[: self.order - j]
        return ScalarFT(out)

    # ring operations ------------------------------------------------------
    def _coerce_rows(self, other):
        """Rows of `other` lifted into this jet's shape, or None."""
        if isinstance(other, ScalarFT):
            if other.rows.shape != self.rows.shape:
                raise ValueError("jet shapes differ")
            return other.rows
        return None

    def __add__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        rows = self._coerce_rows(other)
        if rows is not None:
            return ScalarFT(self.rows + rows)
        out = self.rows.copy()
        out[0] += other
        return ScalarFT(out)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, ScalarFT):
            return ScalarFT(self.rows - self._coerce_rows(other))
        return self.__add__(-other)

    def __rsub__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return (-self).__add__(other)

    def __neg__(self):
        return ScalarFT(-self.rows)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        rows = self._coerce_rows(other)
        if rows is None:
            # s-independent factor: scalar or theta-array hits every row
            return ScalarFT(self.rows * other)
        a, b = self.rows, rows
        out = np.zeros_like(a)
        for j in range(self.order):
            for i in range(j + 1):
                out[j] += a[i] * b[j - i]
        return ScalarFT(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        rows = self._coerce_rows(other)
        if rows is None:
            return ScalarFT(self.rows / other)
        b0 = rows[0]
        if b0.size and np.min(np.abs(b0)) < 1e-10:
            raise ZeroDivisionError("jet division by (near-)zero constant term")
        a = self.rows
        out = np.zeros_like(a)
        out[0] = a[0] / b0
        for j in range(1, self.order):
            acc = a[j].copy()
            for k in range(1, j + 1):
                acc -= rows[k] * out[j - k]
            out[j] = acc / b0
        return ScalarFT(out)

    def __rtruediv__(self, other):
        return ScalarFT.const(other, self.order, self.n).__truediv__(self)

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("jet powers must be nonnegative integers")
        acc = ScalarFT.const(1.0, self.order, self.n)
        base = self
        while k:
            if k & 1:
                acc = acc * base
            k >>= 1
            if k:
                base = base * base
        return acc

    # series transcendentals ----------------------------------------------
    def _sincos(self):
        u = self.rows
        N = self.order
        s = np.zeros_like(u)
        c = np.zeros_like(u)
        s[0] = np.sin(u[0])
        c[0] = np.cos(u[0])
        for j in range(1, N):
            accs = np.zeros(self.n)
            accc = np.zeros(self.n)
            for k in range(1, j + 1):
                accs += k * u[k] * c[j - k]
                accc += k * u[k] * s[j - k]
            s[j] = accs / j
            c[j] = -accc / j
        return ScalarFT(s), ScalarFT(c)

    def sin(self):
        return self._sincos()[0]

    def cos(self):
        return self._sincos()[1]

    def exp(self):
        u = self.rows
        N = self.order
        f = np.zeros_like(u)
        with np.errstate(under="ignore"):
            f[0] = np.exp(u[0])
        for j in range(1, N):
            acc = np.zeros(self.n)
            for k in range(1, j + 1):
                acc += k * u[k] * f[j - k]
            f[j] = acc / j
        return ScalarFT(f)

    def sqrt(self):
        u = self.rows
        N = self.order
        f = np.zeros_like(u)
        if u[0].size and np.min(u[0]) < 1e-20:
            raise DomainError("jet sqrt needs a strictly positive constant term")
        f[0] = np.sqrt(u[0])
        for j in range(1, N):
            acc = u[j].copy()
            for k in range(1, j):
                acc -= f[k] * f[j - k]
            f[j] = acc / (2.0 * f[0])
        return ScalarFT(f)

    def __repr__(self):
        return f"ScalarFT(order={self.order}, n={self.n})"


def as_jet(value, order, n):
    """Coerce an evaluator result (float, theta-array, or jet) to ScalarFT."""
    if isinstance(value, ScalarFT):
        return value
    return ScalarFT.const(value, order, n)


def differentiate_rows(S, order=1):
    """Spectral d^m/dtheta^m of every coefficient row (Nyquist zeroed)."""
    H = np.fft.rfft(S.rows, axis=1)
    k = np.arange(H.shape[1])
    H *= (2j * np.pi * k) ** order
    H[:, -1] = 0.0
    return ScalarFT(np.fft.irfft(H, S.n, axis=1))


def dealias_rows(S, kmax=None):
    """2/3-rule low-pass of every coefficient row."""
    if kmax is None:
        kmax = S.n // 3
    H = np.fft.rfft(S.rows, axis=1)
    H[:, kmax + 1 :] = 0.0
    return ScalarFT(np.fft.irfft(H, S.n, axis=1))


@dataclass
class VectorJet:
    """Planar jet (comp1, comp2); lift marks comp1 as theta + periodic,
    stored by its periodic part in row 0."""

    comp1: ScalarFT
    comp2: ScalarFT
    lift: bool = False

    def __post_init__(self):
        if self.comp1.rows.shape != self.comp2.rows.shape:
            raise ValueError("component shapes differ")

    @property
    def order(self):
        return self.comp1.order

    @property
    def n(self):
        return self.comp1.n

    @classmethod
    def identity(cls, order, n):
        """The jet of W(theta, s) = (theta, s)."""
        return cls(
            ScalarFT(np.zeros((order, n))), ScalarFT.s_var(order, n), lift=True
        )

    @classmethod
    def zero(cls, order, n):
        return cls(ScalarFT(np.zeros((order, n))), ScalarFT(np.zeros((order, n))))

    def full1(self):
        """comp1 with the identity added back (non-periodic row 0)."""
        if not self.lift:
            return self.comp1
        rows = self.comp1.rows.copy()
        rows[0] += nodes(self.n)
        return ScalarFT(rows)

    def copy(self):
        return VectorJet(self.comp1.copy(), self.comp2.copy(), self.lift)

    def __sub__(self, other):
        if self.lift != other.lift:
            raise ValueError("cannot subtract lift and non-lift jets")
        return VectorJet(self.comp1 - other.comp1, self.comp2 - other.comp2, False)

    def dist(self, other):
        d = self - other
        return max(
            float(np.max(np.abs(d.comp1.rows))), float(np.max(np.abs(d.comp2.rows)))
        )


# ---------------------------------------------------------------------------
# cut-off of a jet


def phi_jet(x, cut):
    """Jet of phi(x(theta, s)) column by column.

    Columns are classified by the constant term: plateau (identically 1),
    outside the support (identically 0), or transition, where the closed
    form is composed through the jet ring. The classification pad keeps the
    1/u divisions comfortably away from the flat ends; the values it rounds
    to 0/1 differ from phi by less than exp(-1e9).
    """
    x0 = x.rows[0]
    ax = np.abs(x0)
    pad = 1e-9 * (cut.a2 - cut.a1)
    trans = (ax > cut.a1 + pad) & (ax < cut.a2 - pad)
    plateau = ~trans & (ax <= cut.a1 + pad)
    out = np.zeros_like(x.rows)
    out[0][plateau] = 1.0
    idx = np.where(trans)[0]
    if idx.size:
        xs = x.take_cols(idx)
        sgn = np.sign(x0[idx])
        u = (cut.a2 - xs * sgn) * (1.0 / (cut.a2 - cut.a1))
        q1 = ((-1.0) / u).exp()
        q2 = ((-1.0) / (1.0 - u)).exp()
        phi = q1 / (q1 + q2)
        out[:, idx] = phi.rows
    return ScalarFT(out)


# ---------------------------------------------------------------------------
# delayed composition


def delayed_composition(W, rho_bar, omega, lam):
    """Jet of W(theta - omega*rho_bar, s*exp(-lam*rho_bar)).

    W : VectorJet (typically lift=True), rho_bar : ScalarFT on the same
    grid/order. Returns a VectorJet with the same lift flag.

    The angular shift delta = -omega*rho_bar splits into its s-free part
    delta0 (applied exactly: each needed theta-derivative of each
    coefficient row is re-interpolated at theta + delta0) and an O(s)
    remainder expanded by Taylor: the (m, j) term

        (1/m!) * deltaplus^m * (d^m W_j)(theta + delta0) * (s*sigma)^j,

    with sigma = exp(-lam*rho_bar), contributes from order m+j upward, so
    only m + j < order is formed. For the lifted component the identity
    part contributes theta + delta0 at m = 0 and the slope 1 at m = 1.
    """
    N, n = rho_bar.order, rho_bar.n
    if W.comp1.rows.shape != (N, n):
        raise ValueError("jet shapes differ")
    if not np.any(rho_bar.rows):
        return W.copy()

    delta = rho_bar * (-omega)
    delta0 = delta.rows[0].copy()
    deltap_rows = delta.rows.copy()
    deltap_rows[0] = 0.0
    deltap = ScalarFT(deltap_rows)
    sigma = (rho_bar * (-lam)).exp()
    pts = nodes(n) + delta0

    # one batched re-interpolation for every (component, order, derivative)
    halves = []
    index = {}
    for c in (1, 2):
        comp = W.comp1 if c == 1 else W.comp2
        base = np.fft.rfft(comp.rows, axis=1) / n
        k = np.arange(base.shape[1])
        for j in range(N):
            for m in range(N - j):
                H = base[j] * (2j * np.pi * k) ** m
                if m > 0:
                    H[-1] = 0.0
                index[(c, j, m)] = len(halves)
                halves.append(H)
    vals = kernels.trig_eval(np.asarray(halves), pts)

    sig_pows = [ScalarFT.const(1.0, N, n)]
    for _ in range(1, N):
        sig_pows.append(sig_pows[-1] * sigma)
    dp_pows = [ScalarFT.const(1.0, N, n)]
    for _ in range(1, N):
        dp_pows.append(dp_pows[-1] * deltap)

    out = []
    for c in (1, 2):
        acc = ScalarFT(np.zeros((N, n)))
        for m in range(N):
            U = ScalarFT(np.zeros((N, n)))
            for j in range(N - m):
                sv = vals[index[(c, j, m)]]
                if c == 1 and W.lift and j == 0:
                    if m == 0:
                        sv = sv + pts
                    elif m == 1:
                        sv = sv + 1.0
                U = U + (sig_pows[j] * sv).shift_up(j)
            acc = acc + (dp_pows[m] * U) * (1.0 / math.factorial(m))
        out.append(acc)

    comp1, comp2 = out
    if W.lift:
        rows = comp1.rows.copy()
        rows[0] -= nodes(n)
        comp1 = ScalarFT(rows)
    return VectorJet(comp1, comp2, W.lift)


# ---------------------------------------------------------------------------
# the right-hand-side jet


@dataclass
class RhsResult:
    """rhs_jet output: jet = eps * ybar; ybar carries the unscaled field."""

    jet: VectorJet
    ybar: VectorJet
    rho_bar: ScalarFT
    wtilde: VectorJet
    interior: bool


def _masked_pair(fn, args, idx, order, n):
    """Evaluate fn on column-sliced jets, scatter into zero-filled jets."""
    rows1 = np.zeros((order, n))
    rows2 = np.zeros((order, n))
    if idx.size:
        sub = [a.take_cols(idx) for a in args]
        r1, r2 = fn(*sub)
        rows1[:, idx] = as_jet(r1, order, idx.size).rows
        rows2[:, idx] = as_jet(r2, order, idx.size).rows
    return ScalarFT(rows1), ScalarFT(rows2)


def rhs_jet(W, model, omega, lam, *, cut=None, assume_interior=True, dealias=False):
    """Jet of the delayed perturbation term along the parameterization.

    Computes eps * Y(W, W-delayed) with the delay rho evaluated on W,
    cut off radially: the extended delay is rho*phi(W_2) and the field is
    multiplied by phi(W_2)*phi(Wtilde_2). While the radial constant term
    stays strictly inside the plateau (and `assume_interior` holds) the
    cut-off factors are identically 1 and are skipped; otherwise rho and Y
    are only evaluated on columns where the relevant cut-off is positive
    (they may be undefined beyond it) and the product is zero elsewhere.
    """
    N, n = W.order, W.n
    if cut is None:
        cut = model.cutoff
    if model.eps == 0.0:
        zero = VectorJet.zero(N, n)
        return RhsResult(
            jet=zero,
            ybar=VectorJet.zero(N, n),
            rho_bar=ScalarFT(np.zeros((N, n))),
            wtilde=W.copy(),
            interior=True,
        )

    u1 = W.full1()
    u2 = W.comp2
    interior = assume_interior and float(np.max(np.abs(u2.rows[0]))) < cut.a1

    if interior:
        rho_bar = as_jet(model.rho_ring(u1, u2), N, n)
    else:
        phi_a = phi_jet(u2, cut)
        idx = np.where(phi_a.rows[0] > 0.0)[0]
        rho_rows = np.zeros((N, n))
        if idx.size:
            sub = as_jet(
                model.rho_ring(u1.take_cols(idx), u2.take_cols(idx)), N, idx.size
            )
            rho_rows[:, idx] = sub.rows
        rho_bar = ScalarFT(rho_rows) * phi_a

    wt = delayed_composition(W, rho_bar, omega, lam)
    v1, v2 = wt.full1(), wt.comp2

    if interior:
        y1, y2 = model.yfield_ring(u1, u2, v1, v2)
        ybar1, ybar2 = as_jet(y1, N, n), as_jet(y2, N, n)
    else:
        phi_b = phi_jet(v2, cut)
        idx2 = np.where((phi_a.rows[0] > 0.0) & (phi_b.rows[0] > 0.0))[0]
        y1, y2 = _masked_pair(model.yfield_ring, (u1, u2, v1, v2), idx2, N, n)
        weight = phi_a * phi_b
        ybar1, ybar2 = y1 * weight, y2 * weight

    if dealias:
        ybar1, ybar2 = dealias_rows(ybar1), dealias_rows(ybar2)
    ybar = VectorJet(ybar1, ybar2, False)
    jet = VectorJet(ybar1 * model.eps, ybar2 * model.eps, False)
    return RhsResult(jet=jet, ybar=ybar, rho_bar=rho_bar, wtilde=wt, interior=interior)
