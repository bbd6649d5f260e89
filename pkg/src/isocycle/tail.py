"""The remainder beyond the polynomial orders, and off-grid evaluation.

The parameterization is carried as W(theta, s) = sum_{j<N} Wj(theta) s^j
+ s^N V(theta, s) with the weighted remainder V stored on a Fourier x
Chebyshev-Lobatto grid over theta in [0,1) and s in [-s_max, s_max]. The
remainder solves the transport equation

    omega dH/dtheta + lam s dH/ds - (0, lam0 H_2) = eps * Yrem * phi(s),

where Yrem is the cut-off field along W minus its own first N Taylor
coefficients in s (so the right-hand side is O(s^N) near the loop and
vanishes for |s| >= a2). Integrating along the expanding characteristics
t -> (theta + omega t, s e^{lam t}) turns this into the contraction the
stage iterates:

    H(theta, s) = diag(1, e^{-lam0 T}) H(theta + omega T, s e^{lam T})
                  - int_0^T diag(1, e^{-lam0 t}) (eps Yrem phi)(theta + omega t,
                                                             s e^{lam t}) dt.

The identity holds for every horizon T > 0; the weighted gain of the carried
endpoint term is e^{(N lam - lam0) T}. `QuadConfig.horizon_gain` picks T so
that this gain is a fixed small number (short horizon, endpoint carried);
`horizon_gain = None` instead pushes T out until the endpoint term is below
`tail_tol` and drops it (the plain truncated integral). Both forms have the
same fixed point; the short-horizon form needs a shorter quadrature range
and keeps the e^{-lam0 t} weight from amplifying evaluation noise.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from isocycle import kernels
from isocycle.config import SolveReport
from isocycle.errors import ConvergenceError, DomainError, QuadratureError
from isocycle.fourier import nodes, resample
from isocycle.jets import ScalarFT, VectorJet, rhs_jet
from isocycle.variational import build_jet

__all__ = [
    "TailFn",
    "WEvaluator",
    "cheb_nodes",
    "bary_weights",
    "cheb_diff",
    "bary_matrix",
    "default_s_max",
    "tail_eval",
    "tail_apply",
    "source_nodes",
    "prolong_tail",
    "solve_tail",
    "residual_tail",
]


# ---------------------------------------------------------------------------
# Chebyshev-Lobatto machinery across the stable coordinate


def cheb_nodes(n_cheb, s_max):
    """Lobatto abscissae s_max*cos(pi*l/(n_cheb-1)), l = 0..n_cheb-1.

    Runs from +s_max down to -s_max; an even count keeps s = 0 (where the
    remainder weight s^N degenerates) off the grid.
    """
    if n_cheb < 2:
        raise ValueError("need at least two Chebyshev nodes")
    return s_max * np.cos(np.pi * np.arange(n_cheb) / (n_cheb - 1))


def bary_weights(n_cheb):
    """Barycentric weights for the Lobatto nodes: (-1)^l, halved at the ends."""
    w = np.ones(n_cheb)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def cheb_diff(s_nodes, w=None):
    """Differentiation matrix on arbitrary nodes with barycentric weights."""
    x = np.asarray(s_nodes, dtype=np.float64)
    if w is None:
        w = bary_weights(x.size)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def bary_matrix(s_nodes, w, s_pts):
    """Interpolation matrix: (values at s_nodes) -> (values at s_pts)."""
    d = np.asarray(s_pts, dtype=np.float64)[:, None] - s_nodes[None, :]
    exact = np.abs(d) < 1e-14 * max(float(np.max(np.abs(s_nodes))), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        B = w[None, :] / d
    for i in np.where(exact.any(axis=1))[0]:
        B[i] = 0.0
        B[i, np.argmax(exact[i])] = 1.0
    return B / B.sum(axis=1)[:, None]


# Weighted-source columns closer to 0 than this take interpolated values:
# the field and its polynomial part agree there to machine epsilon, so
# dividing by s^N amplifies that noise as eps_mach / s^N, far past what a
# 12-point local interpolation from the adjacent stable columns loses.
_PATCH_RADIUS = 6e-3


def _inner_patch(s):
    """Replacement rows for weighted columns too close to s = 0.

    Picks the 6 nearest stable columns on each side of the hole; returns
    (bad_indices, window_indices, rows) with `values[.., win] @ rows.T`
    interpolating the bad columns, or None when nothing needs patching or
    the grid is too coarse to supply a window (there the nearest node sits
    far enough out that the division noise is already negligible).
    """
    s = np.asarray(s, dtype=np.float64)
    bad = np.where(np.abs(s) < _PATCH_RADIUS)[0]
    if not bad.size:
        return None
    pos = np.where(s >= _PATCH_RADIUS)[0]
    neg = np.where(s <= -_PATCH_RADIUS)[0]
    if pos.size < 6 or neg.size < 6:
        return None
    win = np.concatenate(
        [pos[np.argsort(s[pos])[:6]], neg[np.argsort(-s[neg])[:6]]]
    )
    x = s[win]
    P = x[:, None] - x[None, :]
    np.fill_diagonal(P, 1.0)
    w = 1.0 / np.prod(P, axis=1)
    return bad, win, bary_matrix(x, w, s[bad])


def default_s_max(model):
    """Strip half-width: reach of the delayed stable coordinate with margin.

    The delayed point scales s by e^{-lam*rho} <= e^{|lam| h}, and the rate
    is trusted within |lam| <= (4/3)|lam0|; 5% margin on top.
    """
    return model.cutoff.a2 * math.exp((4.0 / 3.0) * abs(model.lambda0) * model.h) * 1.05


def delay_reach(model, lam, n_radial=201, n_angle=61):
    """Largest radius the delayed stable coordinate can actually hit.

    The extended delay rho(W) * phi(s) only acts on the cut-off support and
    trades against the starting radius: the read lands at |s| e^{|lam| rho
    phi(s)}, which peaks well inside the support, far below the crude bound
    a2 * e^{|lam| h}. The scan maximizes over the angle at each radius; the
    parameterization's own corrections to the scan arguments are O(eps) and
    covered by the caller's margin.
    """
    cut = model.cutoff
    th = np.arange(n_angle) / n_angle
    best = cut.a2
    for u2 in np.linspace(-0.999 * cut.a2, 0.999 * cut.a2, n_radial):
        w = cut.phi(float(u2))
        if w <= 0.0:
            continue
        rho = float(np.max(np.asarray(
            model.rho_ring(th, np.full(th.size, u2))))) * w
        best = max(best, abs(u2) * math.exp(abs(lam) * rho))
    return best


class TailFn:
    """Weighted remainder V on the theta x s grid; the remainder itself is
    H(theta, s) = s^order * V(theta, s)."""

    __slots__ = ("values", "s_max", "order", "n_theta", "n_cheb",
                 "s_nodes", "bary_w", "_vhat")

    def __init__(self, values, s_max, order):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != 2:
            raise ValueError("remainder values must have shape (2, n_theta, n_cheb)")
        if not np.all(np.isfinite(v)):
            raise ValueError("remainder values must be finite")
        self.values = v
        self.s_max = float(s_max)
        self.order = int(order)
        self.n_theta = v.shape[1]
        self.n_cheb = v.shape[2]
        self.s_nodes = cheb_nodes(self.n_cheb, self.s_max)
        self.bary_w = bary_weights(self.n_cheb)
        self._vhat = None

    @classmethod
    def zero(cls, n_theta, n_cheb, s_max, order):
        return cls(np.zeros((2, n_theta, n_cheb)), s_max, order)

    @property
    def vhat(self):
        if self._vhat is None:
            self._vhat = np.fft.rfft(self.values, axis=1) / self.n_theta
        return self._vhat

    def norm(self):
        """The weighted sup norm: sup |V| over the grid."""
        return float(np.max(np.abs(self.values)))

    def dist(self, other):
        return float(np.max(np.abs(self.values - other.values)))

    def eval_v(self, theta, s):
        """V at scattered points; (2, M) for 1-d inputs."""
        th = np.ascontiguousarray(np.ravel(theta), dtype=np.float64)
        sp = np.ascontiguousarray(np.ravel(s), dtype=np.float64)
        return kernels.mixed_eval(self.vhat, self.s_nodes, self.bary_w, th, sp)

    def eval_h(self, theta, s):
        """The remainder H = s^order * V at scattered points."""
        sp = np.ravel(np.asarray(s, dtype=np.float64))
        return self.eval_v(theta, sp) * sp[None, :] ** self.order

    def to_dict(self):
        return {
            "s_max": self.s_max,
            "order": self.order,
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["values"], dtype=np.float64), d["s_max"], d["order"])

    def __repr__(self):
        return (f"TailFn(n_theta={self.n_theta}, n_cheb={self.n_cheb}, "
                f"s_max={self.s_max:g}, order={self.order})")


def tail_eval(tail, theta, s):
    """Module-level convenience: the remainder H at scattered points."""
    return tail.eval_h(theta, s)


# ---------------------------------------------------------------------------
# fast scattered lookup of the remainder through a local-stencil compression


class _FineV:
    """Local-stencil evaluation of V on a refined tensor grid.

    Exact mixed trig x barycentric evaluation costs O(modes * columns) per
    scattered point, which dominates large solves. But V only enters the
    field through composition arguments whose influence on the source
    carries the eps prefactor, so those lookups tolerate a tiny controlled
    evaluation error. This compression prolongs V onto a doubled grid once
    (spectral pad, global barycentric matrix) and then reads scattered
    points through 6x6 tensor-product stencils: degree-5 Lagrange across
    the uniform angles, degree-5 barycentric across the local Chebyshev
    window. `build_checked` verifies the compression against the exact
    kernel at sample points and refuses itself when too coarse.
    """

    _OFFS = np.arange(-2.0, 4.0)

    def __init__(self, tail, factor=2):
        fine = prolong_tail(tail, factor * tail.n_theta, factor * tail.n_cheb)
        self.values = fine.values
        self.s = fine.s_nodes
        self.s_max = fine.s_max
        self.nf = fine.n_theta
        self.Lf = fine.n_cheb

    def eval(self, theta, sp):
        """V at scattered points: (2, M)."""
        th = np.ravel(np.asarray(theta, dtype=np.float64))
        sp = np.ravel(np.asarray(sp, dtype=np.float64))
        out = np.empty((2, th.size))
        step = 200_000
        for a in range(0, th.size, step):
            b = min(a + step, th.size)
            out[:, a:b] = self._chunk(th[a:b], sp[a:b])
        return out

    def _chunk(self, th, sp):
        nf, Lf = self.nf, self.Lf
        pos = (th - np.floor(th)) * nf
        i0 = np.minimum(pos.astype(np.int64), nf - 1)
        t = pos - i0
        cols = (i0[:, None] + self._OFFS.astype(np.int64)[None, :]) % nf
        D = t[:, None] - self._OFFS[None, :]
        wth = np.empty((th.size, 6))
        for e in range(6):
            idx = [f for f in range(6) if f != e]
            wth[:, e] = np.prod(D[:, idx], axis=1) / np.prod(
                self._OFFS[e] - self._OFFS[idx]
            )

        u = np.arccos(np.clip(sp / self.s_max, -1.0, 1.0))
        j0 = np.clip(
            (u * ((Lf - 1) / np.pi)).astype(np.int64) - 2, 0, Lf - 6
        )
        rows = j0[:, None] + np.arange(6)[None, :]
        x = self.s[rows]
        d = sp[:, None] - x
        P = x[:, :, None] - x[:, None, :]
        P[:, np.arange(6), np.arange(6)] = 1.0
        wj = 1.0 / np.prod(P, axis=2)
        hit = np.abs(d) < 1e-13 * self.s_max
        anyhit = hit.any(axis=1)
        d[anyhit] = np.where(hit[anyhit], 1.0, np.inf)
        ws = wj / d
        ws /= ws.sum(axis=1)[:, None]

        out = np.empty((2, th.size))
        for c in range(2):
            block = self.values[c][cols[:, :, None], rows[:, None, :]]
            out[c] = np.einsum("me,mes,ms->m", wth, block, ws, optimize=True)
        return out

    @classmethod
    def build_checked(cls, tail):
        """Compression with a self-test; None when it cannot hold its error.

        Sample points follow low-discrepancy strides so the check is
        deterministic; the tolerance is far below the eps-damped influence
        the lookup has on the source term.
        """
        fine = cls(tail)
        k = np.arange(1, 161)
        th = np.mod(0.6180339887498949 * k, 1.0)
        sp = tail.s_max * 0.999 * (2.0 * np.mod(0.7548776662466927 * k, 1.0) - 1.0)
        gap = float(np.max(np.abs(fine.eval(th, sp) - tail.eval_v(th, sp))))
        if gap > max(2e-5 * tail.norm(), 1e-13):
            return None
        return fine


# ---------------------------------------------------------------------------
# scattered evaluation of the assembled parameterization and its field


class WEvaluator:
    """Evaluate W = polynomial orders + remainder, and the cut-off field
    along it, at scattered (theta, s) points.

    Holds the per-order coefficient spectra once; the remainder iterate is
    passed per call, so one evaluator serves a whole fixed-point run.
    """

    def __init__(self, model, omega, lam, loops, cut=None):
        self.model = model
        self.omega = float(omega)
        self.lam = float(lam)
        self.cut = cut if cut is not None else model.cutoff
        self.order = len(loops)
        self._jet = build_jet(loops)
        self.n = self._jet.n
        self._whalf = np.concatenate(
            [
                np.fft.rfft(self._jet.comp1.rows, axis=1),
                np.fft.rfft(self._jet.comp2.rows, axis=1),
            ]
        ) / self.n
        self._shalf = None

    def set_source(self, dealias=False):
        """Freeze the polynomial part of the field (the N coefficients the
        remainder equation subtracts), from the full right-hand-side jet."""
        rr = rhs_jet(
            self._jet, self.model, self.omega, self.lam,
            cut=self.cut, assume_interior=True, dealias=dealias,
        )
        self._shalf = np.concatenate(
            [
                np.fft.rfft(rr.jet.comp1.rows, axis=1),
                np.fft.rfft(rr.jet.comp2.rows, axis=1),
            ]
        ) / self.n
        return rr

    def _horner(self, half, th, sp):
        """Evaluate two stacked coefficient groups as polynomials in s."""
        N = self.order
        vals = kernels.trig_eval(half, th)
        u1 = vals[N - 1].copy()
        u2 = vals[2 * N - 1].copy()
        for j in range(N - 2, -1, -1):
            u1 *= sp
            u1 += vals[j]
            u2 *= sp
            u2 += vals[N + j]
        return u1, u2

    def w_values(self, theta, s, tail=None, fine=None):
        """(u1, u2) of the parameterization at scattered points (M,).

        `fine` routes the remainder lookup through a checked local-stencil
        compression of the same iterate; callers use it only where the
        lookup's influence carries the eps prefactor.
        """
        th = np.ascontiguousarray(np.ravel(theta), dtype=np.float64)
        sp = np.ascontiguousarray(np.ravel(s), dtype=np.float64)
        u1, u2 = self._horner(self._whalf, th, sp)
        u1 += th
        if tail is not None:
            if float(np.max(np.abs(sp), initial=0.0)) > tail.s_max * (1.0 + 1e-9):
                raise DomainError("evaluation point left the remainder strip")
            if fine is not None:
                eh = fine.eval(th, sp) * sp[None, :] ** tail.order
            else:
                eh = tail.eval_h(th, sp)
            u1 += eh[0]
            u2 += eh[1]
        return u1, u2

    def source_values(self, theta, s):
        """The subtracted polynomial part of the field at scattered points."""
        if self._shalf is None:
            raise RuntimeError("call set_source() first")
        th = np.ascontiguousarray(np.ravel(theta), dtype=np.float64)
        sp = np.ascontiguousarray(np.ravel(s), dtype=np.float64)
        p1, p2 = self._horner(self._shalf, th, sp)
        return np.stack([p1, p2])

    def field_values(self, theta, s, tail=None, fine=None):
        """eps * cut-off field along W at scattered points: (2, M).

        The extended delay is rho(W) * phi(s) with the radial coordinate as
        the cut-off argument; the field itself is weighted by
        phi(W_2) * phi(Wtilde_2). Expressions are evaluated only where the
        relevant weight is positive; the delayed point re-enters through
        this evaluator.
        """
        m = self.model
        th = np.ravel(np.asarray(theta, dtype=np.float64))
        sp = np.ravel(np.asarray(s, dtype=np.float64))
        out = np.zeros((2, th.size))
        if m.eps == 0.0:
            return out
        u1, u2 = self.w_values(th, sp, tail, fine)
        phi_u = self.cut.phi(u2)
        phi_s = self.cut.phi(sp)
        idx = np.where(phi_u > 0.0)[0]
        if not idx.size:
            return out
        rho = np.zeros(idx.size)
        on = phi_s[idx] > 0.0
        if on.any():
            rho[on] = np.broadcast_to(
                np.asarray(
                    m.rho_ring(u1[idx][on], u2[idx][on]), dtype=np.float64
                ),
                rho[on].shape,
            ) * phi_s[idx][on]
        thd = th[idx] - self.omega * rho
        sd = sp[idx] * np.exp(-self.lam * rho)
        v1, v2 = self.w_values(thd, sd, tail, fine)
        phi_v = self.cut.phi(v2)
        live = phi_v > 0.0
        if not live.any():
            return out
        jdx = idx[live]
        y1, y2 = m.yfield_ring(u1[jdx], u2[jdx], v1[live], v2[live])
        wgt = m.eps * phi_u[jdx] * phi_v[live]
        out[0, jdx] = np.broadcast_to(np.asarray(y1, dtype=np.float64), jdx.shape) * wgt
        out[1, jdx] = np.broadcast_to(np.asarray(y2, dtype=np.float64), jdx.shape) * wgt
        return out

    def ytail_values(self, theta, s, tail, fine=None):
        """eps * (field minus its polynomial part) at scattered points."""
        return self.field_values(theta, s, tail, fine) - self.source_values(theta, s)

    def weighted_grid(self, tail, s_nodes=None, fine=None):
        """(field - polynomial part)/s^N over theta rows x s columns.

        Tensor counterpart of ytail_values at the grid nodes, divided by the
        vanishing weight so every column stays bounded. The undelayed
        parameterization and the subtracted polynomial are Horner sums of
        native theta rows; only the delayed point needs scattered
        evaluation, and only on columns where the radial cut-off admits a
        delay. Columns default to the tail's own grid; passing `s_nodes`
        samples a different column set (the quadrature only ever reads the
        source inside the cut-off support, so a dedicated grid there puts
        its resolution where the bump lives). Columns with s = 0 take the
        interpolated limit, cross-checked against the smallest nonzero node.
        """
        m = self.model
        n = tail.n_theta
        th = nodes(n)
        s = tail.s_nodes if s_nodes is None else np.asarray(s_nodes, dtype=np.float64)
        L = s.size
        N = self.order
        if self._shalf is None:
            raise RuntimeError("call set_source() first")
        wv = kernels.trig_eval(self._whalf, th)
        sv = kernels.trig_eval(self._shalf, th)
        u1 = np.broadcast_to(wv[N - 1][:, None], (n, L)).copy()
        u2 = np.broadcast_to(wv[2 * N - 1][:, None], (n, L)).copy()
        p1 = np.broadcast_to(sv[N - 1][:, None], (n, L)).copy()
        p2 = np.broadcast_to(sv[2 * N - 1][:, None], (n, L)).copy()
        for j in range(N - 2, -1, -1):
            u1 *= s
            u1 += wv[j][:, None]
            u2 *= s
            u2 += wv[N + j][:, None]
            p1 *= s
            p1 += sv[j][:, None]
            p2 *= s
            p2 += sv[N + j][:, None]
        u1 += th[:, None]
        if s_nodes is None:
            hv = tail.values * s**N
        else:
            B = bary_matrix(tail.s_nodes, tail.bary_w, s)
            hv = (tail.values @ B.T) * s**N
        u1 += hv[0]
        u2 += hv[1]

        field1 = np.zeros((n, L))
        field2 = np.zeros((n, L))
        if m.eps != 0.0:
            phi_u = self.cut.phi(u2)
            phi_s = self.cut.phi(s)
            v1, v2 = u1.copy(), u2.copy()
            ri, ci = np.nonzero((phi_u > 0.0) & (phi_s > 0.0))
            if ri.size:
                rho = np.broadcast_to(
                    np.asarray(m.rho_ring(u1[ri, ci], u2[ri, ci]), dtype=np.float64),
                    ri.shape,
                ) * phi_s[ci]
                vv1, vv2 = self.w_values(
                    th[ri] - self.omega * rho,
                    s[ci] * np.exp(-self.lam * rho),
                    tail,
                    fine,
                )
                v1[ri, ci] = vv1
                v2[ri, ci] = vv2
            wgt = m.eps * phi_u * self.cut.phi(v2)
            li, lj = np.nonzero(wgt > 0.0)
            if li.size:
                y1, y2 = m.yfield_ring(
                    u1[li, lj], u2[li, lj], v1[li, lj], v2[li, lj]
                )
                field1[li, lj] = np.broadcast_to(
                    np.asarray(y1, dtype=np.float64), li.shape
                ) * wgt[li, lj]
                field2[li, lj] = np.broadcast_to(
                    np.asarray(y2, dtype=np.float64), li.shape
                ) * wgt[li, lj]

        G = np.stack([field1 - p1, field2 - p2])
        patch = _inner_patch(s)
        if patch is not None:
            bad, win, rows = patch
            keep = np.ones(L, dtype=bool)
            keep[bad] = False
            G[:, :, keep] /= s[keep] ** N
            # leave-one-out guard: the innermost window column must agree
            # with what its neighbors predict, else the source is
            # under-resolved where the weight bites hardest
            x = s[win]
            k0 = int(np.argmin(np.abs(x)))
            oth = np.delete(np.arange(win.size), k0)
            Po = x[oth][:, None] - x[oth][None, :]
            np.fill_diagonal(Po, 1.0)
            wo = 1.0 / np.prod(Po, axis=1)
            row = bary_matrix(x[oth], wo, x[k0 : k0 + 1])[0]
            pred = G[:, :, win[oth]] @ row
            scale = max(float(np.max(np.abs(G[:, :, keep]))), 1e-300)
            if float(np.max(np.abs(pred - G[:, :, win[k0]]))) > 0.5 * scale + 1e-12:
                raise QuadratureError(
                    "weighted source near s = 0 is inconsistent with its "
                    "neighboring columns; refine n_cheb"
                )
            G[:, :, bad] = G[:, :, win] @ rows.T
        else:
            live = s != 0.0
            G[:, :, live] /= s[live] ** N
            if not live.all():
                j0 = int(np.argmin(np.abs(s)))
                keep = np.arange(L) != j0
                # dropping the node at 0 rescales each barycentric weight by
                # its distance to the dropped node: w'_j = w_j * (s_j - 0)
                row = bary_matrix(
                    s[keep], bary_weights(L)[keep] * s[keep], np.zeros(1)
                )[0]
                lim = G[:, :, keep] @ row
                near = int(np.argmin(np.abs(s[keep])))
                ref = G[:, :, keep][:, :, near]
                scale = max(float(np.max(np.abs(G))), 1e-300)
                if float(np.max(np.abs(lim - ref))) > 0.5 * scale + 1e-12:
                    raise QuadratureError(
                        "weighted source limit at s = 0 is inconsistent with "
                        "the smallest nonzero node; refine n_cheb"
                    )
                G[:, :, j0] = lim
        return G


# ---------------------------------------------------------------------------
# the remainder fixed point


def _gauss_panels(T, panels, nodes_per_panel):
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def _horizon(quad, order, lam, lambda0):
    decay = order * lam - lambda0
    if decay >= 0.0:
        raise DomainError(
            f"remainder order {order} does not decay along characteristics "
            f"({order}*lam - lam0 = {decay:.3g} >= 0); raise the order"
        )
    if quad.horizon_gain is None:
        return math.log(quad.tail_tol) / decay, False
    return math.log(quad.horizon_gain) / decay, True


def _shifted_rows(half, n, delta):
    """Rows' trigonometric interpolants sampled on the grid shifted by
    delta: a phase twist of the rfft; the Nyquist bin takes its cosine
    value, exact for uniform-grid targets."""
    phase = np.exp(2j * np.pi * np.arange(n // 2 + 1) * delta)
    if n % 2 == 0:
        phase[-1] = math.cos(math.pi * n * delta)
    return np.fft.irfft(half * phase[:, None], n, axis=-2)


class _DilatedSampler:
    """Samples a grid function's interpolant at (theta_i + delta, targets).

    On an even (symmetric) Lobatto grid the interpolant splits into even
    and odd parts; each is a polynomial in x = s^2 interpolated on the
    positive half-grid, whose barycentric weights follow from the full ones
    as s_j * w_j. A target and its negative then share one interpolation
    row: half the matrix-product work, a quarter of the matrix build. Odd
    grids fall back to the full barycentric matrix.
    """

    def __init__(self, values, s_nodes, bary_w):
        self.n = values.shape[1]
        self.L = values.shape[2]
        self.s = s_nodes
        self.w = bary_w
        self.folded = self.L % 2 == 0
        vhat = np.fft.rfft(values, axis=1)
        if self.folded:
            half = self.L // 2
            self.half = half
            sh = s_nodes[:half]
            self.xh = sh * sh
            self.wx = bary_w[:half] * sh
            mir = vhat[..., ::-1]
            self.ehat = 0.5 * (vhat + mir)[..., :half]
            self.qhat = (0.5 / sh) * (vhat - mir)[..., :half]
        else:
            self.vhat = vhat

    def _parts(self, delta, targets):
        B = bary_matrix(self.xh, self.wx, targets * targets)
        E = _shifted_rows(self.ehat, self.n, delta)
        Q = _shifted_rows(self.qhat, self.n, delta)
        VE = (E.reshape(2 * self.n, self.half) @ B.T).reshape(2, self.n, targets.size)
        VQ = (Q.reshape(2 * self.n, self.half) @ B.T).reshape(2, self.n, targets.size)
        VQ *= targets[None, None, :]
        return VE, VQ

    def sample(self, delta, targets):
        """Values at (theta_i + delta, targets): (2, n, m), signed targets."""
        targets = np.asarray(targets, dtype=np.float64)
        if self.folded:
            VE, VQ = self._parts(delta, targets)
            return VE + VQ
        V = _shifted_rows(self.vhat, self.n, delta)
        B = bary_matrix(self.s, self.w, targets)
        return (V.reshape(2 * self.n, self.L) @ B.T).reshape(2, self.n, targets.size)

    def sample_pair(self, delta, targets):
        """Values at (theta_i + delta, +-targets): a (2, n, m) array each."""
        targets = np.asarray(targets, dtype=np.float64)
        if self.folded:
            VE, VQ = self._parts(delta, targets)
            return VE + VQ, VE - VQ
        return (self.sample(delta, targets), self.sample(delta, -targets))


def source_nodes(ev, tail, n_source=None):
    """Column set the quadrature samples the weighted source on.

    By default the tail's own grid. With `n_source`, a dedicated Lobatto
    grid on the cut-off support [-a2, a2]: the integrand is weighted by
    phi(s e^{lam t}), so the source is only ever read there, and the
    dedicated grid clusters its nodes at the bump edges where the source
    is least smooth — fewer columns for the same interpolation error.
    """
    if n_source is None:
        return tail.s_nodes
    return cheb_nodes(n_source, ev.cut.a2)


def tail_apply(ev, tail, quad, panels=None, source=None, n_source=None):
    """One pass of the characteristic-line contraction; returns a new TailFn.

    Works entirely in the weighted variable V = H/s^N. The source
    G = Y_rem/s^N is sampled once per pass on the source grid; each
    quadrature node t then reads it at (theta + omega*t, s*e^{lam*t}) — a
    uniform theta shift (spectral phase twist) composed with a common
    scaling of the s grid (barycentric interpolation matrices), so the
    whole pass is FFTs and matrix products. In weighted form the update is

        V'(theta, s) = e^{(N lam - lam0 diag) T} V(theta + omega T, s e^{lam T})
                       - int_0^T e^{N lam t} diag(1, e^{-lam0 t})
                             (G phi)(theta + omega t, s e^{lam t}) dt,

    which never divides by the vanishing weight. `source` lets a caller
    reuse the sampled G (it depends only on `tail` and the grid choice,
    not on the quadrature rule).
    """
    lam0 = ev.model.lambda0
    N = tail.order
    T, carry = _horizon(quad, N, ev.lam, lam0)
    t_q, w_q = _gauss_panels(T, panels if panels else quad.panels,
                             quad.nodes_per_panel)
    n, L = tail.n_theta, tail.n_cheb
    s_l = tail.s_nodes

    src_s = source_nodes(ev, tail, n_source)
    if source is None:
        source = ev.weighted_grid(tail, None if n_source is None else src_s)
    src = _DilatedSampler(source, src_s, bary_weights(src_s.size))

    acc = np.zeros((2, n, L))
    even = L % 2 == 0
    rep = s_l[: L // 2] if even else s_l   # one entry per target column pair
    for t, wt in zip(t_q, w_q):
        c = math.exp(ev.lam * t)
        phs = ev.cut.phi(rep * c)
        lv = np.where(phs > 0.0)[0]
        if not lv.size:
            continue
        w1 = wt * c**N * phs[lv]
        w2 = w1 * math.exp(-lam0 * t)
        if even:
            plus, minus = src.sample_pair(ev.omega * t, c * rep[lv])
            acc[0][:, lv] += w1 * plus[0]
            acc[1][:, lv] += w2 * plus[1]
            acc[0][:, L - 1 - lv] += w1 * minus[0]
            acc[1][:, L - 1 - lv] += w2 * minus[1]
        else:
            vals = src.sample(ev.omega * t, c * rep[lv])
            acc[0][:, lv] += w1 * vals[0]
            acc[1][:, lv] += w2 * vals[1]

    v_new = -acc
    if carry:
        cT = math.exp(ev.lam * T)
        f1 = cT**N
        f2 = f1 * math.exp(-lam0 * T)
        cur = _DilatedSampler(tail.values, s_l, tail.bary_w)
        if even:
            half = L // 2
            plus, minus = cur.sample_pair(ev.omega * T, cT * s_l[:half])
            mirror = L - 1 - np.arange(half)
            v_new[0][:, :half] += f1 * plus[0]
            v_new[1][:, :half] += f2 * plus[1]
            v_new[0][:, mirror] += f1 * minus[0]
            v_new[1][:, mirror] += f2 * minus[1]
        else:
            vals = cur.sample(ev.omega * T, cT * s_l)
            v_new[0] += f1 * vals[0]
            v_new[1] += f2 * vals[1]
    return TailFn(v_new, tail.s_max, tail.order)


def prolong_tail(tail, n_theta, n_cheb):
    """Re-grid a TailFn onto an n_theta x n_cheb grid over the same strip.

    Theta is refined spectrally (zero padding, Nyquist bin split); the
    stable direction is re-interpolated barycentrically onto the new
    Lobatto nodes. Theta coarsening is not supported (it would alias).
    """
    n = tail.n_theta
    if n_theta < n:
        raise ValueError("prolong_tail cannot coarsen the theta grid")
    vals = tail.values
    if n_theta > n:
        H = np.fft.rfft(vals, axis=1)
        Hp = np.zeros((2, n_theta // 2 + 1, tail.n_cheb), dtype=np.complex128)
        Hp[:, : H.shape[1]] = H
        if n % 2 == 0:
            Hp[:, n // 2] *= 0.5
        vals = np.fft.irfft(Hp * (n_theta / n), n_theta, axis=1)
    if n_cheb != tail.n_cheb:
        B = bary_matrix(tail.s_nodes, tail.bary_w, cheb_nodes(n_cheb, tail.s_max))
        vals = vals @ B.T
    return TailFn(np.ascontiguousarray(vals), tail.s_max, tail.order)


# below this grid size a cold start is cheap enough not to bother cascading
_CASCADE_FLOOR = 256
# below this column count exact scattered evaluation is cheap and the
# local-stencil compression has too little resolution to pay for itself
_LOOKUP_FLOOR = 256


def solve_tail(model, omega, lam, loops, cfg, s_max=None, n_theta=None,
               guess=None, compute_residual=True):
    """Solve for the weighted remainder; returns (TailFn, report, evaluator).

    The quadrature rule is checked against itself with doubled panels on the
    first pass; the evaluator comes back with the frozen polynomial source so
    callers can reuse it for diagnostics. `n_theta` defaults to the loops'
    grid size. Large grids warm-start themselves: with no `guess`, anything
    above 256 Chebyshev nodes first solves at half resolution and prolongs,
    recursively, so the expensive grid only polishes. A `guess` on a
    different grid (e.g. from a nearby parameter) is prolonged too.
    """
    cfg.validate()
    cut = model.cutoff if cfg.a1 is None else type(model.cutoff)(cfg.a1, cfg.a2)
    order = len(loops)
    if s_max is None:
        s_max = default_s_max(model)
    reach = delay_reach(model, lam)
    if reach > s_max:
        raise DomainError(
            f"delayed stable coordinate can reach {reach:.3g} beyond the strip "
            f"half-width {s_max:.3g}; widen s_max"
        )
    ev = WEvaluator(model, omega, lam, loops, cut=cut)
    report = SolveReport(stage="tail")
    nth = n_theta if n_theta else loops[0].n
    if model.eps == 0.0:
        report.distances.append(0.0)
        report.iterations = 1
        report.converged = True
        report.residual = 0.0
        return TailFn.zero(nth, cfg.n_cheb, s_max, order), report, ev

    if guess is None and cfg.n_cheb > _CASCADE_FLOOR:
        sub = replace(cfg, n_cheb=(cfg.n_cheb + 1) // 2)
        guess, _, _ = solve_tail(model, omega, lam, loops, sub, s_max=s_max,
                                 n_theta=n_theta, compute_residual=False)
    if guess is not None:
        if guess.order != order or abs(guess.s_max - s_max) > 1e-12 * s_max:
            raise ValueError(
                "tail guess has a different vanishing order or strip width"
            )
        tail = guess
        if guess.n_theta != nth or guess.n_cheb != cfg.n_cheb:
            tail = prolong_tail(guess, nth, cfg.n_cheb)
    else:
        tail = TailFn.zero(nth, cfg.n_cheb, s_max, order)
    ev.set_source(dealias=False)

    n_src = cfg.n_source
    for k in range(cfg.max_iter):
        fine = _FineV.build_checked(tail) if cfg.n_cheb >= _LOOKUP_FLOOR else None
        source = ev.weighted_grid(
            tail, None if n_src is None else source_nodes(ev, tail, n_src),
            fine=fine,
        )
        new = tail_apply(ev, tail, cfg.quad, source=source, n_source=n_src)
        if k == 0:
            check = tail_apply(ev, tail, cfg.quad, panels=2 * cfg.quad.panels,
                               source=source, n_source=n_src)
            gap = new.dist(check)
            if gap > cfg.quad.qtol * max(1.0, new.norm()):
                raise QuadratureError(
                    f"quadrature self-check failed: doubled panels move the "
                    f"update by {gap:.3e} (qtol {cfg.quad.qtol:.1e}); "
                    f"increase panels or nodes_per_panel"
                )
        d = new.dist(tail)
        report.distances.append(d)
        report.iterations = k + 1
        tail = new
        if d < cfg.tol:
            report.converged = True
            if compute_residual:
                report.residual = residual_tail(model, omega, lam, loops, tail, cfg)
            return tail, report, ev
    raise ConvergenceError(
        f"tail: no convergence in {cfg.max_iter} iterations "
        f"(last distance {report.distances[-1]:.3e})"
    )


def residual_tail(model, omega, lam, loops, tail, cfg, refine=2):
    """Weighted sup defect of the remainder transport equation on a grid
    refined in both directions (new interior nodes probe off-grid error)."""
    cut = model.cutoff if cfg.a1 is None else type(model.cutoff)(cfg.a1, cfg.a2)
    n2 = refine * tail.n_theta
    L2 = refine * tail.n_cheb
    s2 = cheb_nodes(L2, tail.s_max)
    w2 = bary_weights(L2)

    # V on the refined grid: pad the theta spectrum, then re-interpolate in s
    H = np.fft.rfft(tail.values, axis=1)
    Hp = np.zeros((2, n2 // 2 + 1, tail.n_cheb), dtype=np.complex128)
    Hp[:, : H.shape[1]] = H
    Hp[:, tail.n_theta // 2] *= 0.5
    v_up = np.fft.irfft(Hp * (n2 / tail.n_theta), n2, axis=1)
    B = bary_matrix(tail.s_nodes, tail.bary_w, s2)
    v2g = v_up @ B.T  # (2, n2, L2)

    # transport part on the refined grid
    Hs = np.fft.rfft(v2g, axis=1)
    k = np.arange(Hs.shape[1])
    Hs *= 2j * np.pi * k[None, :, None]
    Hs[:, -1] = 0.0
    dth = np.fft.irfft(Hs, n2, axis=1)
    dss = v2g @ cheb_diff(s2, w2).T
    N = tail.order
    bracket = omega * dth + lam * (N * v2g + s2[None, None, :] * dss)
    bracket[1] -= model.lambda0 * v2g[1]

    # field part, only inside the cut-off support
    if model.eps != 0.0:
        ev = WEvaluator(model, omega, lam, [resample(lp, n2) for lp in loops], cut=cut)
        ev.set_source(dealias=False)
        cols = np.where(np.abs(s2) < cut.a2)[0]
        if cols.size:
            fine = _FineV.build_checked(tail) if tail.n_cheb >= _LOOKUP_FLOOR else None
            TH = np.repeat(nodes(n2), cols.size)
            SS = np.tile(s2[cols], n2)
            y = ev.ytail_values(TH, SS, tail, fine).reshape(2, n2, cols.size)
            F = y * (cut.phi(s2[cols]) / s2[cols] ** N)[None, None, :]
            patch = _inner_patch(s2[cols])
            if patch is not None:
                bad, win, rows = patch
                F[:, :, bad] = F[:, :, win] @ rows.T
            bracket[:, :, cols] -= F
    return float(np.max(np.abs(bracket)))
