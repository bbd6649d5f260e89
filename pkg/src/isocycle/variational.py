"""Orders 1 and up: the contraction rate and the polynomial coefficients.

Order 1 determines the transverse rate lam and the direction W1 along which
orbits approach the loop:

    omega * dW1/dtheta + lam*W1 - (0, lam0*W1_2) = eps * [A(theta) W1(theta)
                                                   + B(theta; lam) W1(theta + delta0)]

where delta0 = -omega*rho_bar0 is the angular lag along the unperturbed loop
and A, B collect the first variation of the cut-off perturbation field: the
direct part, the drift of the delayed base point through the state-dependent
delay, and the delayed part carrying the factor exp(-lam*rho_bar0). Both are
assembled once per solve by forward-mode differentiation of the field
evaluators. The rate update reads lam off the average of the radial row; the
radial normalization (the loop integral of W1_2 equals `normalization`) fixes
the free constant. The rate is trusted within |lam - lam0| <= |lam0|/3.

Higher orders j >= 2 solve

    omega * dWj/dtheta + j*lam*Wj - (0, lam0*Wj_2) = S_j(theta),

where S_j is the j-th coefficient of the full right-hand-side jet evaluated
on the current partial sum. S_j still contains Wj itself (directly, through
the delay drift, and delayed with weight exp(-j*lam*rho_bar0)), so the stage
iterates: re-extract the coefficient, resolve, repeat. Dropping the Wj
feedback would leave a defect one order too large, which the acceptance
tolerance on the order residuals would expose.
"""

from __future__ import annotations

import numpy as np

from isocycle.config import SolveReport
from isocycle.errors import DomainError
from isocycle.cycle import run_fixed_point
from isocycle.fourier import (
    PeriodicFn,
    PlaneLoop,
    TorusLift,
    antiderivative,
    c0_distance,
    compose_shift,
    low_pass,
    nodes,
    resample,
    spectral_solve,
)
from isocycle.exprs import Dual
from isocycle.jets import ScalarFT, VectorJet, rhs_jet

__all__ = [
    "LinearizedCoeffs",
    "linearize",
    "FirstIterate",
    "first_metric",
    "update_first",
    "solve_first",
    "solve_order",
    "build_jet",
    "residual_order",
]


# ---------------------------------------------------------------------------
# first variation of the field along the loop


class LinearizedCoeffs:
    """Frozen-at-the-loop data for the order-1 stage.

    amat : (2, 2, n)  multiplies F(theta)
    d2y  : (2, 2, n)  derivative in the delayed argument; the delayed-term
                      matrix is B(rate) = exp(-rate*rho0) * d2y
    rho0 : (n,)       cut-off delay along the loop
    delta0 : (n,)     angular lag -omega*rho0
    """

    __slots__ = ("amat", "d2y", "rho0", "delta0", "omega", "n")

    def __init__(self, amat, d2y, rho0, delta0, omega):
        self.amat = amat
        self.d2y = d2y
        self.rho0 = rho0
        self.delta0 = delta0
        self.omega = float(omega)
        self.n = rho0.size

    def bmat(self, rate):
        return np.exp(-rate * self.rho0)[None, None, :] * self.d2y


def _grad_rows(val, m):
    """Two gradient rows of a dual (or zero rows for a constant)."""
    if isinstance(val, Dual):
        return [
            np.broadcast_to(np.asarray(g, dtype=np.float64), (m,))
            for g in val.grad
        ]
    return [np.zeros(m), np.zeros(m)]


def _dual_pair(a, b):
    return (Dual(a, (1.0, 0.0)), Dual(b, (0.0, 1.0)))


def linearize(model, omega, loop, cut, assume_interior=True):
    """Differentiate the cut-off field through both arguments along `loop`."""
    n = loop.n
    th = nodes(n)
    u1 = loop.comp1.full_values if loop.has_lift else loop.comp1.values
    u2 = loop.comp2.values
    interior = assume_interior and float(np.max(np.abs(u2))) < cut.a1

    rho0 = np.zeros(n)
    drho = np.zeros((2, n))
    if interior:
        u1d, u2d = _dual_pair(u1, u2)
        rd = model.rho_ring(u1d, u2d)
        rho0[:] = np.broadcast_to(
            np.asarray(rd.val if isinstance(rd, Dual) else rd, dtype=np.float64), (n,)
        )
        drho[0], drho[1] = _grad_rows(rd, n)
        mask = np.ones(n, dtype=bool)
        phi_a = np.ones(n)
    else:
        phi_a = cut.phi(u2)
        mask = phi_a > 0.0
        if mask.any():
            m = int(mask.sum())
            u1d, u2d = _dual_pair(u1[mask], u2[mask])
            rbard = model.rho_ring(u1d, u2d) * cut.phi(u2d)
            rho0[mask] = np.broadcast_to(np.asarray(rbard.val, dtype=np.float64), (m,))
            g0, g1 = _grad_rows(rbard, m)
            drho[0, mask] = g0
            drho[1, mask] = g1

    delta0 = -omega * rho0
    alpha = th + delta0
    v1 = np.asarray(loop.comp1(alpha), dtype=np.float64)
    v2 = np.asarray(loop.comp2(alpha), dtype=np.float64)
    dw = np.stack(
        [loop.comp1.derivative()(alpha), loop.comp2.derivative()(alpha)]
    )

    d1y = np.zeros((2, 2, n))
    d2y = np.zeros((2, 2, n))
    if interior:
        cols = np.arange(n)
        weight_u = weight_v = None
    else:
        phi_b = cut.phi(v2)
        live = mask & (phi_b > 0.0)
        cols = np.where(live)[0]
        weight_u = phi_b[cols]  # multiplies the u-dual branch
        weight_v = phi_a[cols]  # multiplies the v-dual branch
    m = cols.size
    if m:
        u1c, u2c, v1c, v2c = u1[cols], u2[cols], v1[cols], v2[cols]
        u1d, u2d = _dual_pair(u1c, u2c)
        ya, yb = model.yfield_ring(u1d, u2d, v1c, v2c)
        if weight_u is not None:
            ya = ya * cut.phi(u2d) * weight_u
            yb = yb * cut.phi(u2d) * weight_u
        d1y[0, 0, cols], d1y[0, 1, cols] = _grad_rows(ya, m)
        d1y[1, 0, cols], d1y[1, 1, cols] = _grad_rows(yb, m)

        v1d, v2d = _dual_pair(v1c, v2c)
        ya, yb = model.yfield_ring(u1c, u2c, v1d, v2d)
        if weight_v is not None:
            ya = ya * cut.phi(v2d) * weight_v
            yb = yb * cut.phi(v2d) * weight_v
        d2y[0, 0, cols], d2y[0, 1, cols] = _grad_rows(ya, m)
        d2y[1, 0, cols], d2y[1, 1, cols] = _grad_rows(yb, m)

    # A = D1 - omega * (D2 . dW at the lagged point) outer (grad of the delay)
    tmp = np.einsum("ijn,jn->in", d2y, dw)
    amat = d1y - omega * np.einsum("in,jn->ijn", tmp, drho)
    return LinearizedCoeffs(amat, d2y, rho0, delta0, omega)


# ---------------------------------------------------------------------------
# order 1


class FirstIterate:
    """(rate, direction) pair; both direction components plain periodic."""

    __slots__ = ("rate", "loop")

    def __init__(self, rate, loop):
        self.rate = float(rate)
        self.loop = loop

    @classmethod
    def initial(cls, model, n, target):
        return cls(
            model.lambda0,
            PlaneLoop(PeriodicFn(np.zeros(n)), PeriodicFn(np.full(n, target))),
        )


def first_metric(x, y):
    return abs(x.rate - y.rate) + c0_distance(x.loop, y.loop)


def update_first(model, coeffs, it, cfg):
    """One step of the order-1 map (linear in the direction)."""
    target = cfg.normalization
    n = coeffs.n
    if model.eps == 0.0:
        return FirstIterate.initial(model, n, target)

    f1, f2 = it.loop.comp1, it.loop.comp2
    f1s = compose_shift(f1, coeffs.delta0).values
    f2s = compose_shift(f2, coeffs.delta0).values
    a = coeffs.amat
    b = coeffs.bmat(it.rate)
    g1 = a[0, 0] * f1.values + a[0, 1] * f2.values + b[0, 0] * f1s + b[0, 1] * f2s
    g2 = a[1, 0] * f1.values + a[1, 1] * f2.values + b[1, 0] * f1s + b[1, 1] * f2s
    g1f, g2f = PeriodicFn(g1), PeriodicFn(g2)
    if cfg.dealias:
        g1f, g2f = low_pass(g1f), low_pass(g2f)

    rate = model.lambda0 + model.eps * g2f.mean() / target
    comp1 = spectral_solve(g1f * model.eps, coeffs.omega, it.rate)
    h = (g2f - f2 * (g2f.mean() / target)) * (model.eps / coeffs.omega)
    big_h = antiderivative(h)
    comp2 = big_h + (target - big_h.mean())
    return FirstIterate(rate, PlaneLoop(comp1, comp2))


def _pack_first(it):
    return np.concatenate(([it.rate], it.loop.comp1.values, it.loop.comp2.values))


def _unpack_first(vec, n):
    return FirstIterate(
        vec[0], PlaneLoop(PeriodicFn(vec[1 : n + 1]), PeriodicFn(vec[n + 1 :]))
    )


def solve_first(model, omega, loop, cfg, guess=None):
    """Solve the order-1 stage; returns (rate, direction, report, coeffs)."""
    cfg.validate()
    cut = model.cutoff if cfg.a1 is None else type(model.cutoff)(cfg.a1, cfg.a2)
    n = loop.n
    target = cfg.normalization
    it0 = guess if guess is not None else FirstIterate.initial(model, n, target)

    if model.eps == 0.0:
        report = SolveReport(stage="floquet", scale=max(1.0, abs(model.lambda0)))
        it = FirstIterate.initial(model, n, target)
        report.distances.append(first_metric(it, it0))
        report.iterations = 1
        report.converged = report.distances[0] < cfg.tol
        report.residual = 0.0
        return it.rate, it.loop, report, None

    coeffs = linearize(model, omega, loop, cut, assume_interior=cfg.assume_interior)

    def trust(it):
        if abs(it.rate - model.lambda0) > abs(model.lambda0) / 3.0:
            raise DomainError(
                f"rate left its trust region: {it.rate:.6g} vs {model.lambda0:.6g}"
            )

    if cfg.anderson:
        def step(v):
            return _pack_first(update_first(model, coeffs, _unpack_first(v, n), cfg))

        def metric(x, y):
            return abs(x[0] - y[0]) + float(np.max(np.abs(x[1:] - y[1:])))

        vec, report = run_fixed_point(
            step, _pack_first(it0), metric, cfg, "floquet",
            scale=max(1.0, abs(model.lambda0)),
            trust=lambda v: trust(_unpack_first(v, n)),
        )
        it = _unpack_first(vec, n)
    else:
        it, report = run_fixed_point(
            lambda x: update_first(model, coeffs, x, cfg),
            it0,
            first_metric,
            cfg,
            "floquet",
            scale=max(1.0, abs(model.lambda0)),
            trust=trust,
        )
    report.residual = residual_order(model, omega, it.rate, [loop, it.loop], 1, cfg)
    return it.rate, it.loop, report, coeffs


# ---------------------------------------------------------------------------
# orders j >= 2


def build_jet(loops, order=None):
    """Assemble a VectorJet from per-order loops (order 0 carries the lift).

    `loops` may contain None past the known orders; missing rows stay zero.
    """
    live = [lp for lp in loops if lp is not None]
    n = live[0].n
    order = order if order is not None else len(loops)
    r1 = np.zeros((order, n))
    r2 = np.zeros((order, n))
    for j, lp in enumerate(loops):
        if lp is None or j >= order:
            continue
        if lp.n != n:
            raise ValueError("order loops live on different grids")
        c1 = lp.comp1.periodic if lp.has_lift else lp.comp1
        r1[j] = c1.values
        r2[j] = lp.comp2.values
    return VectorJet(ScalarFT(r1), ScalarFT(r2), lift=loops[0].has_lift)


def solve_order(model, omega, lam, loops, j, cfg):
    """Solve for the order-j coefficient given orders 0..j-1 in `loops`."""
    if j < 2:
        raise ValueError("use the dedicated stages for orders 0 and 1")
    n = loops[0].n
    zero = PlaneLoop(PeriodicFn(np.zeros(n)), PeriodicFn(np.zeros(n)))
    if model.eps == 0.0:
        report = SolveReport(stage=f"order{j}")
        report.distances.append(0.0)
        report.iterations = 1
        report.converged = True
        report.residual = 0.0
        return zero, report

    cut = model.cutoff if cfg.a1 is None else type(model.cutoff)(cfg.a1, cfg.a2)

    def step(lp):
        jet = build_jet(list(loops[:j]) + [lp], order=j + 1)
        rr = rhs_jet(
            jet, model, omega, lam,
            cut=cut, assume_interior=cfg.assume_interior, dealias=cfg.dealias,
        )
        s1 = PeriodicFn(rr.jet.comp1.rows[j])
        s2 = PeriodicFn(rr.jet.comp2.rows[j])
        return PlaneLoop(
            spectral_solve(s1, omega, j * lam),
            spectral_solve(s2, omega, j * lam - model.lambda0),
        )

    lp, report = run_fixed_point(step, zero, c0_distance, cfg, f"order{j}")
    report.residual = residual_order(model, omega, lam, list(loops[:j]) + [lp], j, cfg)
    return lp, report


def residual_order(model, omega, lam, loops, j, cfg, refine=2):
    """sup-norm defect of the order-j equation on a refined grid.

    Uses the full right-hand-side jet (never the frozen linearization), so
    it cross-checks the stage that produced the coefficient.
    """
    n2 = refine * loops[0].n
    big = [resample(lp, n2) for lp in loops]
    cut = model.cutoff if cfg.a1 is None else type(model.cutoff)(cfg.a1, cfg.a2)
    rr = rhs_jet(
        build_jet(big), model, omega, lam,
        cut=cut, assume_interior=cfg.assume_interior, dealias=False,
    )
    s1 = rr.jet.comp1.rows[j]
    s2 = rr.jet.comp2.rows[j]
    lp = big[j]
    d1 = lp.comp1.derivative().values
    d2 = lp.comp2.derivative().values
    w1 = lp.comp1.periodic.values if lp.has_lift else lp.comp1.values
    w2 = lp.comp2.values
    drive = model.omega0 if j == 0 else 0.0
    e1 = omega * d1 + j * lam * w1 - drive - s1
    e2 = omega * d2 + (j * lam - model.lambda0) * w2 - s2
    return max(float(np.max(np.abs(e1))), float(np.max(np.abs(e2))))
