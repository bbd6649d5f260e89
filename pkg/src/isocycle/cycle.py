"""Order 0: the perturbed limit cycle as a fixed point.

The invariant loop W0 (angular component a degree-one lift, radial component
periodic) and its frequency omega satisfy

    omega * dW0_1/dtheta = omega0       + eps*g_1(theta)
    omega * dW0_2/dtheta = lam0*W0_2    + eps*g_2(theta),

with g = Ybar(W0, W0-delayed; omega) the cut-off perturbation field sampled
along the loop. One update step reads the new frequency off the average of
the first row, integrates the oscillating part for the angular correction
(pinned so the loop's phase at theta = 0 is zero), and solves the second row
with the mode-by-mode resolvent. The map contracts at rate O(eps) near the
solution; iteration stops when |delta omega| + grid-sup distance falls below
tol. The frequency is trusted only within |omega - omega0| <= omega0/2.
"""

from __future__ import annotations

import numpy as np

from isocycle.config import SolveReport
from isocycle.errors import ConvergenceError, DomainError
from isocycle.fourier import (
    PeriodicFn,
    PlaneLoop,
    TorusLift,
    antiderivative,
    c0_distance,
    low_pass,
    nodes,
    resample,
    spectral_solve,
)

__all__ = [
    "CycleIterate",
    "cycle_metric",
    "field_on_loop",
    "run_fixed_point",
    "update_cycle",
    "solve_cycle",
    "residual_cycle",
]


class CycleIterate:
    """(frequency, loop) pair; the loop's first component is a TorusLift."""

    __slots__ = ("freq", "loop")

    def __init__(self, freq, loop):
        self.freq = float(freq)
        self.loop = loop

    @classmethod
    def initial(cls, model, n):
        """The unperturbed solution: frequency omega0, identity loop."""
        return cls(
            model.omega0,
            PlaneLoop(TorusLift.identity(n), PeriodicFn(np.zeros(n))),
        )


def cycle_metric(x, y):
    return abs(x.freq - y.freq) + c0_distance(x.loop, y.loop)


def _broadcast(v, n):
    return np.broadcast_to(np.asarray(v, dtype=np.float64), (n,))


def field_on_loop(model, freq, loop, cut, assume_interior=True):
    """g = Ybar(loop, delayed loop; freq) sampled on the loop's grid.

    Returns (g1, g2, interior). The delay and the field are evaluated only
    where the radial cut-off is positive (the model may be undefined
    beyond); while the radial part stays strictly inside the plateau the
    cut-off factors are identically one and are skipped.
    """
    n = loop.n
    th = nodes(n)
    u1 = loop.comp1.full_values if loop.has_lift else loop.comp1.values
    u2 = loop.comp2.values
    interior = assume_interior and float(np.max(np.abs(u2))) < cut.a1

    if interior:
        rho_bar = _broadcast(model.rho_ring(u1, u2), n).copy()
        mask = np.ones(n, dtype=bool)
        weight = np.ones(n)
    else:
        phi_a = cut.phi(u2)
        mask = phi_a > 0.0
        rho_bar = np.zeros(n)
        if mask.any():
            rho_bar[mask] = _broadcast(
                model.rho_ring(u1[mask], u2[mask]), int(mask.sum())
            )
        rho_bar *= phi_a
        weight = phi_a

    delta = -freq * rho_bar
    v1 = loop.comp1(th + delta)
    v2 = loop.comp2(th + delta)

    g1 = np.zeros(n)
    g2 = np.zeros(n)
    if not interior:
        phi_b = cut.phi(v2)
        mask = mask & (phi_b > 0.0)
        weight = weight * phi_b
    if mask.any():
        y1, y2 = model.yfield_ring(u1[mask], u2[mask], v1[mask], v2[mask])
        m = int(mask.sum())
        g1[mask] = _broadcast(y1, m) * weight[mask]
        g2[mask] = _broadcast(y2, m) * weight[mask]
    return g1, g2, interior


def update_cycle(model, it, cfg, cut):
    """One fixed-point step; exact in one step when eps = 0."""
    n = it.loop.n
    if model.eps == 0.0:
        return CycleIterate.initial(model, n)

    g1, g2, _ = field_on_loop(
        model, it.freq, it.loop, cut, assume_interior=cfg.assume_interior
    )
    g1f = PeriodicFn(g1)
    g2f = PeriodicFn(g2)
    if cfg.dealias:
        g1f = low_pass(g1f)
        g2f = low_pass(g2f)

    freq = model.omega0 + model.eps * g1f.mean()
    osc = antiderivative(g1f - g1f.mean())
    comp1 = TorusLift(osc * (model.eps / freq))
    comp2 = spectral_solve(g2f * model.eps, it.freq, -model.lambda0)
    return CycleIterate(freq, PlaneLoop(comp1, comp2))


def run_fixed_point(step, x0, metric, cfg, stage, scale=1.0, trust=None):
    """Shared driver: iterate, record distances, optional secant mixing."""
    report = SolveReport(stage=stage, scale=scale)
    x = x0
    prev_pair = None  # (x_{k-1}, step(x_{k-1})) for Anderson depth 1
    for k in range(cfg.max_iter):
        fx = step(x)
        if trust is not None:
            trust(fx)
        d = metric(fx, x)
        report.distances.append(d)
        report.iterations = k + 1
        if d < cfg.tol:
            report.converged = True
            return fx, report
        if cfg.anderson and prev_pair is not None:
            x_prev, fx_prev = prev_pair
            r, r_prev = fx - x, fx_prev - x_prev  # residual vectors
            denom = float(np.dot(r - r_prev, r - r_prev))
            if denom > 0.0:
                gamma = float(np.dot(r, r - r_prev)) / denom
                mixed = (1.0 - gamma) * fx + gamma * fx_prev
                prev_pair = (x, fx)
                x = mixed
                continue
        prev_pair = (x, fx)
        x = fx
    raise ConvergenceError(
        f"{stage}: no convergence in {cfg.max_iter} iterations "
        f"(last distance {report.distances[-1]:.3e})"
    )


def _pack(it):
    per = it.loop.comp1.periodic.values
    return np.concatenate(([it.freq], per, it.loop.comp2.values))


def _unpack(vec, n):
    return CycleIterate(
        vec[0], PlaneLoop(TorusLift(PeriodicFn(vec[1 : n + 1])), PeriodicFn(vec[n + 1 :]))
    )


def solve_cycle(model, cfg, guess=None):
    """Solve the order-0 stage; returns (omega, loop, report)."""
    cfg.validate()
    cut = model.cutoff if cfg.a1 is None else type(model.cutoff)(cfg.a1, cfg.a2)
    n = cfg.modes
    it0 = guess if guess is not None else CycleIterate.initial(model, n)
    if it0.loop.n != n:
        raise ValueError("guess grid does not match cfg.modes")

    def trust(it):
        if abs(it.freq - model.omega0) > 0.5 * model.omega0:
            raise DomainError(
                f"frequency left its trust region: {it.freq:.6g} vs {model.omega0:.6g}"
            )

    if cfg.anderson:
        # mix on flat vectors; metric and step wrap the packing
        def step(v):
            return _pack(update_cycle(model, _unpack(v, n), cfg, cut))

        def metric(a, b):
            return abs(a[0] - b[0]) + float(np.max(np.abs(a[1:] - b[1:])))

        vec, report = run_fixed_point(
            step, _pack(it0), metric, cfg, "cycle",
            trust=lambda v: trust(_unpack(v, n)),
        )
        it = _unpack(vec, n)
    else:
        it, report = run_fixed_point(
            lambda x: update_cycle(model, x, cfg, cut),
            it0,
            cycle_metric,
            cfg,
            "cycle",
            trust=trust,
        )
    report.residual = residual_cycle(model, it.freq, it.loop, cut, cfg)
    return it.freq, it.loop, report


def residual_cycle(model, omega, loop, cut, cfg, refine=2):
    """sup-norm defect of the order-0 equations on a refined grid."""
    n2 = refine * loop.n
    big = PlaneLoop(
        TorusLift(resample(loop.comp1.periodic, n2)), resample(loop.comp2, n2)
    )
    g1, g2, _ = field_on_loop(
        model, omega, big, cut, assume_interior=cfg.assume_interior
    )
    dp = big.comp1.derivative()
    d2 = big.comp2.derivative()
    e1 = omega * dp.values - model.omega0 - model.eps * g1
    e2 = omega * d2.values - model.lambda0 * big.comp2.values - model.eps * g2
    return max(float(np.max(np.abs(e1))), float(np.max(np.abs(e2))))
