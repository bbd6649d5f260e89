"""Solver knobs and per-stage iteration reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

#: distances below this (times the iterate scale) are treated as rounding
#: noise when estimating contraction ratios
RATIO_FLOOR = 1e-12


@dataclass
class QuadConfig:
    """Quadrature controls for the characteristic-line integrals of the
    remainder stage.

    Attributes
    ----------
    panels, nodes_per_panel : int
        Composite Gauss-Legendre rule: `panels` equal subintervals with
        `nodes_per_panel` nodes each.
    tail_tol : float
        Weighted size below which the truncated part of the infinite-horizon
        integral is considered negligible; sets the horizon when
        `horizon_gain` is None.
    qtol : float
        Acceptable discrepancy when the rule is compared against itself with
        doubled panels (checked once per solve).
    horizon_gain : float or None
        Weighted gain of the carried endpoint term in the short-horizon form
        of the remainder update (see `isocycle.tail`). None selects the plain
        truncated-integral form with horizon set by `tail_tol`.
    """

    panels: int = 24
    nodes_per_panel: int = 16
    tail_tol: float = 1e-14
    qtol: float = 1e-12
    horizon_gain: float | None = 0.02

    def validate(self) -> None:
        if self.panels < 1 or self.nodes_per_panel < 2:
            raise ValueError("quadrature needs >= 1 panel and >= 2 nodes per panel")
        if not (0.0 < self.tail_tol < 1.0):
            raise ValueError("tail_tol must lie in (0, 1)")
        if self.qtol <= 0.0:
            raise ValueError("qtol must be positive")
        if self.horizon_gain is not None and not (0.0 < self.horizon_gain < 1.0):
            raise ValueError("horizon_gain must lie in (0, 1) or be None")


@dataclass
class SolverConfig:
    """Controls shared by all solve stages.

    Attributes
    ----------
    modes : int
        Fourier grid size n (power of two, >= 8).
    order : int
        Number N of polynomial s-orders carried explicitly (>= 2); the
        remainder is O(s^N).
    tol : float
        Iteration stops when the stage metric between successive iterates
        drops below this.
    max_iter : int
        Hard cap per stage; exceeding it marks the stage non-converged.
    n_cheb : int
        Chebyshev-Lobatto points across the stable coordinate for the
        remainder stage.
    n_source : int or None
        When set, the remainder quadrature samples its source term on a
        dedicated Lobatto grid of this size over the cut-off support
        [-a2, a2] instead of the full remainder grid; the source vanishes
        outside that interval, so a grid clustered at the bump edges needs
        far fewer columns for the same accuracy.
    dealias : bool
        Apply the 2/3-rule low-pass to assembled right-hand sides (not to raw
        jet/expression arithmetic, which stays exact on the grid).
    assume_interior : bool
        Skip cut-off factors while the loop's radial part stays strictly
        inside the cut-off plateau (checked every iteration; evaluation falls
        back to the cut-off form when violated).
    anderson : bool
        Depth-1 secant mixing of the order-0/1 iterations, for stiff cases.
    normalization : float
        Target value for the integral of the second component of the order-1
        coefficient (fixes the scale of the stable direction).
    a1, a2 : float or None
        Override the model's cut-off radii when set.
    quad : QuadConfig
    """

    modes: int = 64
    order: int = 3
    tol: float = 1e-11
    max_iter: int = 200
    n_cheb: int = 32
    n_source: int | None = None
    dealias: bool = True
    assume_interior: bool = True
    anderson: bool = False
    normalization: float = 1.0
    a1: float | None = None
    a2: float | None = None
    quad: QuadConfig = field(default_factory=QuadConfig)

    def validate(self) -> None:
        n = self.modes
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError("modes must be a power of two >= 8")
        if self.order < 2:
            raise ValueError("order must be >= 2")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.n_cheb < 8 or self.n_cheb % 2:
            raise ValueError("n_cheb must be even and >= 8 (keeps s = 0, where "
                             "the remainder weight degenerates, off the grid)")
        if self.n_source is not None and (self.n_source < 8 or self.n_source % 2):
            raise ValueError("n_source must be even and >= 8 when set")
        if self.normalization == 0.0:
            raise ValueError("normalization target must be nonzero")
        if (self.a1 is None) != (self.a2 is None):
            raise ValueError("override both cut-off radii or neither")
        if self.a1 is not None and not (0.0 < self.a1 < self.a2):
            raise ValueError("cut-off radii must satisfy 0 < a1 < a2")
        self.quad.validate()


@dataclass
class SolveReport:
    """Convergence record of one fixed-point stage.

    `distances` holds the stage metric d_k between successive iterates;
    `mu_hat` is the largest ratio d_k/d_{k-1} over steps where the
    denominator sits above the rounding floor, an empirical contraction
    factor. When mu_hat < 1 the usual a-priori/a-posteriori bounds apply:

        d(x_0, x*)    <= d_0 / (1 - mu_hat)        -> `bound`
        d(x_last, x*) <= mu_hat*d_last/(1-mu_hat)  -> `bound_last`

    `non_certifying` flags mu_hat >= 1 (bounds meaningless, solution still
    returned if the distances dropped below tol).
    """

    stage: str
    converged: bool = False
    iterations: int = 0
    distances: list[float] = field(default_factory=list)
    residual: float = math.nan
    scale: float = 1.0

    @property
    def ratios(self) -> list[float]:
        floor = RATIO_FLOOR * max(self.scale, 1.0)
        out = []
        for prev, cur in zip(self.distances, self.distances[1:]):
            if prev > floor:
                out.append(cur / prev)
        return out

    @property
    def mu_hat(self) -> float:
        r = self.ratios
        return max(r) if r else math.nan

    @property
    def non_certifying(self) -> bool:
        mu = self.mu_hat
        return not (mu < 1.0)

    @property
    def bound(self) -> float:
        mu = self.mu_hat
        if self.distances and mu < 1.0:
            return self.distances[0] / (1.0 - mu)
        return math.inf

    @property
    def bound_last(self) -> float:
        mu = self.mu_hat
        if self.distances and mu < 1.0:
            return mu * self.distances[-1] / (1.0 - mu)
        return math.inf

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "converged": self.converged,
            "iterations": self.iterations,
            "distances": list(self.distances),
            "mu_hat": self.mu_hat,
            "bound": self.bound,
            "bound_last": self.bound_last,
            "non_certifying": self.non_certifying,
            "residual": self.residual,
        }
