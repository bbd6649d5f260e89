"""Model definitions and their I/O.

Two chart types:

- "coords": the perturbation is given directly in the cycle chart — a field
  Y(u, v) (current point u, delayed point v, both in chart coordinates) and
  a delay law rho(u). Variables: u1, u2, v1, v2 for Y; u1, u2 for rho.

- "cartesian": the original plane field X(x, y) (x current state, y the
  delayed forcing), delay law r(x), and an explicit change of coordinates
  K(th, s) conjugating the unperturbed system: X(K(th,s), 0) =
  DK(th,s) * (omega0, lambda0*s). The chart-level field is pulled back as

      Y = DK(u)^{-1} * [X(K(u), eps*K(v)) - X(K(u), 0)] / eps,

  with the eps -> 0 limit taken as the exact directional derivative
  D_y X(K(u), 0) * K(v) (forward-mode, no finite differencing); the chart
  delay law is rho = r(K(u)), substituted symbolically so the result is a
  plain expression in u1, u2.

Both evaluate over any ring accepted by isocycle.exprs (floats, arrays,
duals, jets), which is what lets one definition serve pointwise evaluation,
linearization, and series expansion.

Serialization is canonical: sorted keys, two-space indent, one trailing
newline, numbers via repr. The model fingerprint is the sha256 of that
canonical form, so formatting of the input file never matters, and a file
already in canonical form round-trips byte for byte.

Caution on evaluation domains: expressions are only ever evaluated where the
radial cut-off is positive (|u2| < a2, and the delayed counterpart) — models
may be singular beyond (the bundled change of coordinates has a sqrt(1+s)).
Validation spot-checks the extended delay rho*phi on that region and errors
if it leaves [0, h].
"""

from __future__ import annotations

import copy
import hashlib
import json
import warnings
from dataclasses import dataclass

import numpy as np

from isocycle.cutoff import Cutoff
from isocycle.errors import DomainError, ModelError
from isocycle.exprs import (
    Add,
    Call,
    Div,
    Dual,
    Mul,
    Neg,
    Num,
    Pow,
    Sub,
    Var,
    dual_env,
    eval_expr,
    expr_has_div,
    expr_variables,
    parse_expr,
    subst,
)

__all__ = [
    "Model",
    "CartesianModel",
    "load_model",
    "model_from_dict",
    "save_model",
    "canonical_json",
    "model_fingerprint",
    "cartesian_to_coords",
    "conjugacy_residual",
]


def _value_part(x):
    """Peel duals/jets down to the plain value used in guards."""
    while isinstance(x, Dual):
        x = x.val
    if hasattr(x, "rows"):
        return x.rows[0]
    return x


def _det_guard(det):
    v = np.asarray(_value_part(det), dtype=np.float64)
    if v.size and float(np.min(np.abs(v))) < 1e-8:
        raise DomainError("change of coordinates is (near-)degenerate: |det DK| < 1e-8")


def _affine_in(e, names):
    """True when `e` is affine (degree <= 1) in the given variable names.

    Structural and conservative: every rule preserves exact affineness, so a
    True answer is sound; expressions that are affine only after algebraic
    simplification may come back False, which merely forfeits the fast path.
    """

    def free(x):
        return not (expr_variables(x) & names)

    if isinstance(e, Num) or free(e):
        return True
    if isinstance(e, Var):
        return True
    if isinstance(e, Neg):
        return _affine_in(e.arg, names)
    if isinstance(e, (Add, Sub)):
        return _affine_in(e.left, names) and _affine_in(e.right, names)
    if isinstance(e, Mul):
        return (free(e.left) and _affine_in(e.right, names)) or (
            free(e.right) and _affine_in(e.left, names)
        )
    if isinstance(e, Div):
        return free(e.right) and _affine_in(e.left, names)
    if isinstance(e, Pow):
        return free(e.base) or (e.exponent in (0, 1) and _affine_in(e.base, names))
    if isinstance(e, Call):
        return free(e.arg)
    return False


@dataclass
class Model:
    """Chart-level model: delay law and perturbation field in (u1, u2).

    Built either directly from a "coords" definition or by
    `cartesian_to_coords`; in the latter case the field evaluation defers to
    the cartesian evaluators while rho is a genuine substituted expression.
    """

    omega0: float
    lambda0: float
    eps: float
    h: float
    cutoff: Cutoff
    rho_expr: object
    y_exprs: tuple | None
    cart: "CartesianModel | None"
    source: dict

    def rho_ring(self, u1, u2):
        return eval_expr(self.rho_expr, {"u1": u1, "u2": u2})

    def yfield_ring(self, u1, u2, v1, v2):
        if self.y_exprs is not None:
            env = {"u1": u1, "u2": u2, "v1": v1, "v2": v2}
            return eval_expr(self.y_exprs[0], env), eval_expr(self.y_exprs[1], env)
        return self.cart._yfield(u1, u2, v1, v2)

    def with_eps(self, eps):
        """Same model at a different perturbation size (used by sweeps)."""
        d = copy.deepcopy(self.source)
        d["eps"] = float(eps)
        return model_from_dict(d)

    def to_dict(self):
        return copy.deepcopy(self.source)

    @property
    def fingerprint(self):
        return model_fingerprint(self.source)


@dataclass
class CartesianModel:
    """Plane field + delay law + explicit change of coordinates."""

    omega0: float
    lambda0: float
    eps: float
    h: float
    cutoff: Cutoff
    x_exprs: tuple
    r_expr: object
    k_exprs: tuple
    source: dict

    def K_ring(self, th, s):
        env = {"th": th, "s": s}
        return eval_expr(self.k_exprs[0], env), eval_expr(self.k_exprs[1], env)

    def X_ring(self, x1, x2, y1, y2):
        env = {"x1": x1, "x2": x2, "y1": y1, "y2": y2}
        return eval_expr(self.x_exprs[0], env), eval_expr(self.x_exprs[1], env)

    @property
    def linear_y(self):
        """True when both components of X are affine in (y1, y2); cached."""
        got = self.__dict__.get("_linear_y")
        if got is None:
            names = {"y1", "y2"}
            got = all(_affine_in(e, names) for e in self.x_exprs)
            self.__dict__["_linear_y"] = got
        return got

    def DK_ring(self, th, s):
        """((dK1/dth, dK1/ds, dK2/dth, dK2/ds), (K1, K2)) at (th, s)."""
        env = dual_env({"th": th, "s": s}, ["th", "s"])
        K1 = eval_expr(self.k_exprs[0], env)
        K2 = eval_expr(self.k_exprs[1], env)
        return (K1.grad[0], K1.grad[1], K2.grad[0], K2.grad[1]), (K1.val, K2.val)

    def _yfield(self, u1, u2, v1, v2):
        (a, b, c, d), (Ku1, Ku2) = self.DK_ring(u1, u2)
        Kv1, Kv2 = self.K_ring(v1, v2)
        if self.eps > 0.0 and not self.linear_y:
            Xa1, Xa2 = self.X_ring(Ku1, Ku2, Kv1 * self.eps, Kv2 * self.eps)
            Xb1, Xb2 = self.X_ring(Ku1, Ku2, 0.0, 0.0)
            inv_eps = 1.0 / self.eps
            P1 = (Xa1 - Xb1) * inv_eps
            P2 = (Xa2 - Xb2) * inv_eps
        else:
            # exact for eps = 0 (the limit) and for X affine in y (then the
            # divided difference IS the directional derivative); avoids the
            # 1/eps rounding amplification of the generic branch
            y1 = Dual(0.0, (Kv1,))
            y2 = Dual(0.0, (Kv2,))
            X1, X2 = self.X_ring(Ku1, Ku2, y1, y2)
            # a component with no y-dependence comes back as a plain value
            P1 = X1.grad[0] if isinstance(X1, Dual) else 0.0
            P2 = X2.grad[0] if isinstance(X2, Dual) else 0.0
        det = a * d - b * c
        _det_guard(det)
        Y1 = (d * P1 - b * P2) / det
        Y2 = (a * P2 - c * P1) / det
        return Y1, Y2

    def rho_u_expr(self):
        """rho = r(K(u1, u2)) as a plain expression in u1, u2."""
        ren = {"th": Var("u1"), "s": Var("u2")}
        k1 = subst(self.k_exprs[0], ren)
        k2 = subst(self.k_exprs[1], ren)
        return subst(self.r_expr, {"x1": k1, "x2": k2})

    def to_coords(self):
        return Model(
            omega0=self.omega0,
            lambda0=self.lambda0,
            eps=self.eps,
            h=self.h,
            cutoff=self.cutoff,
            rho_expr=self.rho_u_expr(),
            y_exprs=None,
            cart=self,
            source=self.source,
        )

    def with_eps(self, eps):
        d = copy.deepcopy(self.source)
        d["eps"] = float(eps)
        return model_from_dict(d)

    def to_dict(self):
        return copy.deepcopy(self.source)

    @property
    def fingerprint(self):
        return model_fingerprint(self.source)


def cartesian_to_coords(cm):
    """Pull a cartesian definition back to the cycle chart."""
    return cm.to_coords()


def conjugacy_residual(cm, n_theta=64, s_vals=None):
    """sup | X(K(th,s), 0) - DK(th,s)*(omega0, lambda0*s) | over a grid.

    Measures how well the declared change of coordinates conjugates the
    unperturbed field to the straight flow; zero for an exact conjugacy.
    """
    if s_vals is None:
        s_vals = np.linspace(-0.5, 0.5, 17)
    th = np.arange(n_theta) / n_theta
    worst = 0.0
    for s in np.asarray(s_vals, dtype=np.float64):
        (a, b, c, d), (K1, K2) = cm.DK_ring(th, float(s))
        X1, X2 = cm.X_ring(K1, K2, 0.0, 0.0)
        r1 = X1 - (a * cm.omega0 + b * cm.lambda0 * s)
        r2 = X2 - (c * cm.omega0 + d * cm.lambda0 * s)
        worst = max(worst, float(np.max(np.abs(r1))), float(np.max(np.abs(r2))))
    return worst


# ---------------------------------------------------------------------------
# validation / loading


def _want_number(d, key, pointer):
    v = d.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelError(f"{pointer}/{key}: must be a number")
    v = float(v)
    if not np.isfinite(v):
        raise ModelError(f"{pointer}/{key}: must be finite")
    return v


def _want_expr(text, pointer, allowed):
    try:
        e = parse_expr(text)
    except ModelError as exc:
        raise ModelError(f"{pointer}: {exc}") from None
    extra = expr_variables(e) - allowed
    if extra:
        names = ", ".join(sorted(extra))
        raise ModelError(f"{pointer}: unknown variable(s) {names}; allowed: "
                         + ", ".join(sorted(allowed)))
    return e


def _want_expr_pair(d, key, pointer, allowed):
    v = d.get(key)
    if not (isinstance(v, list) and len(v) == 2):
        raise ModelError(f"{pointer}/{key}: must be a list of two expression strings")
    return tuple(_want_expr(v[i], f"{pointer}/{key}/{i}", allowed) for i in (0, 1))


_COMMON_KEYS = {"type", "omega0", "lambda0", "eps", "h", "cutoff"}
_KEYS = {
    "coords": _COMMON_KEYS | {"Y", "rho"},
    "cartesian": _COMMON_KEYS | {"X", "r", "K"},
}


def model_from_dict(d):
    """Validate a definition dict; returns Model or CartesianModel.

    Error messages carry a JSON pointer to the offending member.
    """
    if not isinstance(d, dict):
        raise ModelError("/: model definition must be a JSON object")
    mtype = d.get("type")
    if mtype not in _KEYS:
        raise ModelError("/type: must be \"coords\" or \"cartesian\"")
    unknown = set(d) - _KEYS[mtype]
    if unknown:
        raise ModelError(f"/{sorted(unknown)[0]}: unknown member")
    for key in sorted(_KEYS[mtype] - {"cutoff"}):
        if key not in d:
            raise ModelError(f"/{key}: missing")

    omega0 = _want_number(d, "omega0", "")
    if omega0 <= 0.0:
        raise ModelError("/omega0: must be > 0")
    lambda0 = _want_number(d, "lambda0", "")
    if lambda0 >= 0.0:
        raise ModelError("/lambda0: must be < 0")
    eps = _want_number(d, "eps", "")
    if eps < 0.0:
        raise ModelError("/eps: must be >= 0")
    h = _want_number(d, "h", "")
    if h < 0.0:
        raise ModelError("/h: must be >= 0")

    cut_d = d.get("cutoff", {"a1": 0.5, "a2": 1.0})
    if not isinstance(cut_d, dict) or set(cut_d) != {"a1", "a2"}:
        raise ModelError("/cutoff: must be an object with exactly a1 and a2")
    a1 = _want_number(cut_d, "a1", "/cutoff")
    a2 = _want_number(cut_d, "a2", "/cutoff")
    try:
        cut = Cutoff(a1, a2)
    except ValueError as exc:
        raise ModelError(f"/cutoff: {exc}") from None

    # normalized canonical source (defaults made explicit)
    source = copy.deepcopy(d)
    source["cutoff"] = {"a1": a1, "a2": a2}

    if mtype == "coords":
        y_exprs = _want_expr_pair(d, "Y", "", {"u1", "u2", "v1", "v2"})
        rho_expr = _want_expr(d.get("rho"), "/rho", {"u1", "u2"})
        if any(expr_has_div(e) for e in y_exprs):
            warnings.warn(
                "Y contains division; make sure denominators stay away from "
                "zero wherever the cut-off is positive",
                stacklevel=2,
            )
        model = Model(
            omega0=omega0, lambda0=lambda0, eps=eps, h=h, cutoff=cut,
            rho_expr=rho_expr, y_exprs=y_exprs, cart=None, source=source,
        )
        _check_delay_range(model, rho_expr)
        return model

    x_exprs = _want_expr_pair(d, "X", "", {"x1", "x2", "y1", "y2"})
    r_expr = _want_expr(d.get("r"), "/r", {"x1", "x2"})
    k_exprs = _want_expr_pair(d, "K", "", {"th", "s"})
    if any(expr_has_div(e) for e in x_exprs):
        warnings.warn(
            "X contains division; make sure denominators stay away from "
            "zero wherever the cut-off is positive",
            stacklevel=2,
        )
    cm = CartesianModel(
        omega0=omega0, lambda0=lambda0, eps=eps, h=h, cutoff=cut,
        x_exprs=x_exprs, r_expr=r_expr, k_exprs=k_exprs, source=source,
    )
    _check_k_periodic(cm)
    _check_delay_range(cm, cm.rho_u_expr())
    return cm


def _check_k_periodic(cm, tol=1e-9):
    """K(th, s) must be 1-periodic in th (spot check)."""
    th = np.linspace(0.0, 1.0, 13)
    for s in (-0.5 * cm.cutoff.a1, 0.0, 0.5 * cm.cutoff.a1):
        A1, A2 = cm.K_ring(th, s)
        B1, B2 = cm.K_ring(th + 1.0, s)
        gap = max(float(np.max(np.abs(A1 - B1))), float(np.max(np.abs(A2 - B2))))
        if not gap < tol:
            raise ModelError(f"/K: not 1-periodic in th (gap {gap:.2e})")


def _check_delay_range(m, rho_expr, tol=1e-9):
    """Spot check: the extended delay rho*phi stays in [0, h] on the support."""
    if m.eps == 0.0:
        return
    th = np.arange(37) / 37.0
    for u2 in np.linspace(-0.999 * m.cutoff.a2, 0.999 * m.cutoff.a2, 41):
        w = m.cutoff.phi(float(u2))
        if w <= 0.0:
            continue
        vals = np.asarray(eval_expr(rho_expr, {"u1": th, "u2": float(u2)}))
        ext = vals * w
        if float(np.min(ext)) < -tol or float(np.max(ext)) > m.h + tol:
            raise ModelError(
                f"/rho: extended delay leaves [0, h] on the support "
                f"(found {float(np.min(ext)):.3e}..{float(np.max(ext)):.3e} at u2={u2:.3f})"
            )


def load_model(path):
    """Load and validate a model definition from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ModelError(f"cannot read model file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(d)


# ---------------------------------------------------------------------------
# canonical form


def canonical_json(d):
    """Canonical text form: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(d, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def model_fingerprint(d):
    """sha256 of the canonical form (format-insensitive identity)."""
    return hashlib.sha256(canonical_json(d).encode("utf-8")).hexdigest()


def save_model(m, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(m.to_dict()))
