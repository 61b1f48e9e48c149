"""Built-in analytic Legendre charts and chart specifications.

Shipped charts parametrize surfaces in S^3 (m = 2).  The product torus chart

    f  = (r cos u, r sin u, s cos v, s sin v),      s = sqrt(1 - r^2)
    xi = (-s cos u, -s sin u, r cos v, r sin v)

satisfies every frame relation identically; with the sign convention
dxi = -df o A its principal curvatures are s/r and -r/s.  A parallel chart
rotates (f, xi) by a fixed angle in each fiber, and custom charts supply the
m+2 components of f and xi as expressions in u, v.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import exprs as E
from . import jets as J
from . import liegeom as L
from .errors import SceneError
from .jets import Jet2

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Domain:
    """Rectangle [u0,u1] x [v0,v1] with per-axis periodicity flags."""

    u: tuple[float, float] = (0.0, TWO_PI)
    v: tuple[float, float] = (0.0, TWO_PI)
    periodic: tuple[bool, bool] = (True, True)

    @property
    def spans(self) -> tuple[float, float]:
        return (self.u[1] - self.u[0], self.v[1] - self.v[0])

    def wrap(self, points: np.ndarray) -> np.ndarray:
        pts = np.array(points, dtype=float, copy=True)
        for axis, ((lo, hi), per) in enumerate(
            zip((self.u, self.v), self.periodic)
        ):
            if per:
                pts[..., axis] = lo + np.mod(pts[..., axis] - lo, hi - lo)
        return pts

    def contains(self, points: np.ndarray, pad: float = 0.0) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        ok = np.ones(pts.shape[:-1], dtype=bool)
        for axis, ((lo, hi), per) in enumerate(
            zip((self.u, self.v), self.periodic)
        ):
            if not per:
                ok &= (pts[..., axis] >= lo + pad) & (pts[..., axis] <= hi - pad)
        return ok


@dataclass(frozen=True)
class CliffordTorus:
    """Product torus in S^3 with circle radii r and sqrt(1-r^2)."""

    r: float
    domain: Domain = field(default_factory=Domain)

    def __post_init__(self):
        if not (0.0 < self.r < 1.0):
            raise SceneError(f"torus radius must lie in (0,1), got {self.r}")

    @property
    def s(self) -> float:
        return float(np.sqrt(1.0 - self.r * self.r))

    def principal_curvatures(self) -> tuple[float, float]:
        return (self.s / self.r, -self.r / self.s)


@dataclass(frozen=True)
class ParallelOf:
    """Constant-angle rotation of a base chart's (f, xi) pair."""

    base: "ChartSpec"
    c: float

    @property
    def domain(self) -> Domain:
        return self.base.domain


@dataclass(frozen=True)
class CustomChart:
    """f and xi given componentwise as expressions in u, v."""

    f_exprs: tuple[E.TauExpr, ...]
    xi_exprs: tuple[E.TauExpr, ...]
    domain: Domain = field(default_factory=Domain)

    def __post_init__(self):
        if len(self.f_exprs) != 4 or len(self.xi_exprs) != 4:
            raise SceneError("custom charts need 4 components for f and for xi")


ChartSpec = Union[CliffordTorus, ParallelOf, CustomChart]

# Contact tolerances: analytic built-ins are exact to round-off; user
# expressions may encode normals with modest cancellation.
BUILTIN_CONTACT_TOL = 1e-12
CUSTOM_CONTACT_TOL = 1e-8


def _torus_lift(spec: CliffordTorus, pts: np.ndarray) -> tuple[Jet2, Jet2]:
    u, v = J.seed(pts)
    r, s = spec.r, spec.s
    cu, su = J.cos(u), J.sin(u)
    cv, sv = J.cos(v), J.sin(v)
    f = L.spatial_vector([r * cu, r * su, s * cv, s * sv])
    xi = L.spatial_vector([(-s) * cu, (-s) * su, r * cv, r * sv])
    return f, xi


def eval_chart(
    spec: ChartSpec, points: np.ndarray, *, contact_tol: float | None = None
) -> L.LegendreFrame:
    """Evaluate a chart at parameter points ``(..., 2)`` as a certified frame.

    ``contact_tol`` overrides the per-kind certification tolerance.
    """
    pts = spec.domain.wrap(np.asarray(points, dtype=float))
    f, xi, tol = _eval_lift(spec, pts)
    return L.lift_frame(f, xi, pts, contact_tol=contact_tol if contact_tol else tol)


def _eval_lift(spec: ChartSpec, pts: np.ndarray) -> tuple[Jet2, Jet2, float]:
    if isinstance(spec, CliffordTorus):
        f, xi = _torus_lift(spec, pts)
        return f, xi, BUILTIN_CONTACT_TOL
    if isinstance(spec, ParallelOf):
        fb, xib, tol = _eval_lift(spec.base, pts)
        c, s = float(np.cos(spec.c)), float(np.sin(spec.c))
        return c * fb + s * xib, (-s) * fb + c * xib, tol
    if isinstance(spec, CustomChart):
        u, v = J.seed(pts)
        env = {"u": u, "v": v}
        f = L.spatial_vector([E.eval_jet(e, env) for e in spec.f_exprs])
        xi = L.spatial_vector([E.eval_jet(e, env) for e in spec.xi_exprs])
        return f, xi, CUSTOM_CONTACT_TOL
    raise TypeError(f"unknown chart spec {spec!r}")


def clifford_torus_exprs(r: float) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Text form of the product torus chart (for custom-chart cross checks)."""
    r = float(r)
    s = float(np.sqrt(1.0 - r * r))
    f = (f"{r!r}*cos(u)", f"{r!r}*sin(u)", f"{s!r}*cos(v)", f"{s!r}*sin(v)")
    xi = (f"-{s!r}*cos(u)", f"-{s!r}*sin(u)", f"{r!r}*cos(v)", f"{r!r}*sin(v)")
    return f, xi


# ---------- JSON round trip for scene files ----------


def chart_from_json(obj: dict) -> ChartSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SceneError("chart must be an object with a 'kind' key")
    kind = obj["kind"]
    dom = _domain_from_json(obj.get("domain"))
    if kind == "clifford_torus":
        if "r" not in obj:
            raise SceneError("clifford_torus chart needs 'r'")
        return CliffordTorus(float(obj["r"]), dom or Domain())
    if kind == "parallel_of":
        if "base" not in obj or "c" not in obj:
            raise SceneError("parallel_of chart needs 'base' and 'c'")
        return ParallelOf(chart_from_json(obj["base"]), float(obj["c"]))
    if kind == "custom":
        for key in ("f", "xi"):
            if key not in obj:
                raise SceneError(f"custom chart needs '{key}' component expressions")
        try:
            f = tuple(E.parse_tau(s) for s in obj["f"])
            xi = tuple(E.parse_tau(s) for s in obj["xi"])
        except E.ParseError as exc:
            raise SceneError(f"bad chart component expression: {exc}") from exc
        return CustomChart(f, xi, dom or Domain(periodic=(False, False)))
    raise SceneError(f"unknown chart kind {kind!r}")


def chart_to_json(spec: ChartSpec) -> dict:
    if isinstance(spec, CliffordTorus):
        return {"kind": "clifford_torus", "r": spec.r, "domain": _domain_to_json(spec.domain)}
    if isinstance(spec, ParallelOf):
        return {"kind": "parallel_of", "base": chart_to_json(spec.base), "c": spec.c}
    if isinstance(spec, CustomChart):
        return {
            "kind": "custom",
            "f": [E.to_source(e) for e in spec.f_exprs],
            "xi": [E.to_source(e) for e in spec.xi_exprs],
            "domain": _domain_to_json(spec.domain),
        }
    raise TypeError(f"unknown chart spec {spec!r}")


def _domain_from_json(obj) -> Domain | None:
    if obj is None:
        return None
    try:
        u = (float(obj["u"][0]), float(obj["u"][1]))
        v = (float(obj["v"][0]), float(obj["v"][1]))
        per = tuple(bool(p) for p in obj.get("periodic", (True, True)))
    except (KeyError, TypeError, IndexError) as exc:
        raise SceneError(f"bad domain spec: {obj!r}") from exc
    if u[1] <= u[0] or v[1] <= v[0]:
        raise SceneError("domain rectangle is empty")
    return Domain(u, v, per)  # type: ignore[arg-type]


def _domain_to_json(dom: Domain) -> dict:
    return {"u": list(dom.u), "v": list(dom.v), "periodic": list(dom.periodic)}
