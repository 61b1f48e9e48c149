"""The transform engine.

Given a Legendre frame (f, xi) and a scalar field tau with -dxi + tau df
nondegenerate, this module builds the enveloped sphere congruence, the
second enveloping frame (f_hat, xi_hat), the associated 1-form alpha whose
closedness characterizes the Ribaucour property, and the verification
machinery around them:

* the Riemannian metric G_ij = ((-dxi+tau df)(d_i), (-dxi+tau df)(d_j)),
  its gradient, and the normal component f_check = (-dxi+tau df)(grad tau);
* the coefficients a = 1 - 2/(tau^2 + mu^2 + 1), b = tau (a - 1) and the
  parametrization f_hat = a f + b xi + (1-a) f_check,
  xi_hat = xi - tau f + tau f_hat;
* alpha(d_i) = (d_i f, -f_check), stored with exact first partials so the
  exterior derivative needs no finite differencing;
* reconstruction (the construction is an involution), the hypersurface
  shape-operator route to f_check, and the curvature-form identity
  (beta wedge beta) = (1 - a) d alpha.

All operations are batched: a frame evaluated on N grid points transforms in
one vectorized pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import charts as CH
from . import exprs as E
from . import jets as J
from . import liegeom as L
from .errors import InvolutionFailure, NotHypersurface, NotRegular
from .jets import Jet2
from .liegeom import LegendreFrame, lie_inner, t0_jet, t1_jet

# Scale-aware regularity screen, |det G| < DET_REL_TOL * (max |G entry|)^m.
DET_REL_TOL = 1e-10
# Closedness gate: max |d alpha| < CLOSEDNESS_REL_TOL * (1 + max |alpha|).
CLOSEDNESS_REL_TOL = 1e-7


@dataclass
class MinusMetric:
    """Gram matrix of the congruence metric in the coordinate basis."""

    G: Jet2  # values (..., m, m)
    Ginv: Jet2
    det: np.ndarray
    singular: np.ndarray  # boolean mask of points failing the screen
    V: list[Jet2]  # (-dxi + tau df)(d_i), reused by the transform

    @property
    def min_abs_det(self) -> float:
        d = np.abs(self.det)
        return float(np.nanmin(d)) if d.size else float("nan")

    def subset(self, key) -> "MinusMetric":
        return MinusMetric(
            self.G.batch(key),
            self.Ginv.batch(key),
            self.det[key],
            self.singular[key],
            [v.batch(key) for v in self.V],
        )


@dataclass
class TransformResult:
    """Pointwise data of one transform, batched over the evaluation points."""

    frame: LegendreFrame
    tau: Jet2
    metric: MinusMetric
    a: Jet2
    b: Jet2
    mu2: Jet2
    f_check: Jet2
    f_hat: Jet2
    xi_hat: Jet2
    alpha: Jet2  # components along the last value axis; grads are exact
    residuals: dict = field(default_factory=dict)

    @property
    def regular_mask(self) -> np.ndarray:
        return ~self.metric.singular

    def subset(self, key) -> "TransformResult":
        return TransformResult(
            self.frame.subset(key),
            self.tau.batch(key),
            self.metric.subset(key),
            self.a.batch(key),
            self.b.batch(key),
            self.mu2.batch(key),
            self.f_check.batch(key),
            self.f_hat.batch(key),
            self.xi_hat.batch(key),
            self.alpha.batch(key),
        )


def _raise_not_regular(singular: np.ndarray, points: np.ndarray, what: str):
    idx = tuple(int(k) for k in np.argwhere(singular)[0])
    pt = points[idx] if points is not None else None
    raise NotRegular(
        f"{what} degenerates at batch index {idx}"
        + (f", parameter point {np.round(pt, 6).tolist()}" if pt is not None else ""),
        index=idx,
        point=pt,
    )


def minus_metric(
    frame: LegendreFrame,
    tau: Jet2,
    *,
    det_rel_tol: float = DET_REL_TOL,
    on_singular: str = "raise",
) -> MinusMetric:
    """Congruence metric G_ij = ((-dxi+tau df)(d_i), (-dxi+tau df)(d_j)).

    Positive definite exactly at the regular points; ``on_singular`` chooses
    between raising :class:`NotRegular` and NaN-masking degenerate points.
    """
    m = frame.m
    tv = tau.vec()
    V = [(-frame.xi.deriv(i)) + tv * frame.f.deriv(i) for i in range(m)]
    G = J.mat_from_rows([[lie_inner(V[i], V[k]) for k in range(m)] for i in range(m)])
    det = J.mat_det_value(G)
    singular = J.singular_mask(G, det_rel_tol)
    if np.any(singular):
        if on_singular == "raise":
            _raise_not_regular(singular, frame.points, "congruence metric")
        elif on_singular != "nan":
            raise ValueError(f"unknown on_singular mode {on_singular!r}")
    Ginv = J.mat_inverse(G, rel_tol=det_rel_tol, on_singular="nan")
    return MinusMetric(G, Ginv, det, singular, V)


def transform(
    frame: LegendreFrame,
    tau: Jet2,
    *,
    det_rel_tol: float = DET_REL_TOL,
    on_singular: str = "raise",
) -> TransformResult:
    """Build the second enveloping frame and the closedness 1-form.

    The gradient of tau is taken in the congruence metric; f_check is its
    image under -dxi + tau df, mu^2 its squared length, and

        a = 1 - 2/(tau^2 + mu^2 + 1),   b = tau (a - 1),
        f_hat  = a f + b xi + (1 - a) f_check,
        xi_hat = xi - tau f + tau f_hat,
        alpha(d_i) = (d_i f, -f_check).
    """
    m = frame.m
    metric = minus_metric(
        frame, tau, det_rel_tol=det_rel_tol, on_singular=on_singular
    )
    V = metric.V
    dtau = [tau.deriv(i) for i in range(m)]
    dtau_vec = J.stack(dtau, axis=-1)
    tgrad = J.mat_vec(metric.Ginv, dtau_vec)  # components of the metric gradient
    tg = [tgrad.take(i) for i in range(m)]

    f_check = tg[0].vec() * V[0]
    for i in range(1, m):
        f_check = f_check + tg[i].vec() * V[i]
    mu2 = J.jsum(tgrad * dtau_vec, axis=-1)  # d tau (grad tau)

    denom = tau * tau + mu2 + 1.0
    a = 1.0 - 2.0 / denom
    b = tau * (a - 1.0)

    one_minus_a = 1.0 - a
    f_hat = a.vec() * frame.f + b.vec() * frame.xi + one_minus_a.vec() * f_check
    tv = tau.vec()
    xi_hat = frame.xi - tv * frame.f + tv * f_hat

    alpha = J.stack(
        [lie_inner(frame.f.deriv(i), -f_check) for i in range(m)], axis=-1
    )
    return TransformResult(
        frame, tau, metric, a, b, mu2, f_check, f_hat, xi_hat, alpha
    )


# ---------- closedness ----------


def dalpha_components(result: TransformResult) -> np.ndarray:
    """Exterior derivative entries d_i alpha_j - d_j alpha_i for i < j.

    Read from the exact first partials carried by the alpha jets; shape
    ``batch + (m(m-1)/2,)``.
    """
    g = result.alpha.grad  # (..., comp j, deriv i)
    m = result.frame.m
    cols = []
    for i in range(m):
        for j in range(i + 1, m):
            cols.append(g[..., j, i] - g[..., i, j])
    return np.stack(cols, axis=-1)


def ribaucour_residual(
    frame: LegendreFrame,
    tau: Jet2,
    *,
    result: TransformResult | None = None,
    on_singular: str = "raise",
) -> tuple[float, tuple, np.ndarray]:
    """Max |d alpha| over the batch, its location, and the raw entries."""
    if result is None:
        result = transform(frame, tau, on_singular=on_singular)
    d = np.abs(dalpha_components(result))
    if result.metric.singular.any():
        d = np.where(result.metric.singular[..., None], np.nan, d)
    flat = np.max(np.where(np.isnan(d), -np.inf, d), axis=-1)
    if not np.any(flat > -np.inf):
        raise NotRegular("no regular points in the batch")
    worst = np.unravel_index(np.argmax(flat), flat.shape)
    return float(flat[worst]), tuple(int(k) for k in worst), d


def max_abs_alpha(result: TransformResult) -> float:
    a = np.abs(result.alpha.value)
    return float(np.nanmax(a)) if a.size else 0.0


def classify_ribaucour(
    max_dalpha: float, max_alpha: float, rel_tol: float = CLOSEDNESS_REL_TOL
) -> bool:
    """Scale-aware closedness gate."""
    return bool(max_dalpha < rel_tol * (1.0 + max_alpha))


# ---------- verification suite ----------


def _vmax(x) -> float:
    arr = x.value if isinstance(x, Jet2) else np.asarray(x)
    return float(np.nanmax(np.abs(arr))) if arr.size else 0.0


def f_check_hat(result: TransformResult) -> Jet2:
    """Normal component of the reverse decomposition: f_check + mu^2 (f - f_hat)."""
    return result.f_check + result.mu2.vec() * (result.frame.f - result.f_hat)


def alpha_hat(result: TransformResult) -> Jet2:
    """The 1-form of the transformed frame, (d_i f_hat, -f_check_hat)."""
    fch = f_check_hat(result)
    m = result.frame.m
    return J.stack(
        [lie_inner(result.f_hat.deriv(i), -fch) for i in range(m)], axis=-1
    )


def residual_suite(result: TransformResult) -> dict:
    """Pointwise identity residuals of one transform.

    Keys group the unit/orthogonality relations of the transformed frame
    (eq6), the differential identity relating the two congruence forms (eq9),
    and the sum rule alpha + alpha_hat = d ln(1-a) (eq13), plus supporting
    orthogonality/normalization checks.
    """
    m = result.frame.m
    f, xi = result.frame.f, result.frame.xi
    fh, xh = result.f_hat, result.xi_hat
    a, b, mu2, fc = result.a, result.b, result.mu2, result.f_check
    V = result.metric.V
    tau = result.tau

    res = {}
    res["eq6_unit_fhat"] = _vmax(lie_inner(fh, fh) - 1.0)
    res["eq6_unit_xihat"] = _vmax(lie_inner(xh, xh) - 1.0)
    res["eq6_orth"] = _vmax(lie_inner(fh, xh))
    fourth = []
    for i in range(m):
        term = (
            b.grad[..., i]
            - tau.value * a.grad[..., i]
            + (1.0 - a.value) * lie_inner(V[i], fc).value
        )
        fourth.append(np.abs(term))
    res["eq6_fourth"] = float(np.nanmax(np.stack(fourth))) if fourth else 0.0
    res["eq6"] = max(
        res["eq6_unit_fhat"], res["eq6_unit_xihat"], res["eq6_orth"], res["eq6_fourth"]
    )

    res["fcheck_orth_f"] = _vmax(lie_inner(fc, f))
    res["fcheck_orth_xi"] = _vmax(lie_inner(fc, xi))
    res["mu2_match"] = _vmax(lie_inner(fc, fc) - mu2)

    # The congruence section is enveloped by the new frame.
    t0, t1 = t0_jet(m), t1_jet(m)
    tv = tau.vec()
    sigma = xi - tv * f - tv * t0 + t1
    res["envelope"] = _vmax(sigma - ((xh + t1) - tv * (fh + t0)))

    # eq9: -dxi_hat + tau df_hat = -dxi + tau df + (f - f_hat) dtau.
    eq9 = 0.0
    hat_rows = []
    for i in range(m):
        Vh_i = (-xh.deriv(i)) + tv * fh.deriv(i)
        rhs_val = V[i].value + tau.grad[..., i, None] * (f.value - fh.value)
        eq9 = max(eq9, _vmax(Vh_i.value - rhs_val))
        hat_rows.append(Vh_i)
    res["eq9"] = eq9

    # The transformed frame induces the same congruence metric.
    Ghat = np.stack(
        [
            np.stack(
                [lie_inner(hat_rows[i], hat_rows[k]).value for k in range(m)], axis=-1
            )
            for i in range(m)
        ],
        axis=-2,
    )
    res["metric_match"] = _vmax(Ghat - result.metric.G.value)
    res["hat_min_abs_det"] = float(np.nanmin(np.abs(np.linalg.det(Ghat))))

    # eq13: alpha + alpha_hat = d ln(1 - a), using (f, f_hat) = a.
    ah = alpha_hat(result)
    one_minus_a = 1.0 - a.value
    dln = -a.grad / one_minus_a[..., None]
    res["eq13"] = _vmax(result.alpha.value + ah.value - dln)

    # Consistency of the quotient expressions for both 1-forms.
    inv_am1 = 1.0 / (a.value - 1.0)
    res["alpha_forms"] = max(
        max(
            _vmax(lie_inner(f.deriv(i), fh).value * inv_am1 - result.alpha.value[..., i])
            for i in range(m)
        ),
        max(
            _vmax(lie_inner(fh.deriv(i), f).value * inv_am1 - ah.value[..., i])
            for i in range(m)
        ),
    )
    return res


def pointwise_residuals(result: TransformResult) -> dict[str, np.ndarray]:
    """Per-point residual magnitudes of the main identities (for field dumps)."""
    m = result.frame.m
    f, xi = result.frame.f, result.frame.xi
    fh, xh = result.f_hat, result.xi_hat
    a, b, fc = result.a, result.b, result.f_check
    tau, V = result.tau, result.metric.V
    tv = tau.vec()

    eq6 = np.abs(lie_inner(fh, fh).value - 1.0)
    eq6 = np.maximum(eq6, np.abs(lie_inner(xh, xh).value - 1.0))
    eq6 = np.maximum(eq6, np.abs(lie_inner(fh, xh).value))
    for i in range(m):
        fourth = (
            b.grad[..., i]
            - tau.value * a.grad[..., i]
            + (1.0 - a.value) * lie_inner(V[i], fc).value
        )
        eq6 = np.maximum(eq6, np.abs(fourth))

    eq9 = np.zeros_like(eq6)
    for i in range(m):
        Vh_i = (-xh.deriv(i)) + tv * fh.deriv(i)
        rhs = V[i].value + tau.grad[..., i, None] * (f.value - fh.value)
        eq9 = np.maximum(eq9, np.max(np.abs(Vh_i.value - rhs), axis=-1))

    ah = alpha_hat(result)
    dln = -a.grad / (1.0 - a.value)[..., None]
    eq13 = np.max(np.abs(result.alpha.value + ah.value - dln), axis=-1)
    return {"eq6": eq6, "eq9": eq9, "eq13": eq13}


def reconstruct(
    result: TransformResult, *, tol: float = 1e-8, contact_tol: float = 1e-8
) -> tuple[LegendreFrame, dict]:
    """Transform the transformed frame with the same tau; must return home.

    Returns the reconstructed frame plus diagnostics: the sup-norm frame
    discrepancy, the residual of the reverse normal component identity
    f_check_hat = f_check + mu^2 (f - f_hat), and the length check
    |f_check_hat| = mu.  Raises :class:`InvolutionFailure` above ``tol``.
    """
    frame = result.frame
    hat_frame = L.lift_frame(
        result.f_hat, result.xi_hat, frame.points, contact_tol=contact_tol
    )
    back = transform(hat_frame, result.tau, on_singular="raise")
    inv_f = _vmax(back.f_hat.value - frame.f.value)
    inv_xi = _vmax(back.xi_hat.value - frame.xi.value)
    diag = {
        "involution": max(inv_f, inv_xi),
        "eq10": _vmax(back.f_check.value - f_check_hat(result).value),
        "mu_match": _vmax(lie_inner(back.f_check, back.f_check).value - result.mu2.value),
    }
    if diag["involution"] > tol:
        raise InvolutionFailure(
            f"frame discrepancy {diag['involution']:.3e} exceeds {tol:.1e}"
        )
    recon = LegendreFrame(back.f_hat, back.xi_hat, frame.points, frame.m)
    return recon, diag


def shape_operator_path(
    frame: LegendreFrame,
    tau: Jet2,
    *,
    det_rel_tol: float = DET_REL_TOL,
) -> Jet2:
    """f_check via the hypersurface route df o (A + tau Id)^(-1)(grad_f tau).

    A is the shape operator (dxi = -df o A) and grad_f the gradient of the
    induced metric (df, df); requires f to be an immersion.  Agrees with the
    congruence-metric route at every regular point.
    """
    m = frame.m
    df = [frame.f.deriv(i) for i in range(m)]
    dxi = [frame.xi.deriv(i) for i in range(m)]
    g = J.mat_from_rows([[lie_inner(df[i], df[k]) for k in range(m)] for i in range(m)])
    if np.any(J.singular_mask(g, det_rel_tol)):
        raise NotHypersurface("induced metric (df, df) is singular in the batch")
    ginv = J.mat_inverse(g, rel_tol=det_rel_tol, on_singular="raise")
    S = J.mat_from_rows(
        [[-lie_inner(df[i], dxi[k]) for k in range(m)] for i in range(m)]
    )
    A = J.mat_mul(ginv, S)
    M = A + Jet2.constant(np.eye(m), m) * tau.vec().vec()
    if np.any(J.singular_mask(M, det_rel_tol)):
        _raise_not_regular(J.singular_mask(M, det_rel_tol), frame.points, "A + tau Id")
    Minv = J.mat_inverse(M, rel_tol=det_rel_tol, on_singular="raise")
    dtau_vec = J.stack([tau.deriv(i) for i in range(m)], axis=-1)
    w = J.mat_vec(Minv, J.mat_vec(ginv, dtau_vec))
    out = w.take(0).vec() * df[0]
    for i in range(1, m):
        out = out + w.take(i).vec() * df[i]
    return out


def curvature_identity(result: TransformResult) -> dict:
    """Compare (beta(f+t0) wedge beta(f_hat+t0)) against (1-a) d alpha.

    beta psi = d psi - psi * (its connection form); the wedge pairs the
    1-form slots and takes the ambient inner product on the vector slots.
    Also reports the sum-rule residual alpha + alpha_hat - d ln(1-a).
    """
    m = result.frame.m
    f, fh = result.frame.f, result.f_hat
    t0 = t0_jet(m)
    ah = alpha_hat(result)
    B = [
        f.deriv(i) - result.alpha.take(i).vec() * (f + t0) for i in range(m)
    ]
    Bh = [
        fh.deriv(i) - ah.take(i).vec() * (fh + t0) for i in range(m)
    ]
    one_minus_a = 1.0 - result.a.value
    dal = dalpha_components(result)
    diffs = []
    lhs_mag = []
    k = 0
    for i in range(m):
        for j in range(i + 1, m):
            lhs = lie_inner(B[i], Bh[j]).value - lie_inner(B[j], Bh[i]).value
            rhs = one_minus_a * dal[..., k]
            diffs.append(np.abs(lhs - rhs))
            lhs_mag.append(np.abs(lhs) + np.abs(rhs))
            k += 1
    diff = np.stack(diffs, axis=-1)
    mag = np.stack(lhs_mag, axis=-1)
    if result.metric.singular.any():
        diff = np.where(result.metric.singular[..., None], np.nan, diff)
        mag = np.where(result.metric.singular[..., None], np.nan, mag)
    abs_res = float(np.nanmax(diff)) if diff.size else 0.0
    scale = float(np.nanmax(mag)) if mag.size else 0.0
    dln = -result.a.grad / one_minus_a[..., None]
    sum_rule = _vmax(result.alpha.value + ah.value - dln)
    return {
        "abs": abs_res,
        "rel": abs_res / scale if scale > 0 else 0.0,
        "scale": scale,
        "sum_rule": sum_rule,
    }


# ---------- grid-level runner ----------


@dataclass
class GridRun:
    """One chart/tau evaluation over a full grid, with derived diagnostics."""

    chart: CH.ChartSpec
    tau_src: str
    grid_shape: tuple[int, int]
    frame: LegendreFrame
    tau: Jet2
    result: TransformResult
    max_dalpha: float
    dalpha_argmax: tuple
    max_alpha: float
    ribaucour: bool
    residuals: dict
    curvature: dict
    reconstruction: dict


def run_grid(
    chart: CH.ChartSpec,
    tau_expr: E.TauExpr,
    points: np.ndarray,
    *,
    closedness_rel_tol: float = CLOSEDNESS_REL_TOL,
    det_rel_tol: float = DET_REL_TOL,
    involution_tol: float = 1e-8,
    contact_tol: float | None = None,
) -> GridRun:
    """Evaluate, transform, and verify a scene on a batch of points."""
    pts = np.asarray(points, dtype=float)
    grid_shape = tuple(int(n) for n in pts.shape[:-1])
    frame = CH.eval_chart(
        chart, pts.reshape(-1, pts.shape[-1]), contact_tol=contact_tol
    )
    tau = E.eval_at(tau_expr, frame.points)
    result = transform(frame, tau, det_rel_tol=det_rel_tol, on_singular="nan")
    reg = result.regular_mask
    if not reg.any():
        _raise_not_regular(result.metric.singular, frame.points, "congruence metric")
    # Degenerate points (a curvature-sphere crossing of tau) are masked out of
    # the diagnostics; the report carries regular=False when any exist.
    clean = result if reg.all() else result.subset(reg)
    max_da, arg, _ = ribaucour_residual(
        clean.frame, clean.tau, result=clean, on_singular="nan"
    )
    # Map the argmax back to the original (unmasked) flat index.
    orig_flat = int(np.flatnonzero(reg)[arg[0]])
    max_al = max_abs_alpha(clean)
    suite = residual_suite(clean)
    curv = curvature_identity(clean)
    _, recon = reconstruct(clean, tol=involution_tol)
    result.residuals = dict(suite)
    return GridRun(
        chart=chart,
        tau_src=E.to_source(tau_expr),
        grid_shape=grid_shape,
        frame=frame,
        tau=tau,
        result=result,
        max_dalpha=max_da,
        dalpha_argmax=(orig_flat,),
        max_alpha=max_al,
        ribaucour=classify_ribaucour(max_da, max_al, closedness_rel_tol),
        residuals=suite,
        curvature=curv,
        reconstruction=recon,
    )


def diagnostic_report(run: GridRun) -> dict:
    """JSON-ready diagnostics in the report schema consumed by the CLI."""
    return {
        "chart": CH.chart_to_json(run.chart),
        "tau_src": run.tau_src,
        "grid": list(run.grid_shape),
        "regular": not bool(run.result.metric.singular.any()),
        "min_det": run.result.metric.min_abs_det,
        "max_dalpha": run.max_dalpha,
        "max_dalpha_at": [float(x) for x in run.frame.points[run.dalpha_argmax[0]]],
        "max_alpha": run.max_alpha,
        "ribaucour": run.ribaucour,
        "residuals": {
            "eq6": run.residuals["eq6"],
            "eq9": run.residuals["eq9"],
            "eq10": run.reconstruction["eq10"],
            "eq13": run.residuals["eq13"],
            "involution": run.reconstruction["involution"],
            "curvature_identity": run.curvature["abs"],
        },
    }
