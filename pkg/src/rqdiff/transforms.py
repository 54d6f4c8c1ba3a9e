"""Changes of variables that remove or rescale the diffusion factor.

Each map returns the transformed profile together with the induced problem
data and a weak-form residual of the target equation,

    max |flux(r) - flux(r_start) + coef * int_{r_start}^r s^(N+beta-1) f(s) ds| / (1 + |...total...|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .errors import GammaOutOfRange, InvalidParameters, ThresholdMismatch, TrivialProfile
from .grid import RadialGrid, RadialProfile, cumulative_weighted_integral, make_graded_grid, sup_norm
from .ivp import PurePowerParams, Trajectory
from .model import CoefficientSpec, ProblemParams, eval_a, eval_g, eval_g_truncated

THRESHOLD_TOL = 1e-10


@dataclass
class TransformReport:
    output: RadialProfile
    transformed_params: Dict[str, float]
    residual: float
    extra: Dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        d = {"transformed_params": dict(self.transformed_params), "residual": self.residual}
        d.update(self.extra)
        return d


def _weak_residual(r, dv, src, N, alpha, beta, m, coef, denom=None) -> float:
    """Defect of -(r^(N+alpha-1)|v'|^(m-2)v'/denom)' = coef r^(N+beta-1) src."""
    with np.errstate(divide="ignore", invalid="ignore"):
        flux = r ** (N + alpha - 1) * np.abs(dv) ** (m - 2) * dv
    flux = np.where(r > 0, flux, 0.0)
    if denom is not None:
        flux = flux / denom
    prof = RadialProfile(RadialGrid.from_nodes(r), src)
    if r[0] == 0:
        I = cumulative_weighted_integral(prof, N + beta - 1, corrected=True).values
    else:
        I = cumulative_weighted_integral(
            RadialProfile(prof.grid, r ** (N + beta - 1) * src), 0.0, corrected=True
        ).values
    defect = (flux - flux[0]) + coef * I
    return float(np.max(np.abs(defect)) / (1.0 + abs(flux[0]) + coef * abs(I[-1])))


def _deriv(p: RadialProfile) -> np.ndarray:
    if p.derivative is not None:
        return np.asarray(p.derivative)
    return np.gradient(p.values, p.r, edge_order=2)


def diffusion_to_plain(
    u: RadialProfile,
    m: float,
    gamma: float,
    params: Optional[ProblemParams] = None,
) -> TransformReport:
    """w = (1 + u)^(1 - gamma/(m-1)).

    When ``params`` is given the residual is taken against the plain equation
    with source (1 - gamma/(m-1))^(m-1) r^(N+beta-1) (w^((m-1)/(m-1-gamma)) - 1)^p;
    otherwise the residual is reported as nan.
    """
    if not (0 <= gamma < m - 1):
        raise GammaOutOfRange(f"gamma={gamma} must lie in [0, m-1)")
    if np.any(u.values < 0):
        raise InvalidParameters("u >= 0")
    th = 1.0 - gamma / (m - 1)
    coef = th ** (m - 1)
    base = 1.0 + u.values
    w = base**th
    dw = None if u.derivative is None else th * base ** (th - 1.0) * u.derivative
    out = RadialProfile(u.grid, w, dw)
    tp = {"coefficient": coef, "inner_exponent": (m - 1) / (m - 1 - gamma)}
    res = float("nan")
    if params is not None:
        tp["p"] = params.p
        src = np.maximum(w ** ((m - 1) / (m - 1 - gamma)) - 1.0, 0.0) ** params.p
        res = _weak_residual(out.r, _deriv(out), src, params.N, params.alpha, params.beta, m, coef)
    return TransformReport(out, tp, res)


def plain_to_diffusion(w: RadialProfile, m: float, gamma: float) -> RadialProfile:
    """Inverse map u = w^((m-1)/(m-1-gamma)) - 1."""
    if not (0 <= gamma < m - 1):
        raise GammaOutOfRange(f"gamma={gamma} must lie in [0, m-1)")
    e = (m - 1) / (m - 1 - gamma)
    du = None if w.derivative is None else e * w.values ** (e - 1) * w.derivative
    return RadialProfile(w.grid, w.values**e - 1.0, du)


def broken_exponents(m: float, gamma: float, p: float, d: float):
    """(lambda, wp) induced by v = (d u)^(1 - gamma/(m-1))."""
    wp = p * (m - 1) / (m - 1 - gamma)
    lam = ((m - 1 - gamma) / (m - 1)) ** (m - 1) * d ** (m - 1 - p)
    return lam, wp


def broken_to_plain(
    u: RadialProfile,
    m: float,
    gamma: float,
    p: float,
    d: float,
    params: Optional[ProblemParams] = None,
) -> TransformReport:
    """v = (d u)^(1 - gamma/(m-1)) on the second segment [s0, .] of a broken run."""
    if not d > 1:
        raise InvalidParameters("d > 1")
    if not (0 < gamma < m - 1):
        raise GammaOutOfRange(f"gamma={gamma} must lie in (0, m-1)")
    if abs(u.values[0] - 1.0 / d) > THRESHOLD_TOL:
        raise ThresholdMismatch(f"u(s0)={u.values[0]!r} differs from 1/d={1.0 / d!r}")
    th = 1.0 - gamma / (m - 1)
    du_ = d * np.maximum(u.values, 0.0)
    v = du_**th
    dv = None
    if u.derivative is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            dv = np.where(du_ > 0, th * d * du_ ** (th - 1.0) * u.derivative, 0.0)
    out = RadialProfile(u.grid, v, dv)
    lam, wp = broken_exponents(m, gamma, p, d)
    tp = {"lambda": lam, "wp": wp}
    res = float("nan")
    if params is not None:
        res = _weak_residual(out.r, _deriv(out), v**wp, params.N, params.alpha, params.beta, m, lam)
    return TransformReport(out, tp, res, {"s0": float(u.r[0])})


def blowup_rescale(
    v: RadialProfile,
    k: float,
    coeffs: CoefficientSpec,
    params: ProblemParams,
    n: Optional[int] = None,
    kappa: Optional[float] = None,
) -> TransformReport:
    """w(y) = v(t y / z) / t on [0, z R / t] with t = ||v||_inf.

    z = (a(0) + g(k))^(gamma/(beta-alpha+m)) t^((beta-alpha+1+p)/(beta-alpha+m)).
    The residual is taken against the rescaled equation with source factor
    t^(beta-alpha+1) / z^(beta-alpha+m) * t^p (no forcing). The derivative
    bound |w'| <= (2 C_gamma y^(beta-alpha+1)/(N+beta))^(1/(m-1)),
    C_gamma = (1 + c2/c1)^gamma, is checked nodewise with 10% slack.
    """
    N, m, al, be, ga, p = params.N, params.m, params.alpha, params.beta, params.gamma, params.p
    bam = be - al + m
    if not bam > 0:
        raise InvalidParameters("beta - alpha + m > 0")
    t = sup_norm(v)
    if t == 0:
        raise TrivialProfile("sup norm is zero")
    a0 = eval_a(coeffs, 0.0)
    if not k > 0:
        raise InvalidParameters("k > 0")
    gk = eval_g(coeffs, k)
    if not math.isfinite(gk):
        raise InvalidParameters("g(k) must be finite; pass a finite truncation level")
    z = (a0 + gk) ** (ga / bam) * t ** ((be - al + 1 + p) / bam)
    R = v.grid.end
    Y = z * R / t
    n = n or v.grid.n
    kappa = kappa or v.grid.kappa
    grid = make_graded_grid(Y, n, kappa)
    y = grid.nodes
    r_of_y = np.minimum(t * y / z, R)
    r_of_y[-1] = R
    w = np.interp(r_of_y, v.r, v.values) / t
    dv = _deriv(v)
    dw = np.interp(r_of_y, v.r, dv) / z
    w[-1] = v.values[-1] / t
    out = RadialProfile(grid, w, dw)
    coef = t ** (be - al + 1) / z**bam * t**p
    gk_w = eval_g_truncated(coeffs, k, np.maximum(t * w, 0.0))
    denom = (eval_a(coeffs, r_of_y) + gk_w) ** ga
    res = _weak_residual(y, dw, np.maximum(w, 0.0) ** p, N, al, be, m, coef, denom)
    C_gamma = (1.0 + coeffs.c2 / coeffs.c1) ** ga
    bound = (2.0 * C_gamma * y ** (be - al + 1) / (N + be)) ** (1.0 / (m - 1))
    ratio = np.where(bound > 0, np.abs(dw) / np.where(bound > 0, bound, 1.0), 0.0)
    extra = {
        "t": t,
        "z": z,
        "y_end": Y,
        "derivative_bound_max_ratio": float(np.max(ratio)),
        "derivative_bound_ok": bool(np.all(np.abs(dw) <= 1.1 * bound)),
    }
    return TransformReport(out, {"coefficient": coef, "C_gamma": C_gamma}, res, extra)


def broken_restart(traj: Trajectory, params: ProblemParams) -> PurePowerParams:
    """Pure-power data whose trajectory from s0 is v = (d u)^(1 - gamma/(m-1)).

    Integrating v directly keeps its zero sharp; recovering v from u near
    the zero amplifies the event-location error of u through the Hölder power.
    """
    if traj.s0 is None or traj.d is None:
        raise InvalidParameters("not a broken trajectory")
    m, ga = params.m, params.gamma
    if not (0 < ga < m - 1):
        raise GammaOutOfRange(f"gamma={ga} must lie in (0, m-1)")
    lam, wp = broken_exponents(m, ga, params.p, traj.d)
    th = 1.0 - ga / (m - 1)
    du0 = float(traj.evaluate(np.array([traj.s0]))[2][0])
    return PurePowerParams(params.N, m, params.alpha, params.beta, lam, wp, traj.s0, 1.0, th * traj.d * du0)
