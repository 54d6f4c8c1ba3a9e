"""Integral operator F, its forced variant, and the Picard solver.

F(v)(r) = int_r^R s^mu psi(s) ds with mu = (beta - alpha + 1)/(m - 1) and

    psi(s) = [(a(s) + g_k(v(s)))^gamma * I(s) / s^(N+beta)]^(1/(m-1)),
    I(s)   = int_0^s tau^(N+beta-1) v(tau)^p dtau.

Both integrals use product integration against the exact power weight, so
the singular weights at r = 0 cost nothing in accuracy.

The default Picard scheme iterates on the shape w = v / v(0) and fixes the
amplitude t at each step from F(t w)(0) = t. Plain damped iteration
v <- (1 - theta) v + theta F(v) is available as ``scheme="plain"``, but a
nontrivial fixed point is repelling for it whenever p > m - 1 (along v* the
linearization has eigenvalue p/(m-1) > 1), so it only ever finds 0 or blows up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidParameters, MissingDerivative, OriginSingularity
from .grid import (
    _cell_curvature,
    RadialGrid,
    RadialProfile,
    cell_weights,
    cumulative_from_weights,
    cumulative_weighted_integral,
    make_graded_grid,
    sup_norm,
    total_weights,
)
from .model import CoefficientSpec, ProblemParams, eval_a, eval_g, eval_g_truncated

STATUSES = ("Converged", "Diverged", "CollapsedToZero", "OriginBlowup", "Stalled")


@dataclass(frozen=True)
class PicardOptions:
    theta: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000
    divergence_cap: float = 1e8
    initial_guess: str = "parabolic"  # parabolic | constant | supplied
    guess_value: float = 1.0
    supplied: Optional[RadialProfile] = None
    scheme: str = "normalized"  # normalized | plain

    def __post_init__(self):
        if not (0 < self.theta <= 1):
            raise InvalidParameters("0 < theta <= 1")
        if not self.tol > 0:
            raise InvalidParameters("tol > 0")
        if not self.divergence_cap > 1:
            raise InvalidParameters("divergence_cap > 1")
        if int(self.max_iter) < 1:
            raise InvalidParameters("max_iter >= 1")
        if self.initial_guess not in ("parabolic", "constant", "supplied"):
            raise InvalidParameters(f"unknown initial guess {self.initial_guess!r}")
        if self.initial_guess == "supplied" and self.supplied is None:
            raise InvalidParameters("supplied guess requires a profile")
        if self.scheme not in ("normalized", "plain"):
            raise InvalidParameters(f"unknown scheme {self.scheme!r}")


@dataclass
class SolveReport:
    status: str
    solution: Optional[RadialProfile]
    iterations: int
    final_update: float
    ode_residual: float
    picard_history: List[float] = field(default_factory=list)
    amplitude: float = float("nan")

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "final_update": self.final_update,
            "ode_residual": self.ode_residual,
        }

    def to_json(self) -> str:
        from .io import dumps

        return dumps(self.to_json_dict())


def default_kappa(params: ProblemParams) -> float:
    bal = params.beta - params.alpha + 1
    if bal <= 0:
        return 1.0
    return max(1.0, (params.m - 1) / bal)


def default_grid(params: ProblemParams, n: int = 1024, kappa: Optional[float] = None) -> RadialGrid:
    return make_graded_grid(params.R, n, default_kappa(params) if kappa is None else kappa)


def _check_origin(params: ProblemParams):
    if params.beta - params.alpha + params.m <= 0:
        raise OriginSingularity(
            "outer integrand ~ s^((beta-alpha+1)/(m-1)) is not integrable at 0"
        )
    if params.N + params.beta <= 0:
        raise OriginSingularity("N + beta <= 0: inner weight not integrable")


class _Kernel:
    """Precomputed quadrature data for a fixed grid and parameter set."""

    def __init__(self, params: ProblemParams, coeffs: CoefficientSpec, grid: RadialGrid, k: float, corrected: bool = True):
        _check_origin(params)
        self.params = params
        self.coeffs = coeffs
        self.grid = grid
        self.k = k
        r = grid.nodes
        self.r = r
        self.nb = params.N + params.beta
        self.mu = (params.beta - params.alpha + 1) / (params.m - 1)
        self.q = 1.0 / (params.m - 1)
        self.a = np.asarray(eval_a(coeffs, r), dtype=float)
        with np.errstate(divide="ignore"):
            self.inv_rnb = np.where(r > 0, r ** (-self.nb), 0.0)
        # cell weights for the outer integral, reused for every evaluation
        self.wl, self.wr, self.qm = cell_weights(r, self.mu, corrected)
        self.corrected = corrected
        self.W = total_weights(r, self.mu, corrected)
        self.inner = cell_weights(r, self.nb - 1, corrected)

    def g(self, v):
        if math.isinf(self.k):
            return eval_g(self.coeffs, v)
        return eval_g_truncated(self.coeffs, self.k, v)

    def ratio(self, src: np.ndarray) -> np.ndarray:
        """I(s)/s^(N+beta) for the inner integrand src = v^p (+ forcing)."""
        I = cumulative_from_weights(self.r, src, self.nb - 1, self.inner)
        out = I * self.inv_rnb
        if self.r[0] == 0:
            out[0] = src[0] / self.nb
        return np.maximum(out, 0.0), I

    def psi(self, v: np.ndarray, src: np.ndarray) -> np.ndarray:
        ratio, _ = self.ratio(src)
        diff = (self.a + self.g(v)) ** self.params.gamma
        return (diff * ratio) ** self.q

    def outer(self, psi: np.ndarray) -> np.ndarray:
        cells = self.wl * psi[:-1] + self.wr * psi[1:]
        if self.corrected:
            cells = cells + _cell_curvature(self.r, psi) * self.qm
        rev = np.cumsum(cells[::-1])[::-1]
        return np.concatenate((rev, [0.0]))

    def derivative(self, psi: np.ndarray) -> np.ndarray:
        r = self.r
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -(r**self.mu) * psi
        if r[0] == 0:
            if self.mu > 0:
                d[0] = 0.0
            elif self.mu == 0:
                d[0] = -psi[0]
            else:
                d[0] = -np.inf
        return d

    def apply(self, v: np.ndarray, src: Optional[np.ndarray] = None) -> RadialProfile:
        v = np.maximum(v, 0.0)
        if src is None:
            src = v**self.params.p
        psi = self.psi(v, src)
        return RadialProfile(self.grid, self.outer(psi), self.derivative(psi))


def apply_F(params: ProblemParams, coeffs: CoefficientSpec, k: float, v: RadialProfile) -> RadialProfile:
    """Image F(v) with derivative channel; k = inf means no truncation."""
    if v.grid.start != 0 or not math.isclose(v.grid.end, params.R, rel_tol=1e-12):
        raise InvalidParameters("profile grid must span [0, R]")
    if np.any(v.values < 0):
        raise InvalidParameters("v must be nonnegative")
    return _Kernel(params, coeffs, v.grid, k).apply(v.values)


def forcing_h(t: float, q_minus_p: float) -> float:
    return t**q_minus_p if t >= 1 else 1.0


def apply_F_forced(
    params: ProblemParams,
    coeffs: CoefficientSpec,
    k: float,
    xi: float,
    q: float,
    v: RadialProfile,
) -> RadialProfile:
    """F with inner integrand v^p + xi / h(||v||_inf)."""
    if not xi >= 0:
        raise InvalidParameters("xi >= 0")
    if not q > params.p:
        raise InvalidParameters("q > p")
    if np.any(v.values < 0):
        raise InvalidParameters("v must be nonnegative")
    ker = _Kernel(params, coeffs, v.grid, k)
    vv = v.values
    src = vv**params.p + xi / forcing_h(sup_norm(v), q - params.p)
    return ker.apply(vv, src)


def ode_residual(params: ProblemParams, coeffs: CoefficientSpec, v: RadialProfile) -> float:
    """Normalized defect of the integrated radial equation.

    max_i |flux(r_i) - int_0^{r_i} s^(N+beta-1) v^p| / (1 + int_0^R ...),
    flux = -r^(N+alpha-1) |v'|^(m-2) v' / (a + g(v))^gamma.
    """
    p = params
    r = v.r
    vals = np.maximum(v.values, 0.0)
    if v.derivative is None:
        if v.grid.n < 32:
            raise MissingDerivative("no derivative channel and n < 32")
        dv = np.gradient(vals, r, edge_order=2)
    else:
        dv = v.derivative
    I = cumulative_weighted_integral(
        RadialProfile(v.grid, vals**p.p), p.N + p.beta - 1, corrected=True
    ).values
    with np.errstate(divide="ignore", invalid="ignore"):
        w = r ** (p.N + p.alpha - 1) * np.abs(dv) ** (p.m - 2) * dv
        flux = -w / (eval_a(coeffs, r) + eval_g(coeffs, vals)) ** p.gamma
    if r[0] == 0:
        flux[0] = 0.0
    return float(np.max(np.abs(flux - I)) / (1.0 + I[-1]))


def _initial(opts: PicardOptions, grid: RadialGrid) -> np.ndarray:
    r = grid.nodes
    R = grid.end
    if opts.initial_guess == "parabolic":
        return opts.guess_value * (1.0 - (r / R) ** 2)
    if opts.initial_guess == "constant":
        return np.full_like(r, opts.guess_value)
    sup = opts.supplied
    if sup.grid.nodes.shape == r.shape and np.allclose(sup.grid.nodes, r, rtol=0, atol=0):
        return np.array(sup.values, dtype=float)
    return np.interp(r, sup.r, sup.values)


def _solve_amplitude(ker: _Kernel, w: np.ndarray, psi0: np.ndarray, t_guess: float, cap: float):
    """Root of F(t w)(0) = t in log t. Returns nan when t exceeds the cap."""
    par = ker.params
    qq = ker.q
    expo = par.p * qq - 1.0
    W = ker.W
    gexp = par.gamma * qq
    aw = W * psi0

    def phi(logt):
        t = math.exp(logt)
        if gexp == 0:
            S = aw.sum()
        else:
            S = np.dot(aw, (ker.a + ker.g(t * w)) ** gexp)
        return expo * logt + math.log(S)

    if gexp == 0:
        return math.exp(-math.log(aw.sum()) / expo)
    lo = hi = math.log(max(t_guess, 1e-300))
    step = 0.5
    flo = phi(lo)
    if flo < 0:
        hi, fhi = lo, flo
        while fhi < 0:
            lo, flo = hi, fhi
            hi = hi + step
            step *= 2
            if hi > math.log(cap) + 5:
                return float("nan")
            fhi = phi(hi)
    else:
        hi, fhi = lo, flo
        while flo > 0:
            hi, fhi = lo, flo
            lo = lo - step
            step *= 2
            flo = phi(lo)
    if flo == 0:
        return math.exp(lo)
    return math.exp(brentq(phi, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def picard_solve(
    params: ProblemParams,
    coeffs: Optional[CoefficientSpec] = None,
    opts: Optional[PicardOptions] = None,
    grid: Optional[RadialGrid] = None,
    k: float = math.inf,
) -> SolveReport:
    coeffs = coeffs or CoefficientSpec.prototype()
    opts = opts or PicardOptions()
    try:
        _check_origin(params)
    except OriginSingularity:
        return SolveReport("OriginBlowup", None, 0, float("nan"), float("nan"))
    grid = grid or default_grid(params)
    ker = _Kernel(params, coeffs, grid, k)
    v0 = np.maximum(_initial(opts, grid), 0.0)
    if opts.scheme == "plain":
        return _picard_plain(ker, v0, opts)
    return _picard_normalized(ker, v0, opts)


def _finish(ker: _Kernel, sol: RadialProfile, it, upd, hist, t) -> SolveReport:
    res = ode_residual(ker.params, ker.coeffs, sol)
    return SolveReport("Converged", sol, it, upd, res, hist, t)


def _picard_normalized(ker: _Kernel, v0: np.ndarray, opts: PicardOptions) -> SolveReport:
    par = ker.params
    hist: List[float] = []
    t = float(np.max(v0))
    if not t > 0:
        return SolveReport("CollapsedToZero", None, 1, 0.0, float("nan"), [0.0], 0.0)
    w = v0 / t
    theta = opts.theta
    grow = 0
    prev_upd = math.inf
    upd = math.inf
    for it in range(1, int(opts.max_iter) + 1):
        ratio, _ = ker.ratio(np.maximum(w, 0.0) ** par.p)
        psi0 = ratio**ker.q
        if not np.any(psi0 > 0):
            return SolveReport("CollapsedToZero", None, it, 0.0, float("nan"), hist, 0.0)
        t_new = _solve_amplitude(ker, w, psi0, t, opts.divergence_cap)
        if not math.isfinite(t_new) or t_new > opts.divergence_cap:
            return SolveReport("Diverged", None, it, upd, float("nan"), hist, t_new)
        fv = ker.apply(t_new * w)
        target = fv.values / t_new
        new_w = (1 - theta) * w + theta * target
        upd = float(np.max(np.abs(target - w)))
        dlog = abs(math.log(t_new / t)) if t > 0 else math.inf
        hist.append(upd)
        t = t_new
        w = new_w
        if upd < opts.tol and dlog < opts.tol:
            return _finish(ker, fv, it, upd, hist, t)
        if upd > prev_upd:
            grow += 1
            if grow >= 2:
                theta *= 0.5
                grow = 0
        else:
            grow = 0
        prev_upd = upd
    return SolveReport("Stalled", None, int(opts.max_iter), upd, float("nan"), hist, t)


def _picard_plain(ker: _Kernel, v0: np.ndarray, opts: PicardOptions) -> SolveReport:
    hist: List[float] = []
    v = v0
    s0 = float(np.max(np.abs(v)))
    theta = opts.theta
    grow = 0
    prev_upd = math.inf
    upd = math.inf
    for it in range(1, int(opts.max_iter) + 1):
        fv = ker.apply(v)
        new_v = (1 - theta) * v + theta * fv.values
        s = float(np.max(np.abs(new_v)))
        upd = float(np.max(np.abs(new_v - v))) / max(s, 1e-300)
        hist.append(upd)
        if s > opts.divergence_cap:
            return SolveReport("Diverged", None, it, upd, float("nan"), hist, s)
        if s < opts.tol * s0 or s == 0:
            return SolveReport("CollapsedToZero", None, it, upd, float("nan"), hist, s)
        if upd < opts.tol:
            return _finish(ker, fv, it, upd, hist, s)
        if upd > prev_upd:
            grow += 1
            if grow >= 2:
                theta *= 0.5
                grow = 0
        else:
            grow = 0
        prev_upd = upd
        v = new_v
    return SolveReport("Stalled", None, int(opts.max_iter), upd, float("nan"), hist, float(np.max(v)))
