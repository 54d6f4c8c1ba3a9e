"""Whole-line initial value problems for the pure-power and broken equations.

The state is (u, Q) with Q the flux r^(N+alpha-1) |u'|^(m-2) u' (divided by
(d u)^gamma on the second segment of the broken problem). Inverting the flux
gives u' = sign(w) |w|^(1/(m-1)), which stays well defined at u' = 0.

Starting from r = 0 the system is not Lipschitz, so the first short interval
is covered by the two-term expansion

    u(r) = 1 - (A/k) r^k + (A B / (2k)) r^(2k),   k = (beta - alpha + m)/(m - 1),

with A = (lambda/(N+beta))^(1/(m-1)) and B = wp c (N+beta)/((m-1)(N+beta+k)),
c = A/k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import InvalidParameters, NoCrossing, OutOfDomain, StartupFailure, StepFailure
from .grid import RadialGrid, RadialProfile
from .io import csv_text
from .model import ProblemParams

ZERO_TOL = 1e-12
_N_SERIES = 16
_N_DENSE = 2000


@dataclass(frozen=True)
class PurePowerParams:
    N: float
    m: float
    alpha: float
    beta: float
    lam: float = 1.0
    wp: float = 2.0
    s0: float = 0.0
    u_s0: float = 1.0
    du_s0: float = 0.0

    def __post_init__(self):
        if not self.m > 1:
            raise InvalidParameters("m > 1")
        if not self.lam > 0:
            raise InvalidParameters("lambda > 0")
        # wp = m - 1 (the linear case) is admitted for the closed-form oracle
        if not self.wp > 0:
            raise InvalidParameters("wp > 0")
        if not self.s0 >= 0:
            raise InvalidParameters("s0 >= 0")
        if not self.u_s0 > 0:
            raise InvalidParameters("u(s0) > 0")
        if not self.du_s0 <= 0:
            raise InvalidParameters("u'(s0) <= 0")

    @property
    def rho(self) -> float:
        return (self.N + self.alpha - self.m) / (self.m - 1)


@dataclass
class Trajectory:
    """IVP output on [s0, r_end].

    ``first_zero`` is None when u stays positive up to r_max. ``s0`` is the
    crossing radius for broken runs (None otherwise). ``evaluate`` gives
    dense (u, Q) at arbitrary radii inside the integrated range.
    """

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    Q: np.ndarray
    pp: PurePowerParams
    first_zero: Optional[float]
    r_max: float
    s0: Optional[float] = None
    d: Optional[float] = None
    gamma: float = 0.0
    evaluate: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]] = field(
        default=None, repr=False
    )

    @property
    def profile(self) -> RadialProfile:
        return RadialProfile(RadialGrid.from_nodes(self.r), self.u, self.du)

    @property
    def r_end(self) -> float:
        return float(self.r[-1])

    @property
    def rho(self) -> float:
        return self.pp.rho

    def positive_mask(self) -> np.ndarray:
        mask = self.u > 0
        if self.first_zero is not None:
            mask &= self.r < self.first_zero
        return mask

    def series(self) -> dict:
        pp = self.pp
        rho = pp.rho
        up = np.maximum(self.u, 0.0)
        return {
            "U_rho": self.r * self.du + rho * self.u,
            "r_rho_u": self.r**rho * self.u,
            "tailweight": self.r ** (pp.N + pp.beta) * up ** (pp.wp + 1),
        }

    def to_csv(self) -> str:
        s = self.series()
        rows = zip(self.r, self.u, self.Q, s["U_rho"], s["r_rho_u"], s["tailweight"])
        return csv_text(("r", "u", "Q", "U_rho", "r_rho_u", "tailweight"), rows)

    def events(self) -> dict:
        return {"first_zero": self.first_zero, "s0": self.s0}


# right-hand sides ---------------------------------------------------------------

def _flux_to_du(w, m):
    return np.sign(w) * np.abs(w) ** (1.0 / (m - 1))


def _rhs_pure(pp: PurePowerParams):
    N, m, al, be, lam, wp = pp.N, pp.m, pp.alpha, pp.beta, pp.lam, pp.wp
    ea = N + al - 1
    eb = N + be - 1

    def f(r, y):
        u, Q = y
        du = _flux_to_du(Q / r**ea, m)
        dQ = -lam * r**eb * max(u, 0.0) ** wp
        return [du, dQ]

    return f


def _rhs_broken(N, m, al, be, p, d, gamma):
    ea = N + al - 1
    eb = N + be - 1

    def f(r, y):
        u, Q = y
        up = max(u, 0.0)
        du = _flux_to_du(Q * (d * up) ** gamma / r**ea, m)
        dQ = -(r**eb) * up**p
        return [du, dQ]

    return f


def _du_from_Q_pure(pp: PurePowerParams, r, Q):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _flux_to_du(Q / r ** (pp.N + pp.alpha - 1), pp.m)
    return np.where(r > 0, out, 0.0)


# startup series -----------------------------------------------------------------

@dataclass(frozen=True)
class _Series:
    k: float
    A: float
    B: float
    nb: float
    lam: float
    wp: float
    m: float

    @property
    def c(self):
        return self.A / self.k

    @property
    def d2(self):
        return self.A * self.B / (2 * self.k)

    def u(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 - self.c * r**self.k + self.d2 * r ** (2 * self.k)

    def du(self, r):
        r = np.asarray(r, dtype=float)
        return -self.A * r ** (self.k - 1) + self.A * self.B * r ** (2 * self.k - 1)

    def Q(self, r, ea):
        r = np.asarray(r, dtype=float)
        nb, k = self.nb, self.k
        return -self.lam * (r**nb / nb - self.wp * self.c * r ** (nb + k) / (nb + k))


def _series(pp: PurePowerParams) -> _Series:
    bal = pp.beta - pp.alpha + 1
    if not bal > 0:
        raise StartupFailure("beta - alpha + 1 <= 0: no regular start at r = 0")
    nb = pp.N + pp.beta
    if not nb > 0:
        raise StartupFailure("N + beta <= 0")
    m = pp.m
    k = (pp.beta - pp.alpha + m) / (m - 1)
    A = (pp.lam / nb) ** (1.0 / (m - 1))
    c = A / k
    B = pp.wp * c * nb / ((m - 1) * (nb + k))
    return _Series(k, A, B, nb, pp.lam, pp.wp, m)


def _startup_radius(ser: _Series, rtol: float, r_max: float) -> float:
    d = abs(ser.d2)
    r0 = (rtol / d) ** (1.0 / (2 * ser.k)) if d > 0 else 1e-2
    return float(min(r0, 1e-2, 0.01 * r_max))


# integration --------------------------------------------------------------------

def _solve(f, r_a, y0, r_b, rtol, events):
    sol = solve_ivp(
        f,
        (r_a, r_b),
        y0,
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-2,
        dense_output=True,
        events=events,
    )
    if sol.status == -1:
        raise StepFailure(sol.message)
    return sol


def _zero_event(r, y):
    return y[0]


_zero_event.terminal = True
_zero_event.direction = -1


def _dense_nodes(sol, r_a, r_b):
    t = sol.t
    t = t[(t >= r_a) & (t <= r_b)]
    if r_a > 0:
        extra = np.geomspace(r_a, r_b, _N_DENSE)
    else:
        extra = np.linspace(r_a, r_b, _N_DENSE)
    nodes = np.unique(np.concatenate((t, extra, [r_a, r_b])))
    return nodes


def integrate_pure_power(pp: PurePowerParams, r_max: float = 1e4, rtol: float = 1e-10) -> Trajectory:
    """Integrate the pure-power problem from s0 to the first zero or r_max."""
    if not r_max > pp.s0:
        raise InvalidParameters("r_max > s0")
    f = _rhs_pure(pp)
    ea = pp.N + pp.alpha - 1
    pieces_r: List[np.ndarray] = []
    pieces_u: List[np.ndarray] = []
    pieces_Q: List[np.ndarray] = []
    ser = None
    if pp.s0 == 0:
        ser = _series(pp)
        if pp.u_s0 != 1.0 or pp.du_s0 != 0.0:
            raise StartupFailure("a start at r = 0 requires u(0) = 1, u'(0) = 0")
        r0 = _startup_radius(ser, rtol, r_max)
        rs = r0 * (np.arange(_N_SERIES) / _N_SERIES) ** 2
        pieces_r.append(rs)
        pieces_u.append(ser.u(rs))
        pieces_Q.append(ser.Q(rs, ea))
        y0 = [float(ser.u(r0)), float(ser.Q(r0, ea))]
    else:
        r0 = pp.s0
        du = pp.du_s0
        y0 = [pp.u_s0, r0**ea * abs(du) ** (pp.m - 2) * du if du != 0 else 0.0]
    sol = _solve(f, r0, y0, r_max, rtol, [_zero_event])
    first_zero = None
    r_end = r_max
    if sol.t_events[0].size:
        first_zero = _polish_zero(sol, r0, float(sol.t_events[0][0]))
        r_end = first_zero
    nodes = _dense_nodes(sol, r0, r_end)
    Y = sol.sol(nodes)
    pieces_r.append(nodes)
    pieces_u.append(Y[0])
    pieces_Q.append(Y[1])
    r = np.concatenate(pieces_r)
    u = np.concatenate(pieces_u)
    Q = np.concatenate(pieces_Q)
    if first_zero is not None:
        u[-1] = 0.0
    du = _du_from_Q_pure(pp, r, Q)
    if pp.s0 > 0:
        du[0] = pp.du_s0

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        if ser is None and np.any(x < r0):
            raise OutOfDomain(f"radius below the start s0 = {r0}")
        uu = np.empty_like(x)
        QQ = np.empty_like(x)
        lo = x < r0
        if np.any(lo):
            uu[lo] = ser.u(x[lo])
            QQ[lo] = ser.Q(x[lo], ea)
        if np.any(~lo):
            Yx = sol.sol(x[~lo])
            uu[~lo] = Yx[0]
            QQ[~lo] = Yx[1]
        return uu, QQ, _du_from_Q_pure(pp, x, QQ)

    return Trajectory(r, u, du, Q, pp, first_zero, r_max, None, None, 0.0, evaluate)


def _polish_zero(sol, r_lo, z):
    """Bisection on the dense output until |u| < 1e-12."""
    u = lambda r: float(sol.sol(r)[0])
    if abs(u(z)) < ZERO_TOL:
        return z
    # bracket around the event location
    h = max(1e-9 * z, 1e-14)
    a, b = max(r_lo, z - h), min(z + h, sol.t[-1])
    while u(a) < 0 and a > r_lo:
        h *= 2
        a = max(r_lo, z - h)
    while u(b) > 0 and b < sol.t[-1]:
        h *= 2
        b = min(sol.t[-1], z + h)
    for _ in range(200):
        mid = 0.5 * (a + b)
        um = u(mid)
        if abs(um) < ZERO_TOL or b - a < 1e-15 * z:
            return mid
        if um > 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def integrate_broken(params: ProblemParams, d: float, r_max: float = 1e4, rtol: float = 1e-10) -> Trajectory:
    """Broken problem: plain equation until u = 1/d, diffusion-divided flux after.

    The second-segment flux is r^(N+alpha-1) |u'|^(m-2) u' / (d u)^gamma,
    which equals the first-segment flux at the crossing since d u(s0) = 1.
    """
    if not d > 1:
        raise InvalidParameters("d > 1")
    N, m, al, be, ga, p = params.N, params.m, params.alpha, params.beta, params.gamma, params.p
    pp1 = PurePowerParams(N, m, al, be, 1.0, p)
    ser = _series(pp1)
    ea = N + al - 1
    r0 = _startup_radius(ser, rtol, r_max)
    level = 1.0 / d

    def cross(r, y):
        return y[0] - level

    cross.terminal = True
    cross.direction = -1
    if ser.u(r0) <= level:
        raise NoCrossing("threshold reached inside the startup interval; take d further from 1")
    sol1 = _solve(_rhs_pure(pp1), r0, [float(ser.u(r0)), float(ser.Q(r0, ea))], r_max, rtol, [cross])
    if not sol1.t_events[0].size:
        raise NoCrossing(f"u stays above 1/d up to r_max = {r_max}")
    s0 = float(sol1.t_events[0][0])
    y_s0 = sol1.sol(s0)
    y_s0[0] = level
    f2 = _rhs_broken(N, m, al, be, p, d, ga)
    sol2 = _solve(f2, s0, list(y_s0), r_max, rtol, [_zero_event])
    first_zero = None
    r_end = r_max
    if sol2.t_events[0].size:
        first_zero = _polish_zero(sol2, s0, float(sol2.t_events[0][0]))
        r_end = first_zero
    rs = r0 * (np.arange(_N_SERIES) / _N_SERIES) ** 2
    n1 = _dense_nodes(sol1, r0, s0)[:-1]
    n2 = _dense_nodes(sol2, s0, r_end)
    Y1 = sol1.sol(n1)
    Y2 = sol2.sol(n2)
    r = np.concatenate((rs, n1, n2))
    u = np.concatenate((ser.u(rs), Y1[0], Y2[0]))
    Q = np.concatenate((ser.Q(rs, ea), Y1[1], Y2[1]))
    if first_zero is not None:
        u[-1] = 0.0
    seg2 = r >= s0
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(seg2, (d * np.maximum(u, 0.0)) ** ga, 1.0)
        du = _flux_to_du(Q * fac / np.where(r > 0, r, 1.0) ** ea, m)
    du[0] = 0.0

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        uu = np.empty_like(x)
        QQ = np.empty_like(x)
        a = x < r0
        b = (x >= r0) & (x < s0)
        c = x >= s0
        if np.any(a):
            uu[a] = ser.u(x[a])
            QQ[a] = ser.Q(x[a], ea)
        if np.any(b):
            Yb = sol1.sol(x[b])
            uu[b], QQ[b] = Yb[0], Yb[1]
        if np.any(c):
            Yc = sol2.sol(x[c])
            uu[c], QQ[c] = Yc[0], Yc[1]
        fx = np.where(c, (d * np.maximum(uu, 0.0)) ** ga, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dd = _flux_to_du(QQ * fx / np.where(x > 0, x, 1.0) ** ea, m)
        return uu, QQ, np.where(x > 0, dd, 0.0)

    return Trajectory(r, u, du, Q, pp1, first_zero, r_max, s0, d, ga, evaluate)


# diagnostics --------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityReport:
    min_U: float
    max_increase_U: float
    max_decrease_rrho_u: float
    sup_u: float
    window: Tuple[float, float]
    nodes: int

    def ok(self, tol: float = 1e-8) -> bool:
        return (
            self.min_U >= -tol * (1 + self.sup_u)
            and self.max_increase_U <= tol
            and self.max_decrease_rrho_u <= tol
        )


def _window(traj: Trajectory, lo: Optional[float], hi: Optional[float]) -> np.ndarray:
    mask = traj.positive_mask()
    if lo is not None:
        mask &= traj.r >= lo
    if hi is not None:
        mask &= traj.r <= hi
    return mask


def lemma21_diagnostics(
    traj: Trajectory,
    rho: Optional[float] = None,
    lo: Optional[float] = None,
    hi: Optional[float] = None,
) -> MonotonicityReport:
    """U_rho = r u' + rho u and r^rho u on the positivity window.

    The window is cut at the first zero automatically; ``lo``/``hi`` narrow
    it further (for example to one segment of a broken run).
    """
    rho = traj.rho if rho is None else rho
    mask = _window(traj, lo, hi)
    r, u, du = traj.r[mask], traj.u[mask], traj.du[mask]
    if r.size < 2:
        return MonotonicityReport(float("nan"), 0.0, 0.0, 0.0, (float("nan"),) * 2, int(r.size))
    U = r * du + rho * u
    ru = r**rho * u
    inc = float(max(np.max(np.diff(U)), 0.0))
    dec = float(max(np.max(-np.diff(ru)), 0.0))
    return MonotonicityReport(float(np.min(U)), inc, dec, float(np.max(np.abs(u))), (float(r[0]), float(r[-1])), int(r.size))


def lemma22_exponent(pp: PurePowerParams) -> Tuple[float, str]:
    """Decay exponent e of r^(N+beta) u^(wp+1) and the branch used."""
    N, m, al, be, wp = pp.N, pp.m, pp.alpha, pp.beta, pp.wp
    rho = pp.rho
    nb = N + be
    if abs(nb - rho * wp) <= 1e-12 * max(abs(nb), 1.0):
        return ((N + al - m) * (wp + 1) - (m - 1) * nb) / (m - 1), "equal"
    return (m * nb - (N + al - m) * (wp + 1)) / (wp - m + 1), "generic"


@dataclass(frozen=True)
class BoundReport:
    exponent: float
    branch: str
    sup: float
    window: Tuple[float, float]


def lemma22_bound_check(traj: Trajectory, pp: Optional[PurePowerParams] = None) -> BoundReport:
    """sup over [r_end/4, r_end] of r^(N+beta) u^(wp+1) r^e."""
    pp = pp or traj.pp
    e, branch = lemma22_exponent(pp)
    mask = traj.positive_mask()
    r_end = float(traj.r[mask][-1]) if np.any(mask) else float("nan")
    mask &= traj.r >= r_end / 4
    r, u = traj.r[mask], traj.u[mask]
    vals = r ** (pp.N + pp.beta) * u ** (pp.wp + 1) * r**e
    sup = float(np.max(vals)) if vals.size else float("nan")
    return BoundReport(e, branch, sup, (r_end / 4, r_end))


@dataclass(frozen=True)
class DecayReport:
    r: float
    tail: float
    ratio: float


def decay_check(traj: Trajectory, pp: Optional[PurePowerParams] = None) -> DecayReport:
    """Tail weight r^(N+beta) u^(wp+1) at the window end and its ratio to r/2."""
    pp = pp or traj.pp
    mask = traj.positive_mask()
    r_end = float(traj.r[mask][-1])
    # a start at s0 > 0 has no data below s0
    x = np.array([r_end, max(r_end / 2, float(traj.r[0]))])
    if traj.evaluate is not None:
        uu = np.maximum(traj.evaluate(x)[0], 0.0)
    else:
        uu = np.interp(x, traj.r, traj.u)
    tail = x ** (pp.N + pp.beta) * uu ** (pp.wp + 1)
    ratio = float(tail[0] / tail[1]) if tail[1] > 0 else float("nan")
    return DecayReport(r_end, float(tail[0]), ratio)
