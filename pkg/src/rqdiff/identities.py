"""Integral identities evaluated on computed profiles.

Two identities are checked:

* the variational identity for the pure-power IVP, relating
  lambda ((N+beta)/(wp+1) - (N+alpha-m)/m) int s^(N+beta-1) u^(wp+1)
  to boundary terms built from the flux and U_rho;
* the Pohozaev-type identity for the Dirichlet problem with multiplier
  exponent sigma in (-(N+alpha-m), m-1].

Each residual is |lhs - rhs| / max(scale, 1e-300), where scale is the sum of
the absolute values of all terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .errors import NonDifferentiableFamily, PositivityViolated, SigmaOutOfRange
from .grid import RadialGrid, RadialProfile, cumulative_weighted_integral
from .ivp import PurePowerParams, Trajectory
from .model import (
    CoefficientSpec,
    ProblemParams,
    compute_exponents,
    eval_a,
    eval_da,
    eval_dg,
    eval_g,
)

EPS = 1e-300

_DIFFERENTIABLE_A = ("constant", "exp-interpolant")
_DIFFERENTIABLE_G = ("zero", "linear", "linear-plus-saturating")


@dataclass
class ResidualReport:
    lhs: float
    rhs: float
    scale: float
    relative_residual: float
    terms: Dict[str, float] = field(default_factory=dict)
    lhs_terms: tuple = ()
    rhs_terms: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "scale": self.scale,
            "relative_residual": self.relative_residual,
            "terms": dict(self.terms),
        }


def _report(terms: Dict[str, float], lhs_names, rhs_names) -> ResidualReport:
    lhs = math.fsum(terms[k] for k in lhs_names)
    rhs = math.fsum(terms[k] for k in rhs_names)
    scale = math.fsum(abs(v) for v in terms.values())
    rel = abs(lhs - rhs) / max(scale, EPS)
    return ResidualReport(lhs, rhs, scale, rel, terms, tuple(lhs_names), tuple(rhs_names))


def _integral(r: np.ndarray, f: np.ndarray, nu: float, corrected: bool = True) -> float:
    prof = RadialProfile(RadialGrid.from_nodes(r), f)
    return float(cumulative_weighted_integral(prof, nu, corrected=corrected).values[-1])


# variational identity for the pure-power IVP -----------------------------------

def lemma22_identity_residual(
    traj: Trajectory,
    pp: Optional[PurePowerParams] = None,
    r: float = 1.0,
    n: int = 4096,
    corrected: bool = True,
) -> ResidualReport:
    """Both sides of the variational identity on [s0, r].

    The trajectory is resampled from its dense output on a graded grid of
    ``n`` cells, so the quadrature error is controlled by ``n`` alone.
    """
    pp = pp or traj.pp
    N, m, al, be, lam, wp = pp.N, pp.m, pp.alpha, pp.beta, pp.lam, pp.wp
    s0 = pp.s0
    rho = pp.rho
    if traj.first_zero is not None and r >= traj.first_zero:
        raise PositivityViolated(f"u vanishes at {traj.first_zero} <= r = {r}")
    if r < s0:
        raise PositivityViolated("r < s0")
    names_l = ("lhs_integral",)
    names_r = ("boundary_r", "boundary_s0", "power_term")
    if r == s0:
        return _report({k: 0.0 for k in names_l + names_r}, names_l, names_r)
    x = s0 + (r - s0) * (np.arange(n + 1) / n) ** 2
    x[-1] = r
    u, Q, du = traj.evaluate(x)
    if np.any(u <= 0):
        raise PositivityViolated("u <= 0 on [s0, r]")
    coef = lam * ((N + be) / (wp + 1) - (N + al - m) / m)
    nu = N + be - 1
    if s0 == 0:
        J = _integral(x, u ** (wp + 1), nu, corrected)
    else:
        J = _integral(x, x**nu * u ** (wp + 1), 0.0, corrected)
    U_r = r * du[-1] + rho * u[-1]
    U_s = s0 * du[0] + rho * u[0]
    terms = {
        "lhs_integral": coef * J,
        "boundary_r": -(m - 1) / m * abs(Q[-1]) * U_r,
        "boundary_s0": (m - 1) / m * abs(Q[0]) * U_s,
        "power_term": lam / (wp + 1) * (r ** (N + be) * u[-1] ** (wp + 1) - s0 ** (N + be) * u[0] ** (wp + 1)),
    }
    return _report(terms, names_l, names_r)


# Pohozaev-type identity ----------------------------------------------------------

def check_sigma(params: ProblemParams, sigma: float):
    lo = -(params.N + params.alpha - params.m)
    hi = params.m - 1
    if not (lo < sigma <= hi * (1 + 1e-15)):
        raise SigmaOutOfRange(f"sigma={sigma} outside ({lo}, {hi}]")


def _check_families(coeffs: CoefficientSpec):
    if coeffs.a_family not in _DIFFERENTIABLE_A or coeffs.g_family not in _DIFFERENTIABLE_G:
        raise NonDifferentiableFamily(f"{coeffs.a_family}/{coeffs.g_family}")


def pohozaev_coefficients(params: ProblemParams, sigma: float):
    """(c1, K) with K = (N+beta+1+sigma-m)/(p+1); c2 = K (m-1-sigma)."""
    N, m, al, be, p = params.N, params.m, params.alpha, params.beta, params.p
    K = (N + be + 1 + sigma - m) / (p + 1)
    c1 = sigma - m + 2 - (N + al - m + 1 + sigma) / m + K
    return c1, K


def _pohozaev_integrals(params: ProblemParams, coeffs: CoefficientSpec, v: RadialProfile, sigma: float):
    N, m, al, ga = params.N, params.m, params.alpha, params.gamma
    r = v.r
    vv = np.maximum(v.values, 0.0)
    dv = v.derivative
    if dv is None:
        dv = np.gradient(vv, r, edge_order=2)
    adv = np.abs(dv)
    A = eval_a(coeffs, r) + eval_g(coeffs, vv)
    e0 = N + al - m + sigma
    I1 = _integral(r, adv**m / A**ga, e0)
    Ia = _integral(r, adv**m * eval_da(coeffs, r) / A ** (ga + 1), e0 + 1)
    Ig = _integral(r, adv**m * dv * eval_dg(coeffs, vv) / A ** (ga + 1), e0 + 1)
    # |v'|^(m-2) v' v; written as -|v'|^(m-1) v for the decreasing profile
    with np.errstate(invalid="ignore"):
        cross = np.where(adv > 0, adv ** (m - 2) * dv, 0.0) * vv / A**ga
    Ic = _integral(r, cross, e0 - 1) if e0 - 1 > -1 else float("nan")
    I2 = _integral(r, adv ** (m - 1) * vv / A**ga, e0 - 1) if e0 - 1 > -1 else float("nan")
    return I1, Ia, Ig, Ic, I2, adv[-1]


def pohozaev_residual(
    params: ProblemParams,
    coeffs: CoefficientSpec,
    v: RadialProfile,
    sigma: float,
) -> ResidualReport:
    check_sigma(params, sigma)
    _check_families(coeffs)
    N, m, al, ga = params.N, params.m, params.alpha, params.gamma
    R = float(v.r[-1])
    c1, K = pohozaev_coefficients(params, sigma)
    I1, Ia, Ig, Ic, _, dvR = _pohozaev_integrals(params, coeffs, v, sigma)
    g0 = eval_g(coeffs, 0.0)
    aR = eval_a(coeffs, R)
    cross_coef = -K * (sigma - m + 1)
    terms = {
        "lhs_energy": c1 * I1,
        "boundary": (m - 1) / m * R ** (N + al - m + 1 + sigma) * dvR**m / (aR + g0) ** ga,
        "a_prime_term": -ga / m * Ia,
        "g_prime_term": -ga / m * Ig,
        "cross_term": 0.0 if sigma == m - 1 else cross_coef * Ic,
    }
    return _report(terms, ("lhs_energy",), ("boundary", "a_prime_term", "g_prime_term", "cross_term"))


@dataclass(frozen=True)
class SignReport:
    sigma: float
    c1: float
    c2: float
    I1: float
    I2: float
    printed_form: float
    identity_form: float
    printed_form_positive: bool
    identity_form_positive: bool
    contradiction: bool

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


def c1_root_p(params: ProblemParams, sigma: float) -> float:
    """p at which c1 changes sign: p + 1 = m(N+beta-m+1+sigma)/(N+alpha-m+(m-1)(m-1-sigma))."""
    N, m, al, be = params.N, params.m, params.alpha, params.beta
    return m * (N + be - m + 1 + sigma) / (N + al - m + (m - 1) * (m - 1 - sigma)) - 1


def pohozaev_sign_certificate(
    params: ProblemParams,
    coeffs: CoefficientSpec,
    v: RadialProfile,
    sigma: Optional[float] = None,
) -> SignReport:
    """Coefficients c1, c2 and the two weighted integrals of the sign argument.

    ``printed_form`` is c1 I1 - c2 I2. For a decreasing solution the identity
    itself gives c1 I1 + c2 I2 = (nonnegative boundary and monotonicity
    terms), reported as ``identity_form``. Only the latter follows from the
    identity; with c1 < 0 it yields a contradiction only when c2 I2 = 0,
    which is the case sigma = m - 1.
    """
    if sigma is None:
        sigma = compute_exponents(params).sigma_star
    check_sigma(params, sigma)
    _check_families(coeffs)
    c1, K = pohozaev_coefficients(params, sigma)
    m = params.m
    c2 = K * (m - 1 - sigma)
    I1, _, _, _, I2, _ = _pohozaev_integrals(params, coeffs, v, sigma)
    printed = c1 * I1 - c2 * I2
    ident = c1 * I1 + c2 * I2
    contradiction = c1 < 0 and c2 * I2 <= 0
    return SignReport(
        sigma, c1, c2, I1, I2, printed, ident, bool(printed > 0), bool(ident > 0), bool(contradiction)
    )
