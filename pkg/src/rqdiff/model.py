"""Problem parameters, coefficient families, exponents and regime classification.

All thresholds are evaluated by direct closed-form formulas. Comparisons
against thresholds are made exactly (via :class:`fractions.Fraction`) whenever
every input is a short rational, otherwise with a relative tolerance of 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Union

import numpy as np

from .errors import DegenerateDenominator, InvalidParameters, NegativeArgument

REL_TOL = 1e-12
_MAX_DEN = 10**6

Number = Union[float, Fraction]


@dataclass(frozen=True)
class ProblemParams:
    """Parameter tuple (N, m, alpha, beta, gamma, p, R)."""

    N: float
    m: float
    alpha: float
    beta: float
    gamma: float
    p: float
    R: float = 1.0

    def __post_init__(self):
        for name in ("N", "m", "alpha", "beta", "gamma", "p", "R"):
            val = getattr(self, name)
            if not math.isfinite(float(val)):
                raise InvalidParameters(f"{name} must be finite")
        if not self.m > 1:
            raise InvalidParameters("m > 1")
        if not self.R > 0:
            raise InvalidParameters("R > 0")
        if not self.p > 1:
            raise InvalidParameters("p > 1")
        if not self.gamma >= 0:
            raise InvalidParameters("gamma >= 0")

    def replace(self, **changes) -> "ProblemParams":
        d = {k: getattr(self, k) for k in ("N", "m", "alpha", "beta", "gamma", "p", "R")}
        d.update(changes)
        return ProblemParams(**d)


A_FAMILIES = ("constant", "exp-interpolant")
G_FAMILIES = ("zero", "linear", "linear-plus-saturating")


@dataclass(frozen=True)
class CoefficientSpec:
    """Closed enumeration of the coefficient families a(r) and g(u).

    ``a_family="constant"`` uses a(r) = c1 (c2 is then forced equal to c1).
    ``a_family="exp-interpolant"`` uses a(r) = c1 + (c2 - c1) exp(-r).
    ``g_family`` is one of zero, linear (g(u) = u) or linear-plus-saturating
    (g(u) = u + A (1 - exp(-u))).
    """

    a_family: str = "constant"
    g_family: str = "linear"
    c1: float = 1.0
    c2: Optional[float] = None
    A: float = 0.0

    def __post_init__(self):
        if self.a_family not in A_FAMILIES:
            raise InvalidParameters(f"unknown a family {self.a_family!r}")
        if self.g_family not in G_FAMILIES:
            raise InvalidParameters(f"unknown g family {self.g_family!r}")
        if self.c2 is None:
            object.__setattr__(self, "c2", self.c1)
        if self.a_family == "constant" and self.c2 != self.c1:
            raise InvalidParameters("constant a requires c1 == c2")
        if not (0 < self.c1 <= self.c2):
            raise InvalidParameters("0 < c1 <= c2")
        if not self.A >= 0:
            raise InvalidParameters("A >= 0")

    @classmethod
    def prototype(cls) -> "CoefficientSpec":
        """a = 1, g(u) = u."""
        return cls("constant", "linear", 1.0, 1.0)


@dataclass(frozen=True)
class ExponentSet:
    m_star_ab: float
    m_star_abg: float
    upsilon: float
    upsilon1: float
    upsilon2: float
    rho: float
    sigma_star: float
    serrin: float

    @property
    def critical_p(self) -> float:
        return self.m_star_abg - 1.0

    def as_dict(self) -> Dict[str, float]:
        return {
            "m_star_ab": self.m_star_ab,
            "m_star_abg": self.m_star_abg,
            "upsilon": self.upsilon,
            "upsilon1": self.upsilon1,
            "upsilon2": self.upsilon2,
            "rho": self.rho,
            "sigma_star": self.sigma_star,
            "serrin": self.serrin,
            "critical_p": self.critical_p,
        }


@dataclass(frozen=True)
class HypothesisReport:
    flags: Dict[str, bool]

    def __getitem__(self, key: str) -> bool:
        return self.flags[key]

    def all(self, *names: str) -> bool:
        return all(self.flags[n] for n in names)


VERDICTS = (
    "ExistencePredicted",
    "NonexistenceSupercriticalCaseI",
    "NonexistenceSupercriticalCaseII",
    "NonexistenceTheorem13",
    "Indeterminate",
)
NONEXISTENCE_VERDICTS = VERDICTS[1:4]


@dataclass(frozen=True)
class RegimeClassification:
    verdict: str
    checks: Dict[str, bool] = field(default_factory=dict)
    critical_p: float = float("nan")

    @property
    def violated_or_satisfied(self) -> List[str]:
        return [f"{k}={'true' if v else 'false'}" for k, v in self.checks.items()]


# exponents ------------------------------------------------------------------

def _div(num: float, den: float, what: str) -> float:
    if den == 0 or abs(den) < 1e-300:
        raise DegenerateDenominator(f"vanishing denominator in {what}")
    return num / den


def m_star_abg_reduction(params: ProblemParams) -> float:
    """Second, independent formula: m*_ab - gamma (m*_ab - 1) / (m - 1)."""
    N, m, al, be, ga = params.N, params.m, params.alpha, params.beta, params.gamma
    msab = _div(m * (N + be), N + al - m, "m_star_ab")
    return msab - ga * (msab - 1.0) / (m - 1.0)


def compute_exponents(params: ProblemParams) -> ExponentSet:
    N, m, al, be, ga = params.N, params.m, params.alpha, params.beta, params.gamma
    D = m * (N + be + 1) - N - al
    E = al - be + m * (N + be - 1)
    nam = N + al - m
    if nam == 0:
        raise DegenerateDenominator("N + alpha - m = 0")
    if D == 0:
        raise DegenerateDenominator("m(N+beta+1) - N - alpha = 0")
    m_star_ab = m * (N + be) / nam
    m_star_abg = (m * (m - 1) * (N + be) - ga * D) / ((m - 1) * nam)
    upsilon = m * (m - 1) * (be - al + m) / D
    u1_den = D * (m * (N + al - 1) - m + 1)
    upsilon1 = _div(m * (m - 1) * E * (N + al - 1), u1_den, "upsilon1")
    u2_den = (nam + (m - 1) ** 2) * D
    upsilon2 = _div(m * (m - 1) ** 2 * E, u2_den, "upsilon2")
    rho = nam / (m - 1)
    s_den = (m - 1) * (m * E - ga * D)
    sigma_star = _div(m * (m - 1) ** 2 * E - ga * (nam + (m - 1) ** 2) * D, s_den, "sigma_star")
    serrin = m * (N - 1) / (N - m) if N != m else float("nan")
    return ExponentSet(
        m_star_ab=m_star_ab,
        m_star_abg=m_star_abg,
        upsilon=upsilon,
        upsilon1=upsilon1,
        upsilon2=upsilon2,
        rho=rho,
        sigma_star=sigma_star,
        serrin=serrin,
    )


# exact / tolerant comparison -------------------------------------------------

def _rational(x: float) -> Optional[Fraction]:
    x = float(x)
    if not math.isfinite(x):
        return None
    f = Fraction(x).limit_denominator(_MAX_DEN)
    if abs(float(f) - x) <= REL_TOL * max(1.0, abs(x)):
        return f
    return None


@dataclass(frozen=True)
class _Vals:
    """Inputs in exact rational form when possible, else floats."""

    N: Number
    m: Number
    alpha: Number
    beta: Number
    gamma: Number
    p: Number
    exact: bool


def _vals(params: ProblemParams) -> _Vals:
    names = ("N", "m", "alpha", "beta", "gamma", "p")
    rs = [_rational(getattr(params, n)) for n in names]
    if all(r is not None for r in rs):
        return _Vals(*rs, exact=True)
    return _Vals(*[float(getattr(params, n)) for n in names], exact=False)


def _cmp(a: Number, b: Number, exact: bool) -> int:
    """Sign of a - b, with ties inside the relative tolerance in float mode."""
    if exact:
        d = a - b
        return (d > 0) - (d < 0)
    a, b = float(a), float(b)
    if abs(a - b) <= REL_TOL * max(abs(a), abs(b), 1.0):
        return 0
    return 1 if a > b else -1


def _lt(a, b, ex):
    return _cmp(a, b, ex) < 0


def _le(a, b, ex):
    return _cmp(a, b, ex) <= 0


def _gt(a, b, ex):
    return _cmp(a, b, ex) > 0


def _ge(a, b, ex):
    return _cmp(a, b, ex) >= 0


def _thresholds(v: _Vals):
    """Exact-or-float versions of the thresholds used by the classifier."""
    N, m, al, be, ga = v.N, v.m, v.alpha, v.beta, v.gamma
    D = m * (N + be + 1) - N - al
    E = al - be + m * (N + be - 1)
    nam = N + al - m
    out = {}
    out["m_star_ab"] = m * (N + be) / nam if nam != 0 else None
    out["m_star_abg"] = (m * (m - 1) * (N + be) - ga * D) / ((m - 1) * nam) if nam != 0 else None
    out["upsilon"] = m * (m - 1) * (be - al + m) / D if D != 0 else None
    den1 = D * (m * (N + al - 1) - m + 1)
    out["upsilon1"] = m * (m - 1) * E * (N + al - 1) / den1 if den1 != 0 else None
    return out


def _h0(v: _Vals) -> bool:
    return _gt(v.m, 1, v.exact) and _gt(v.N + v.alpha - v.m, 0, v.exact) and _gt(
        v.beta - v.alpha + 1, 0, v.exact
    )


def check_hypotheses(params: ProblemParams, coeffs: Optional[CoefficientSpec] = None) -> HypothesisReport:
    """Boolean report for (H0)-(H3), (H1)', (H2)', (H3)' and the cases (i)/(ii)."""
    coeffs = coeffs or CoefficientSpec.prototype()
    v = _vals(params)
    ex = v.exact
    th = _thresholds(v)
    h0 = _h0(v)
    m, p, ga = v.m, v.p, v.gamma

    def _safe(name):
        return th[name]

    msabg, msab, ups, ups1 = _safe("m_star_abg"), _safe("m_star_ab"), _safe("upsilon"), _safe("upsilon1")
    h1 = (
        h0
        and msabg is not None
        and ups is not None
        and _lt(m - 1, p, ex)
        and _lt(p, msabg - 1, ex)
        and _gt(ga, 0, ex)
        and _lt(ga, ups, ex)
    )
    h1p = h0 and msab is not None and _lt(m - 1, p, ex) and _lt(p, msab - 1, ex)
    h2 = coeffs.g_family in ("linear", "linear-plus-saturating")
    h3 = coeffs.a_family in A_FAMILIES and coeffs.c1 > 0
    # Both g families with closed form are C^1 and nondecreasing; zero is too.
    h2p = coeffs.g_family in G_FAMILIES
    h3p = coeffs.a_family in A_FAMILIES
    lhs = v.m * (v.N + v.alpha - 1)
    bam = v.beta - v.alpha + v.m
    case_i = h0 and ups is not None and _lt(ga, ups, ex) and _ge(lhs, bam, ex)
    case_ii = h0 and ups1 is not None and _lt(ga, ups1, ex) and _lt(lhs, bam, ex)
    return HypothesisReport(
        {
            "H0": bool(h0),
            "H1": bool(h1),
            "H1'": bool(h1p),
            "H2": bool(h2),
            "H3": bool(h3),
            "H2'": bool(h2p),
            "H3'": bool(h3p),
            "i": bool(case_i),
            "ii": bool(case_ii),
        }
    )


def classify_regime(params: ProblemParams) -> RegimeClassification:
    """Predicted regime for the prototype-type problem.

    The existence verdict uses 0 <= gamma < Upsilon; gamma = 0 is the
    no-diffusion limit, where existence in the subcritical range is classical.
    """
    v = _vals(params)
    ex = v.exact
    th = _thresholds(v)
    h0 = _h0(v)
    m, p, ga = v.m, v.p, v.gamma
    msabg, ups, ups1 = th["m_star_abg"], th["upsilon"], th["upsilon1"]
    lhs = v.m * (v.N + v.alpha - 1)
    bam = v.beta - v.alpha + v.m
    crit = None if msabg is None else msabg - 1

    checks: Dict[str, bool] = {"H0": bool(h0)}
    sub = crit is not None and _lt(m - 1, p, ex) and _lt(p, crit, ex)
    gam_ok = ups is not None and _ge(ga, 0, ex) and _lt(ga, ups, ex)
    checks["H1"] = bool(h0 and sub and gam_ok and _gt(ga, 0, ex))
    msab = th["m_star_ab"]
    checks["H1'"] = bool(h0 and msab is not None and _lt(m - 1, p, ex) and _lt(p, msab - 1, ex))
    case_i = bool(h0 and gam_ok and _ge(lhs, bam, ex))
    case_ii = bool(h0 and ups1 is not None and _lt(ga, ups1, ex) and _lt(lhs, bam, ex))
    checks["i"] = case_i
    checks["ii"] = case_ii
    t13 = _le(bam, 0, ex)
    checks["beta-alpha+m<=0"] = bool(t13)
    checks["N+beta>0"] = bool(_gt(v.N + v.beta, 0, ex))

    supercrit = crit is not None and _ge(p, crit, ex)
    if h0 and sub and gam_ok:
        verdict = "ExistencePredicted"
    elif _gt(ga, 0, ex) and checks["N+beta>0"] and t13:
        verdict = "NonexistenceTheorem13"
    elif h0 and supercrit and case_i:
        verdict = "NonexistenceSupercriticalCaseI"
    elif h0 and supercrit and case_ii:
        verdict = "NonexistenceSupercriticalCaseII"
    else:
        verdict = "Indeterminate"
    return RegimeClassification(verdict, checks, float(crit) if crit is not None else float("nan"))


# coefficient evaluation ------------------------------------------------------

def eval_a(coeffs: CoefficientSpec, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise NegativeArgument("r < 0")
    if coeffs.a_family == "constant":
        out = np.full_like(r_arr, coeffs.c1)
    else:
        out = coeffs.c1 + (coeffs.c2 - coeffs.c1) * np.exp(-r_arr)
    return float(out) if out.ndim == 0 else out


def eval_da(coeffs: CoefficientSpec, r):
    """a'(r)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise NegativeArgument("r < 0")
    if coeffs.a_family == "constant":
        out = np.zeros_like(r_arr)
    else:
        out = -(coeffs.c2 - coeffs.c1) * np.exp(-r_arr)
    return float(out) if out.ndim == 0 else out


def _g(coeffs: CoefficientSpec, u):
    if coeffs.g_family == "zero":
        return np.zeros_like(u)
    if coeffs.g_family == "linear":
        return u.copy()
    return u - coeffs.A * np.expm1(-u)


def eval_g(coeffs: CoefficientSpec, u):
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise NegativeArgument("u < 0")
    out = _g(coeffs, u_arr)
    return float(out) if out.ndim == 0 else out


def eval_dg(coeffs: CoefficientSpec, u):
    """g'(u); g'(0) = 1 + A for the saturating family."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise NegativeArgument("u < 0")
    if coeffs.g_family == "zero":
        out = np.zeros_like(u_arr)
    elif coeffs.g_family == "linear":
        out = np.ones_like(u_arr)
    else:
        out = 1.0 + coeffs.A * np.exp(-u_arr)
    return float(out) if out.ndim == 0 else out


def eval_g_truncated(coeffs: CoefficientSpec, k: float, u):
    """g_k(u) = g(min(u, k)); k = inf gives g."""
    if not k > 0:
        raise InvalidParameters("k > 0")
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise NegativeArgument("u < 0")
    out = _g(coeffs, np.minimum(u_arr, k))
    return float(out) if out.ndim == 0 else out
