"""Acceptance suite: one printed PASS/FAIL line per criterion.

Tolerances and runtime budgets are pinned as module constants. Two literal
clauses are known to be false for the mathematics and are marked
``xfail(strict=True)``: they run in full and print FAIL, and the suite stays
green only while they keep failing. The analysis is in the decisions ledger.
"""

import math
import os
import time

import numpy as np
import pytest

from rqdiff import cli
from rqdiff.bvp import default_grid, picard_solve
from rqdiff.identities import lemma22_identity_residual, pohozaev_residual
from rqdiff.ivp import (
    PurePowerParams,
    decay_check,
    integrate_broken,
    integrate_pure_power,
    lemma21_diagnostics,
)
from rqdiff.model import (
    CoefficientSpec,
    ProblemParams,
    check_hypotheses,
    compute_exponents,
    m_star_abg_reduction,
)
from rqdiff.transforms import (
    blowup_rescale,
    broken_exponents,
    broken_restart,
    diffusion_to_plain,
    plain_to_diffusion,
)
from rqdiff.grid import sup_norm

SEED = 20261018
PROTO = CoefficientSpec.prototype()

# criterion 1
C1_SAMPLES = 10_000
C1_REL = 1e-12
C1_BUDGET = 1.0
# criterion 2
C2_SIN_ERR = 1e-8
C2_SIN_ZERO = 1e-8
C2_TALENTI_ERR = 1e-6
C2_SUBST = 1e-8
C2_BUDGET = 5.0
# criteria 3 and 4
C3_PURE = 20
C3_BROKEN = 10
C3_RMAX = 1e4
C3_BUDGET = 60.0
C4_TOL = 1e-8
# criterion 5
C5_RES = 1e-6
C5_CHANGE = 1e-4
C5_BUDGET = 120.0
# criterion 6
C6_LEMMA = 1e-6
C6_POHOZAEV = 1e-4
C6_SHRINK = 3.5  # residual ratio per grid doubling; 2nd order gives 4
C6_COARSE = (128, 256)
C6_BUDGET = 60.0
# criteria 7 and 8
C7_MARGIN = 0.05
C8_GRID_N = 512
C8_BUDGET = 15 * 60.0
# criterion 9
C9_ROUND = 1e-12
C9_BOOK = 1e-14
C9_RES = 1e-4
C9_SLACK = 1.1
C9_BUDGET = 30.0


def proto(gamma, p, R=1.0):
    return ProblemParams(4, 2, 0, 0, gamma, p, R)


# 1 -----------------------------------------------------------------------------

def test_c1_exponent_identities(record):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = 0.0
    bad_ups = bad_ups1 = bad_sigma = 0
    n_cases = 0
    for _ in range(C1_SAMPLES):
        N = float(rng.integers(2, 11))
        m = rng.uniform(1.1, 5.0)
        alpha = rng.uniform(m - N + 0.05, m - N + 6.0)
        beta = rng.uniform(alpha - 0.95, alpha + 6.0)
        D = m * (N + beta + 1) - N - alpha
        ups = m * (m - 1) * (beta - alpha + m) / D
        gamma = rng.uniform(0.0, ups)
        P = ProblemParams(N, m, alpha, beta, gamma, 2.0)
        ex = compute_exponents(P)
        red = m_star_abg_reduction(P)
        worst = max(worst, abs(ex.m_star_abg - red) / max(1.0, abs(red)))
        bad_ups += not ex.upsilon < m - 1
        lhs, bam = m * (N + alpha - 1), beta - alpha + m
        if lhs < bam:
            bad_ups1 += not ex.upsilon1 < ex.upsilon
        case_i = gamma < ex.upsilon and lhs >= bam
        case_ii = gamma < ex.upsilon1 and lhs < bam
        if case_i or case_ii:
            n_cases += 1
            bad_sigma += not (-(N + alpha - m) < ex.sigma_star <= (m - 1) * (1 + 1e-15))
    elapsed = time.perf_counter() - t0
    ok = worst <= C1_REL and bad_ups == bad_ups1 == bad_sigma == 0 and elapsed < C1_BUDGET
    record(
        "1 exponent identities",
        ok,
        f"dual-formula rel {worst:.1e}, Upsilon fails {bad_ups}, Upsilon1 fails {bad_ups1}, "
        f"sigma* fails {bad_sigma}/{n_cases}, {elapsed:.2f}s",
    )
    assert ok


# 2 -----------------------------------------------------------------------------

def _central(f, r, h):
    return (-f(r + 2 * h) + 8 * f(r + h) - 8 * f(r - h) + f(r - 2 * h)) / (12 * h)


def _oracle_substitution():
    """Residuals of the two closed forms in their equations, from analytic fluxes."""
    r = np.linspace(0.5, 50.0, 400)
    # sin: flux r^2 u' = r cos r - sin r; equation -(flux)' = r^2 u
    sin_flux = lambda x: x * np.cos(x) - np.sin(x)
    res_sin = np.max(np.abs(-_central(sin_flux, r, 1e-3) - r * np.sin(r)) / (1 + np.abs(r * np.sin(r))))
    # Talenti: u = (1 + r^2/8)^-1, flux r^3 u' = -(r^4/4) u^2; equation -(flux)' = r^3 u^3
    u = lambda x: 1.0 / (1.0 + x**2 / 8)
    tal_flux = lambda x: -(x**4 / 4) * u(x) ** 2
    rhs = r**3 * u(r) ** 3
    res_tal = np.max(np.abs(-_central(tal_flux, r, 1e-3) - rhs) / (1 + rhs))
    return res_sin, res_tal


def test_c2_closed_form_oracles(record):
    t0 = time.perf_counter()
    sub_sin, sub_tal = _oracle_substitution()
    sin = integrate_pure_power(PurePowerParams(3, 2, 0, 0, 1.0, 1.0), r_max=10.0, rtol=1e-10)
    x = np.linspace(0.0, math.pi, 2001)
    sin_err = float(np.max(np.abs(sin.evaluate(x)[0] - np.sinc(x / math.pi))))
    node = sin.r <= math.pi
    sin_err = max(sin_err, float(np.max(np.abs(sin.u[node] - np.sinc(sin.r[node] / math.pi)))))
    zero_err = abs(sin.first_zero - math.pi)
    tal = integrate_pure_power(PurePowerParams(4, 2, 0, 0, 1.0, 3.0), r_max=1e3, rtol=1e-10)
    tal_err = float(np.max(np.abs(tal.u - 1.0 / (1.0 + tal.r**2 / 8))))
    elapsed = time.perf_counter() - t0
    ok = (
        sub_sin < C2_SUBST
        and sub_tal < C2_SUBST
        and sin_err < C2_SIN_ERR
        and zero_err < C2_SIN_ZERO
        and tal.first_zero is None
        and tal_err < C2_TALENTI_ERR
        and elapsed < C2_BUDGET
    )
    record(
        "2 closed-form IVP oracles",
        ok,
        f"substitution {sub_sin:.1e}/{sub_tal:.1e}, sin err {sin_err:.1e}, zero err {zero_err:.1e}, "
        f"Talenti err {tal_err:.1e}, {elapsed:.2f}s",
    )
    assert ok


# 3 and 4 -------------------------------------------------------------------------

def _random_base(rng):
    N = int(rng.integers(3, 6))
    m = rng.uniform(1.5, 2.4)
    alpha = rng.uniform(-0.5, 0.5)
    beta = alpha + rng.uniform(-0.5, 1.0)
    return N, m, alpha, beta


@pytest.fixture(scope="module")
def liouville_runs():
    rng = np.random.default_rng(SEED + 3)
    t0 = time.perf_counter()
    pure = []
    while len(pure) < C3_PURE:
        N, m, alpha, beta = _random_base(rng)
        m_ab = m * (N + beta) / (N + alpha - m)
        wp = (m - 1) + rng.uniform(0.1, 0.9) * (m_ab - m)
        # (H0) and (H1)': m - 1 < wp < m*_{alpha,beta} - 1
        assert N + alpha - m > 0 and beta - alpha + 1 > 0 and m - 1 < wp < m_ab - 1
        pp = PurePowerParams(N, m, alpha, beta, rng.uniform(0.5, 2.0), wp)
        pure.append((pp, integrate_pure_power(pp, C3_RMAX)))
    broken = []
    while len(broken) < C3_BROKEN:
        N, m, alpha, beta = _random_base(rng)
        base = ProblemParams(N, m, alpha, beta, 0.0, 2.0)
        gamma = rng.uniform(0.1, 0.9) * compute_exponents(base).upsilon
        crit = compute_exponents(base.replace(gamma=gamma)).critical_p
        lo = max(m - 1, 1.0)
        if crit <= lo + 0.05:
            continue
        params = base.replace(gamma=gamma, p=lo + rng.uniform(0.1, 0.9) * (crit - lo))
        assert check_hypotheses(params)["H1"]
        d = (1.5, 2.0, 4.0)[len(broken) % 3]
        traj = integrate_broken(params, d, C3_RMAX)
        seg2 = integrate_pure_power(broken_restart(traj, params), C3_RMAX)
        broken.append((params, d, traj, seg2))
    return pure, broken, time.perf_counter() - t0


def test_c3_liouville_falsification(record, liouville_runs):
    pure, broken, elapsed = liouville_runs
    pure_exits = [t.first_zero for _, t in pure if t.first_zero is not None and t.first_zero < C3_RMAX]
    broken_exits = [t.first_zero for _, _, t, _ in broken if t.first_zero is not None and t.first_zero < C3_RMAX]
    ds = sorted({d for _, d, _, _ in broken})
    ok = len(pure_exits) == C3_PURE and len(broken_exits) == C3_BROKEN and ds == [1.5, 2.0, 4.0]
    ok = ok and elapsed < C3_BUDGET
    record(
        "3 Liouville falsification",
        ok,
        f"{len(pure_exits)}/{C3_PURE} pure-power and {len(broken_exits)}/{C3_BROKEN} broken runs exit positivity, "
        f"largest zero {max(pure_exits + broken_exits):.3g}, {elapsed:.2f}s",
    )
    assert ok


def _windows(liouville_runs):
    """(label, trajectory, lo, hi) for every positivity window of the criterion-3 runs.

    A broken run has two windows: segment one of u, which solves the plain
    equation, and the pure-power restart of v = (d u)^(1-gamma/(m-1)) from s0.
    """
    pure, broken, _ = liouville_runs
    out = [("pure", t, None, None) for _, t in pure]
    for _, _, traj, seg2 in broken:
        out.append(("broken-seg1", traj, None, traj.s0))
        out.append(("broken-seg2", seg2, None, None))
    return out


def test_c4_monotonicity_valid_clauses(record, liouville_runs):
    """U_rho nonincreasing and tail ratio below one on every window; the full
    lemma (including the sign clauses) on the global Talenti trajectory."""
    worst_inc = 0.0
    worst_ratio = 0.0
    for label, traj, lo, hi in _windows(liouville_runs):
        rep = lemma21_diagnostics(traj, lo=lo, hi=hi)
        worst_inc = max(worst_inc, rep.max_increase_U)
        if label != "broken-seg1":
            worst_ratio = max(worst_ratio, decay_check(traj).ratio)
    tal = integrate_pure_power(PurePowerParams(4, 2, 0, 0, 1.0, 3.0), r_max=1e3)
    trep = lemma21_diagnostics(tal)
    tratio = decay_check(tal).ratio
    ok = worst_inc <= C4_TOL and worst_ratio < 1 and trep.ok(C4_TOL) and tratio < 1
    record(
        "4a U_rho nonincreasing, tail decay",
        ok,
        f"max U_rho increase {worst_inc:.1e}, max tail ratio {worst_ratio:.1e}, "
        f"Talenti min U {trep.min_U:.1e} r^rho u decrease {trep.max_decrease_rrho_u:.1e}",
    )
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="U_rho >= 0 and r^rho u nondecreasing hold only for solutions positive on all of "
    "(0, inf); criterion-3 trajectories cross zero by construction (see ledger)",
)
def test_c4_literal_sign_clauses(record, liouville_runs):
    fails = 0
    worst_min = 0.0
    worst_dec = 0.0
    windows = _windows(liouville_runs)
    for _, traj, lo, hi in windows:
        rep = lemma21_diagnostics(traj, lo=lo, hi=hi)
        bad = rep.min_U < -C4_TOL * (1 + rep.sup_u) or rep.max_decrease_rrho_u > C4_TOL
        fails += bad
        worst_min = min(worst_min, rep.min_U)
        worst_dec = max(worst_dec, rep.max_decrease_rrho_u)
    ok = fails == 0
    record(
        "4b literal U_rho >= 0 and r^rho u nondecreasing",
        ok,
        f"{fails}/{len(windows)} windows violate, min U_rho {worst_min:.3g}, "
        f"max r^rho u decrease {worst_dec:.3g}; expected failure",
    )
    assert ok


# 5 -------------------------------------------------------------------------------

C5_GAMMAS = (0.0, 0.2, 0.4)
C5_FRACTIONS = (0.6, 0.8, 0.95)


@pytest.fixture(scope="module")
def bvp_cells():
    cells = []
    t0 = time.perf_counter()
    for gamma in C5_GAMMAS:
        crit = compute_exponents(proto(gamma, 2.0)).critical_p
        for frac in C5_FRACTIONS:
            params = proto(gamma, frac * crit)
            coarse = picard_solve(params, PROTO, None, default_grid(params, 2048))
            fine = picard_solve(params, PROTO, None, default_grid(params, 4096))
            cells.append((params, coarse, fine))
    return cells, time.perf_counter() - t0


def test_c5_bvp_existence(record, bvp_cells):
    cells, elapsed = bvp_cells
    failures = []
    worst_res = worst_change = 0.0
    for params, coarse, fine in cells:
        tag = f"(gamma={params.gamma}, p={params.p:.4g})"
        if coarse.status != "Converged" or fine.status != "Converged":
            failures.append(f"{tag} {coarse.status}/{fine.status}")
            continue
        v = coarse.solution.values
        shape_ok = v[-1] == 0.0 and np.all(v[:-1] > 0) and np.all(np.diff(v) < 0)
        change = float(np.max(np.abs(np.interp(coarse.solution.r, fine.solution.r, fine.solution.values) - v)))
        worst_res = max(worst_res, coarse.ode_residual)
        worst_change = max(worst_change, change)
        if not shape_ok or coarse.ode_residual >= C5_RES or change >= C5_CHANGE:
            failures.append(tag)
    ok = not failures and elapsed < C5_BUDGET
    record(
        "5 BVP existence",
        ok,
        f"{len(cells) - len(failures)}/{len(cells)} cells pass, max ode_residual {worst_res:.1e}, "
        f"max change n->4096 {worst_change:.1e}, {elapsed:.1f}s {failures}",
    )
    assert ok


# 6 -------------------------------------------------------------------------------

def test_c6_identity_residuals(record, bvp_cells):
    cells, _ = bvp_cells
    t0 = time.perf_counter()
    sin = integrate_pure_power(PurePowerParams(3, 2, 0, 0, 1.0, 1.0), r_max=10.0)
    tal = integrate_pure_power(PurePowerParams(4, 2, 0, 0, 1.0, 3.0), r_max=100.0)
    lem = max(lemma22_identity_residual(sin, r=2.0).relative_residual,
              lemma22_identity_residual(tal, r=10.0).relative_residual)
    worst = 0.0
    worst_shrink = math.inf
    for params, coarse, _ in cells:
        sigmas = (compute_exponents(params).sigma_star, params.m - 1)
        for sigma in sigmas:
            worst = max(worst, pohozaev_residual(params, PROTO, coarse.solution, sigma).relative_residual)
        # refinement is observed on coarse grids, above the solver's tolerance floor
        lo, hi = (picard_solve(params, PROTO, None, default_grid(params, n)).solution for n in C6_COARSE)
        for sigma in sigmas:
            r_lo = pohozaev_residual(params, PROTO, lo, sigma).relative_residual
            r_hi = pohozaev_residual(params, PROTO, hi, sigma).relative_residual
            worst_shrink = min(worst_shrink, r_lo / r_hi)
    elapsed = time.perf_counter() - t0
    ok = lem < C6_LEMMA and worst < C6_POHOZAEV and worst_shrink >= C6_SHRINK and elapsed < C6_BUDGET
    record(
        "6 identity residuals",
        ok,
        f"variational identity {lem:.1e}, Pohozaev max {worst:.1e} at n=2048, "
        f"min shrink n={C6_COARSE[0]}->{C6_COARSE[1]} {worst_shrink:.1f}x, {elapsed:.1f}s",
    )
    assert ok


# 9 -------------------------------------------------------------------------------

def test_c9_transform_suite(record, bvp_cells):
    cells, _ = bvp_cells
    t0 = time.perf_counter()
    worst_round = worst_res = worst_ratio = 0.0
    for params, coarse, _ in cells:
        v = coarse.solution
        if params.gamma < params.m - 1:
            back = plain_to_diffusion(diffusion_to_plain(v, params.m, params.gamma).output, params.m, params.gamma)
            worst_round = max(worst_round, float(np.max(np.abs(back.values - v.values))))
        rep = blowup_rescale(v, sup_norm(v), PROTO, params)
        worst_res = max(worst_res, rep.residual)
        worst_ratio = max(worst_ratio, rep.extra["derivative_bound_max_ratio"])
    book = 0.0
    # rational inputs with exact expected (lambda, wp)
    for (m, g, p, d), (lam, wp) in {
        (2, 0.5, 2, 2): (0.25, 4.0),
        (3, 1, 2, 2): (0.25, 4.0),
        (2, 0.25, 3, 4): (0.75 / 16, 4.0),
        (2.5, 0.5, 2, 2): ((2 / 3) ** 1.5 * 2**-0.5, 3.0),
    }.items():
        got = broken_exponents(m, g, p, d)
        book = max(book, abs(got[0] - lam), abs(got[1] - wp))
    elapsed = time.perf_counter() - t0
    ok = (
        worst_round <= C9_ROUND
        and book <= C9_BOOK
        and worst_res < C9_RES
        and worst_ratio <= C9_SLACK
        and elapsed < C9_BUDGET
    )
    record(
        "9 transform suite",
        ok,
        f"round trip {worst_round:.1e}, bookkeeping {book:.1e}, rescaled residual {worst_res:.1e}, "
        f"derivative bound ratio {worst_ratio:.2f}, {elapsed:.1f}s",
    )
    assert ok


# 7 and 8 ------------------------------------------------------------------------------

SCAN_DOC = f"""
[problem]
N = 4
m = 2
alpha = 0
beta = 0
gamma = 0
p = 2
R = 1

[grid]
n = {C8_GRID_N}

[scan]
axis1 = p
axis1_lo = 1.5
axis1_hi = 3.5
axis1_steps = 21
axis2 = gamma
axis2_lo = 0
axis2_hi = 0.6
axis2_steps = 13
"""


@pytest.fixture(scope="module")
def phase_scan():
    cfg = cli.parse_config(SCAN_DOC)
    threads = int(os.environ.get("RQDIFF_THREADS", "1"))
    t0 = time.perf_counter()
    cells = cli.run_scan(cfg, threads)
    elapsed = time.perf_counter() - t0
    return cfg, cells, cli.emit_phase_diagram(cells), elapsed


def test_c7a_origin_blowup(record):
    rep = picard_solve(ProblemParams(4, 2, 2, -1, 0.3, 2.0))
    ok = rep.status == "OriginBlowup"
    record("7a nonexistence at the origin", ok, f"status {rep.status}")
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="converged cells just above p = 3 - 3 gamma for gamma > 0 are genuine solutions; "
    "the printed contradiction step has a sign error (see ledger)",
)
def test_c7b_supercritical_never_converged(record, phase_scan):
    _, cells, _, _ = phase_scan
    offenders = []
    checked = 0
    for row in cells:
        for c in row:
            if c.axis1 >= 3 - 3 * c.axis2 + C7_MARGIN - 1e-9:
                checked += 1
                if c.observed == "Converged":
                    offenders.append(f"(p={c.axis1}, gamma={c.axis2})")
    ok = not offenders
    record(
        "7b supercritical cells never Converged",
        ok,
        f"{len(offenders)}/{checked} cells with p >= 3-3gamma+{C7_MARGIN} Converged {offenders}; expected failure",
    )
    assert ok


def test_c8_phase_diagram(record, phase_scan):
    cfg, cells, csv, elapsed = phase_scan
    ax_p, ax_g = cfg.scan
    step = (ax_p.hi - ax_p.lo) / (ax_p.steps - 1)
    lines = csv.splitlines()
    bad_rows = []
    transitional = 0
    for j in range(ax_g.steps):
        row = [cells[i][j] for i in range(ax_p.steps)]
        crit = 3 - 3 * row[0].axis2
        misses = 0
        for c in row:
            conv = c.observed == "Converged"
            if c.axis1 <= crit - step + 1e-12:
                if not conv:
                    misses += 2  # below the boundary by a full step: never tolerated
            elif c.axis1 < crit - 1e-12:
                misses += not conv
            else:
                misses += conv
        transitional += misses == 1
        if misses > 1:
            bad_rows.append(row[0].axis2)
    flips_ok = True
    for j in range(ax_g.steps):
        row = [cells[i][j] for i in range(ax_p.steps)]
        flips = [c.axis1 for a, c in zip(row, row[1:]) if a.predicted != c.predicted]
        flips_ok &= all(abs(f - (3 - 3 * row[0].axis2)) <= step + 1e-9 for f in flips)
    ok = len(lines) == 1 + ax_p.steps * ax_g.steps and not bad_rows and flips_ok and elapsed < C8_BUDGET
    record(
        "8 phase diagram",
        ok,
        f"{ax_p.steps}x{ax_g.steps} cells at n={C8_GRID_N}, rows with >1 transitional cell {bad_rows}, "
        f"rows with one transitional cell {transitional}, predicted flips within one step {flips_ok}, "
        f"{elapsed:.0f}s",
    )
    assert ok
