import math

import numpy as np
import pytest

from rqdiff.errors import InvalidParameters, NoCrossing, StartupFailure
from rqdiff.ivp import (
    PurePowerParams,
    decay_check,
    integrate_broken,
    integrate_pure_power,
    lemma21_diagnostics,
    lemma22_bound_check,
    lemma22_exponent,
)
from rqdiff.model import ProblemParams

SIN = PurePowerParams(3, 2, 0, 0, 1.0, 1.0)
TALENTI = PurePowerParams(4, 2, 0, 0, 1.0, 3.0)


@pytest.fixture(scope="module")
def sin_traj():
    return integrate_pure_power(SIN, r_max=10.0, rtol=1e-10)


@pytest.fixture(scope="module")
def talenti_traj():
    return integrate_pure_power(TALENTI, r_max=1e3, rtol=1e-10)


def test_sin_oracle(sin_traj):
    t = sin_traj
    assert abs(t.first_zero - math.pi) < 1e-8
    mask = t.r <= math.pi
    assert np.max(np.abs(t.u[mask] - np.sinc(t.r[mask] / math.pi))) < 1e-8
    x = np.linspace(0, math.pi, 101)
    assert np.max(np.abs(t.evaluate(x)[0] - np.sinc(x / math.pi))) < 1e-8


def test_talenti_oracle(talenti_traj):
    t = talenti_traj
    assert t.first_zero is None
    assert t.r_end == pytest.approx(1e3)
    assert np.max(np.abs(t.u - 1 / (1 + t.r**2 / 8))) < 1e-6


def test_wp2_exits_positivity():
    t = integrate_pure_power(PurePowerParams(4, 2, 0, 0, 1.0, 2.0))
    assert t.first_zero is not None and t.first_zero < 1e4
    assert t.u[-1] == 0.0
    assert t.events()["first_zero"] == t.first_zero


def test_broken_exits_positivity():
    params = ProblemParams(4, 2, 0, 0, 0.2, 2.0)
    t = integrate_broken(params, 2.0)
    assert 0 < t.s0 < t.first_zero < 1e4
    assert t.evaluate(np.array([t.s0]))[0][0] == pytest.approx(0.5, abs=1e-10)


def test_broken_segment_one_matches_pure_power():
    params = ProblemParams(4, 2, 0, 0, 0.2, 2.0)
    t = integrate_broken(params, 2.0)
    pure = integrate_pure_power(PurePowerParams(4, 2, 0, 0, 1.0, 2.0))
    x = np.linspace(0, t.s0, 50)
    assert np.max(np.abs(t.evaluate(x)[0] - pure.evaluate(x)[0])) < 1e-8


def test_broken_threshold_near_one():
    params = ProblemParams(4, 2, 0, 0, 0.2, 2.0)
    s = [integrate_broken(params, d).s0 for d in (1.1, 1.01)]
    assert s[1] < s[0] < 1.0
    with pytest.raises(InvalidParameters):
        integrate_broken(params, 1.0)


def test_startup_failure():
    with pytest.raises(StartupFailure):
        integrate_pure_power(PurePowerParams(4, 2, 2, -1, 1.0, 2.0))


def test_lemma21_sin(sin_traj):
    rep = lemma21_diagnostics(sin_traj, rho=1.0, hi=2.0)
    assert rep.min_U >= math.cos(2) - 1e-8
    assert rep.max_increase_U <= 1e-8
    early = lemma21_diagnostics(sin_traj, rho=1.0, hi=math.pi / 2)
    assert early.max_decrease_rrho_u <= 1e-8


def test_lemma21_talenti(talenti_traj):
    rep = lemma21_diagnostics(talenti_traj)
    assert rep.ok(1e-8)
    assert rep.window[1] == pytest.approx(1e3)


def test_window_truncated_at_first_zero(sin_traj):
    rep = lemma21_diagnostics(sin_traj, rho=1.0)
    assert rep.window[1] < math.pi


def test_lemma22_exponent_branches():
    e, branch = lemma22_exponent(PurePowerParams(4, 2, 0, 0, 1.0, 2.0))
    assert branch == "equal" and e == pytest.approx(2.0)
    assert lemma22_exponent(PurePowerParams(5, 2, 0, 0, 1.0, 5 / 3))[1] == "equal"
    e, branch = lemma22_exponent(PurePowerParams(5, 2, 0, 0, 1.0, 1.5))
    assert branch == "generic" and e > 0


def test_lemma22_bound_finite_and_stable():
    pp = PurePowerParams(5, 2, 0, 0, 1.0, 1.5)
    sups = []
    for r_max in (1e4, 2e4):
        t = integrate_pure_power(pp, r_max)
        sups.append(lemma22_bound_check(t).sup)
    assert all(np.isfinite(sups))
    assert sups[0] == pytest.approx(sups[1], rel=1e-6)


def test_decay_talenti(talenti_traj):
    rep = decay_check(talenti_traj)
    # tail ~ r^4 r^-8 so halving r multiplies it by about 16
    assert rep.ratio == pytest.approx(1 / 16, rel=1e-3)


def test_decay_subcritical_before_zero():
    t = integrate_pure_power(PurePowerParams(4, 2, 0, 0, 1.0, 2.0))
    assert decay_check(t).ratio < 1


def test_params_validation():
    with pytest.raises(InvalidParameters):
        PurePowerParams(4, 1, 0, 0)
    with pytest.raises(InvalidParameters):
        PurePowerParams(4, 2, 0, 0, du_s0=0.5)


def test_trajectory_csv(sin_traj):
    head = sin_traj.to_csv().splitlines()[0]
    assert head == "r,u,Q,U_rho,r_rho_u,tailweight"
