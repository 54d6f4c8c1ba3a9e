"""Command-line front end: config parsing, subcommands and the phase scanner.

Usage: rqdiff <subcommand> --config FILE [--out DIR] [--threads K]

The config is an INI-style document; see README.md for the schema.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import bvp, identities, ivp, model, transforms
from .errors import (
    GammaOutOfRange,
    IncompleteGrid,
    InvalidParameters,
    NotConverged,
    ParseError,
    RqdiffError,
    ValidationError,
)
from .grid import RadialGrid, RadialProfile, sup_norm
from .io import csv_text, dumps, fmt

log = logging.getLogger("rqdiff")

SUBCOMMANDS = ("exponents", "classify", "solve", "ivp", "broken", "identity", "transform", "scan")
SCAN_AXES = ("N", "m", "alpha", "beta", "gamma", "p", "R")

# section -> key -> converter
_SCHEMA: Dict[str, Dict[str, type]] = {
    "problem": {k: float for k in ("N", "m", "alpha", "beta", "gamma", "p", "R")},
    "coefficients": {"a_family": str, "g_family": str, "c1": float, "c2": float, "A": float},
    "solver": {
        "theta": float,
        "tol": float,
        "max_iter": int,
        "divergence_cap": float,
        "initial_guess": str,
        "guess_value": float,
        "scheme": str,
    },
    "grid": {"n": int, "kappa": float},
    "ivp": {
        "r_max": float,
        "rtol": float,
        "lambda": float,
        "wp": float,
        "s0": float,
        "u_s0": float,
        "du_s0": float,
        "d": float,
    },
    "identity": {"kind": str, "sigma": float, "r": float},
    "transform": {"kind": str, "k": float, "d": float},
    "scan": {
        "axis1": str,
        "axis1_lo": float,
        "axis1_hi": float,
        "axis1_steps": int,
        "axis2": str,
        "axis2_lo": float,
        "axis2_hi": float,
        "axis2_steps": int,
    },
    "run": {"seed": int, "output_dir": str},
}

_PROBLEM_REQUIRED = ("N", "m", "alpha", "beta", "gamma", "p", "R")


@dataclass(frozen=True)
class ScanAxis:
    name: str
    lo: float
    hi: float
    steps: int

    def values(self) -> List[float]:
        h = (self.hi - self.lo) / (self.steps - 1)
        return [round(self.lo + i * h, 12) for i in range(self.steps)]


@dataclass(frozen=True)
class RunConfig:
    problem: model.ProblemParams
    coefficients: model.CoefficientSpec
    solver: bvp.PicardOptions
    grid_n: int = 1024
    grid_kappa: Optional[float] = None
    r_max: float = 1e4
    rtol: float = 1e-10
    ivp_extra: Dict[str, float] = field(default_factory=dict)
    identity: Dict[str, object] = field(default_factory=dict)
    transform: Dict[str, object] = field(default_factory=dict)
    scan: Optional[Tuple[ScanAxis, ScanAxis]] = None
    output_dir: str = "."
    seed: int = 0

    def grid(self, params: Optional[model.ProblemParams] = None) -> RadialGrid:
        return bvp.default_grid(params or self.problem, self.grid_n, self.grid_kappa)


def _convert(section: str, key: str, raw: str, conv: type):
    raw = raw.strip()
    if conv is str:
        return raw
    try:
        if conv is int:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        return float(raw)
    except ValueError:
        raise ParseError(f"[{section}] {key}: cannot parse {raw!r} as {conv.__name__}") from None


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        head = line.split("=", 1)[0].split(":", 1)[0].strip()
        if head == key:
            return i
    return 0


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (N vs n)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc).replace("\n", " ")) from None
    data: Dict[str, Dict[str, object]] = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ParseError(f"unknown section [{section}]")
        data[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ParseError(f"line {_line_of(text, key)}: unknown key {key!r} in [{section}]")
            data[section][key] = _convert(section, key, raw, _SCHEMA[section][key])
    if "problem" not in data:
        raise ParseError("missing [problem] section")
    prob = data["problem"]
    missing = [k for k in _PROBLEM_REQUIRED if k not in prob]
    if missing:
        raise ParseError(f"[problem] missing keys: {', '.join(missing)}")
    _validate_problem(prob)
    try:
        params = model.ProblemParams(**prob)
    except InvalidParameters as exc:
        raise ValidationError(str(exc)) from None

    coef = data.get("coefficients", {})
    try:
        coeffs = model.CoefficientSpec(
            a_family=coef.get("a_family", "constant"),
            g_family=coef.get("g_family", "linear"),
            c1=coef.get("c1", 1.0),
            c2=coef.get("c2"),
            A=coef.get("A", 0.0),
        )
        solver = bvp.PicardOptions(**data.get("solver", {}))
    except InvalidParameters as exc:
        raise ValidationError(str(exc)) from None

    g = data.get("grid", {})
    n = g.get("n", 1024)
    if n < 8:
        raise ValidationError("grid n >= 8")
    kappa = g.get("kappa")
    if kappa is not None and kappa < 1:
        raise ValidationError("grid kappa >= 1")

    iv = dict(data.get("ivp", {}))
    r_max = iv.pop("r_max", 1e4)
    rtol = iv.pop("rtol", 1e-10)
    if not r_max > 0:
        raise ValidationError("r_max > 0")
    if not 0 < rtol < 1:
        raise ValidationError("0 < rtol < 1")
    if "d" in iv and not iv["d"] > 1:
        raise ValidationError("d > 1")

    ident = data.get("identity", {})
    if ident.get("kind", "pohozaev") not in ("pohozaev", "lemma22"):
        raise ValidationError("identity kind in {pohozaev, lemma22}")
    tr = data.get("transform", {})
    if tr.get("kind", "diffusion_to_plain") not in ("diffusion_to_plain", "broken_to_plain", "blowup_rescale"):
        raise ValidationError("transform kind in {diffusion_to_plain, broken_to_plain, blowup_rescale}")

    scan = None
    if "scan" in data:
        s = data["scan"]
        axes = []
        for ax in ("axis1", "axis2"):
            need = (ax, f"{ax}_lo", f"{ax}_hi", f"{ax}_steps")
            miss = [k for k in need if k not in s]
            if miss:
                raise ParseError(f"[scan] missing keys: {', '.join(miss)}")
            if s[ax] not in SCAN_AXES:
                raise ValidationError(f"scan axis must be one of {', '.join(SCAN_AXES)}")
            if s[f"{ax}_steps"] < 2:
                raise ValidationError("steps >= 2 per scan axis")
            axes.append(ScanAxis(s[ax], s[f"{ax}_lo"], s[f"{ax}_hi"], s[f"{ax}_steps"]))
        if axes[0].name == axes[1].name:
            raise ValidationError("scan axes must differ")
        scan = (axes[0], axes[1])

    run = data.get("run", {})
    return RunConfig(
        problem=params,
        coefficients=coeffs,
        solver=solver,
        grid_n=n,
        grid_kappa=kappa,
        r_max=r_max,
        rtol=rtol,
        ivp_extra=iv,
        identity=dict(ident),
        transform=dict(tr),
        scan=scan,
        output_dir=run.get("output_dir", "."),
        seed=run.get("seed", 0),
    )


def _validate_problem(prob: Dict[str, object]):
    checks = (
        ("m", lambda x: x > 1, "m > 1"),
        ("R", lambda x: x > 0, "R > 0"),
        ("p", lambda x: x > 1, "p > 1"),
        ("gamma", lambda x: x >= 0, "gamma ≥ 0"),
    )
    for key, ok, msg in checks:
        val = prob[key]
        if not math.isfinite(val) or not ok(val):
            raise ValidationError(msg)


# subcommands ------------------------------------------------------------------

def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def _pure_params(cfg: RunConfig) -> ivp.PurePowerParams:
    P = cfg.problem
    e = cfg.ivp_extra
    return ivp.PurePowerParams(
        P.N,
        P.m,
        P.alpha,
        P.beta,
        e.get("lambda", 1.0),
        e.get("wp", P.p),
        e.get("s0", 0.0),
        e.get("u_s0", 1.0),
        e.get("du_s0", 0.0),
    )


def _diagnostics(traj: ivp.Trajectory) -> dict:
    mono = ivp.lemma21_diagnostics(traj)
    out = {
        "lemma21": {
            "min_U": mono.min_U,
            "max_increase_U": mono.max_increase_U,
            "max_decrease_r_rho_u": mono.max_decrease_rrho_u,
            "window": list(mono.window),
        }
    }
    if np.any(traj.positive_mask()):
        dec = ivp.decay_check(traj)
        b = ivp.lemma22_bound_check(traj)
        out["decay"] = {"r": dec.r, "tail": dec.tail, "ratio": dec.ratio}
        out["lemma22_bound"] = {"exponent": b.exponent, "branch": b.branch, "sup": b.sup}
    return out


def cmd_exponents(cfg: RunConfig, out: Path):
    ex = model.compute_exponents(cfg.problem)
    hyp = model.check_hypotheses(cfg.problem, cfg.coefficients)
    payload = ex.as_dict()
    payload["hypotheses"] = hyp.flags
    _write(out, "exponents.json", dumps(payload))


def cmd_classify(cfg: RunConfig, out: Path):
    c = model.classify_regime(cfg.problem)
    _write(
        out,
        "classification.json",
        dumps({"verdict": c.verdict, "checks": c.checks, "critical_p": c.critical_p}),
    )


def _solve(cfg: RunConfig, params: Optional[model.ProblemParams] = None) -> bvp.SolveReport:
    params = params or cfg.problem
    return bvp.picard_solve(params, cfg.coefficients, cfg.solver, cfg.grid(params))


def cmd_solve(cfg: RunConfig, out: Path):
    rep = _solve(cfg)
    _write(out, "report.json", dumps(rep.to_json_dict()))
    if rep.solution is not None:
        _write(out, "solution.csv", rep.solution.to_csv())


def cmd_ivp(cfg: RunConfig, out: Path):
    traj = ivp.integrate_pure_power(_pure_params(cfg), cfg.r_max, cfg.rtol)
    _write(out, "trajectory.csv", traj.to_csv())
    ev = traj.events()
    ev["diagnostics"] = _diagnostics(traj)
    _write(out, "events.json", dumps(ev))


def cmd_broken(cfg: RunConfig, out: Path):
    d = cfg.ivp_extra.get("d", 2.0)
    traj = ivp.integrate_broken(cfg.problem, d, cfg.r_max, cfg.rtol)
    _write(out, "trajectory.csv", traj.to_csv())
    ev = traj.events()
    ev["d"] = d
    _write(out, "events.json", dumps(ev))


def cmd_identity(cfg: RunConfig, out: Path):
    kind = cfg.identity.get("kind", "pohozaev")
    if kind == "lemma22":
        pp = _pure_params(cfg)
        traj = ivp.integrate_pure_power(pp, cfg.r_max, cfg.rtol)
        r = cfg.identity.get("r", 1.0)
        rep = identities.lemma22_identity_residual(traj, pp, r)
        payload = {"kind": kind, "r": r, **rep.to_json_dict()}
    else:
        P = cfg.problem
        sigma = cfg.identity.get("sigma")
        if sigma is None:
            sigma = model.compute_exponents(P).sigma_star
        identities.check_sigma(P, sigma)
        sol = _solve(cfg)
        if sol.status != "Converged":
            raise NotConverged(f"solver status {sol.status}")
        rep = identities.pohozaev_residual(P, cfg.coefficients, sol.solution, sigma)
        cert = identities.pohozaev_sign_certificate(P, cfg.coefficients, sol.solution, sigma)
        payload = {"kind": kind, "sigma": sigma, **rep.to_json_dict(), "sign": cert.to_json_dict()}
    _write(out, "identity.json", dumps(payload))


def cmd_transform(cfg: RunConfig, out: Path):
    kind = cfg.transform.get("kind", "diffusion_to_plain")
    P = cfg.problem
    if kind == "broken_to_plain":
        d = cfg.transform.get("d", cfg.ivp_extra.get("d", 2.0))
        traj = ivp.integrate_broken(P, d, cfg.r_max, cfg.rtol)
        mask = (traj.r >= traj.s0) & traj.positive_mask()
        seg = RadialProfile(RadialGrid.from_nodes(traj.r[mask]), traj.u[mask], traj.du[mask])
        rep = transforms.broken_to_plain(seg, P.m, P.gamma, P.p, d, P)
    else:
        if kind == "diffusion_to_plain" and not (0 <= P.gamma < P.m - 1):
            raise GammaOutOfRange(f"gamma={P.gamma} must lie in [0, m-1)")
        sol = _solve(cfg)
        if sol.status != "Converged":
            raise NotConverged(f"solver status {sol.status}")
        v = sol.solution
        if kind == "diffusion_to_plain":
            rep = transforms.diffusion_to_plain(v, P.m, P.gamma, P)
        else:
            k = cfg.transform.get("k", sup_norm(v))
            rep = transforms.blowup_rescale(v, k, cfg.coefficients, P)
    payload = {"kind": kind, **rep.to_json_dict()}
    _write(out, "transform.json", dumps(payload))
    _write(out, "transformed.csv", rep.output.to_csv())


# scan ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanCell:
    axis1: float
    axis2: float
    predicted: str
    observed: str
    critical_p: float

    @property
    def agreement(self) -> Optional[bool]:
        if self.predicted == "Indeterminate":
            return None
        if self.predicted == "ExistencePredicted":
            return self.observed == "Converged"
        return self.observed != "Converged"


def _scan_cell(job):
    cfg, i, j, a1, a2 = job
    ax1, ax2 = cfg.scan
    params = cfg.problem.replace(**{ax1.name: a1, ax2.name: a2})
    pred = model.classify_regime(params)
    rep = bvp.picard_solve(params, cfg.coefficients, cfg.solver, cfg.grid(params))
    return i, j, ScanCell(a1, a2, pred.verdict, rep.status, pred.critical_p)


def run_scan(cfg: RunConfig, threads: int = 1) -> List[List[ScanCell]]:
    if cfg.scan is None:
        raise ValidationError("scan requires a [scan] section")
    ax1, ax2 = cfg.scan
    v1, v2 = ax1.values(), ax2.values()
    for a in v1:
        for b in v2:
            try:
                cfg.problem.replace(**{ax1.name: a, ax2.name: b})
            except InvalidParameters as exc:
                raise ValidationError(f"scan point {ax1.name}={a}, {ax2.name}={b}: {exc}") from None
    jobs = [(cfg, i, j, a, b) for i, a in enumerate(v1) for j, b in enumerate(v2)]
    cells: List[List[Optional[ScanCell]]] = [[None] * len(v2) for _ in v1]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_scan_cell, jobs, chunksize=1))
    else:
        results = [_scan_cell(j) for j in jobs]
    for i, j, cell in results:
        cells[i][j] = cell
    return cells


def emit_phase_diagram(cells) -> str:
    """CSV with header axis1,axis2,predicted,observed,critical_p,agreement."""
    flat = [c for row in cells for c in row] if cells and isinstance(cells[0], (list, tuple)) else list(cells)
    if not flat or any(c is None for c in flat):
        raise IncompleteGrid("grid has missing cells")
    a1 = sorted({c.axis1 for c in flat})
    a2 = sorted({c.axis2 for c in flat})
    seen = {(c.axis1, c.axis2) for c in flat}
    if len(seen) != len(flat) or len(flat) != len(a1) * len(a2):
        raise IncompleteGrid(f"expected {len(a1)}x{len(a2)} distinct cells, got {len(flat)}")
    flat.sort(key=lambda c: (c.axis1, c.axis2))
    rows = []
    for c in flat:
        ag = c.agreement
        rows.append((c.axis1, c.axis2, c.predicted, c.observed, c.critical_p, "na" if ag is None else ag))
    return csv_text(("axis1", "axis2", "predicted", "observed", "critical_p", "agreement"), rows)


def scan_warnings(cells: List[List[ScanCell]], p_axis: int = 1) -> List[str]:
    """Rows along p whose Converged set is not a down-set up to one transitional cell."""
    out = []
    if p_axis == 1:
        lines = [[cells[i][j] for i in range(len(cells))] for j in range(len(cells[0]))]
        other = lambda c: c.axis2
    else:
        lines = cells
        other = lambda c: c.axis1
    for line in lines:
        conv = [c.observed == "Converged" for c in line]
        # count Converged cells after the first non-Converged one
        try:
            first_bad = conv.index(False)
        except ValueError:
            continue
        late = sum(conv[first_bad + 1 :])
        if late > 1:
            out.append(f"non-monotone row at {fmt(other(line[0]))}: {late} Converged cells past the first failure")
    return out


def cmd_scan(cfg: RunConfig, out: Path, threads: int = 1):
    cells = run_scan(cfg, threads)
    _write(out, "scan.csv", emit_phase_diagram(cells))
    ax1, ax2 = cfg.scan
    p_axis = 1 if ax1.name == "p" else (2 if ax2.name == "p" else 0)
    warns = scan_warnings(cells, p_axis) if p_axis else []
    for w in warns:
        log.warning(w)
    _write(out, "scan_warnings.json", dumps({"warnings": warns}))


_DISPATCH = {
    "exponents": cmd_exponents,
    "classify": cmd_classify,
    "solve": cmd_solve,
    "ivp": cmd_ivp,
    "broken": cmd_broken,
    "identity": cmd_identity,
    "transform": cmd_transform,
}


def run_subcommand(name: str, cfg: RunConfig, out: Optional[Path] = None, threads: int = 1) -> int:
    out = Path(out if out is not None else cfg.output_dir)
    if name == "scan":
        cmd_scan(cfg, out, threads)
    else:
        _DISPATCH[name](cfg, out)
    return 0


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("RQDIFF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError("RQDIFF_THREADS must be an integer") from None
    return 1


def _error(exc: RqdiffError, out: Optional[Path]) -> int:
    payload = dumps({"error": exc.code, "message": str(exc), "exit_status": exc.exit_status})
    sys.stdout.write(payload)
    if out is not None:
        try:
            _write(out, "error.json", payload)
        except OSError:
            pass
    return exc.exit_status


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="rqdiff", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out) if args.out else None
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc}") from None
        cfg = parse_config(text)
        out = out or Path(cfg.output_dir)
        return run_subcommand(args.subcommand, cfg, out, _threads(args.threads))
    except RqdiffError as exc:
        return _error(exc, out)


if __name__ == "__main__":
    sys.exit(main())
