"""Command-line front end: ``penaltyvi {solve,converge,perturb,regularize,audit}``.

Configs are strict TOML files (unknown keys are rejected) or the names of
the built-in testbeds shipped in ``penaltyvi/testbeds``.  Tables go to
``--out`` (or stdout) as CSV or JSON lines; a JSON summary goes to stderr.

Exit codes: 0 success, 1 numerical or convergence failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from .geometry import SpaceSpec, build_profile, check_J_estimates, duality_map, dual_norm, norm, pairing
from .operators import (
    OperatorPerturbation,
    RhsPerturbation,
    check_lemma2_bound,
    check_monotonicity,
    check_uniform_monotonicity,
    diagonal_power_modulus,
    make_operator,
)
from .penalty import (
    PenaltyProblem,
    Schedule,
    Step,
    VISolution,
    assemble,
    regularized_reference,
    run_schedule,
    solve_penalty,
    solve_vi_reference,
    step_problem,
)
from .rates import RateFitError, fit_rate
from .sets import (
    ProjectionError,
    check_projection_certificate,
    check_projection_stability,
    hausdorff,
    inflate,
    project,
    sample_points,
    set_from_dict,
)

log = logging.getLogger("penaltyvi")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ---------------------------------------------------------------------------
# config schema

_NUM = (int, float)
_LIST = (list,)

SCHEMA = {
    "space": {"dim": int, "p": _NUM, "weights": _LIST},
    "operator": {"name": str, "params": dict, "negate": bool},
    "set": None,  # validated by set_from_dict
    "rhs": {"value": _LIST + _NUM},
    "schedule": {
        "coupling": str, "epsilon": _LIST, "sigma": _LIST + _NUM, "h": _LIST + _NUM,
        "omega": _LIST + _NUM, "alpha": _LIST + _NUM, "warm_start": bool, "control": bool,
    },
    "perturbations": {
        "inflate": str, "operator_mode": str, "operator_gamma": _LIST,
        "operator_direction": _LIST, "operator_seed": int, "rhs_direction": _LIST,
        "rhs_seed": int, "alternate_rhs": bool, "two_set": bool,
    },
    "reference": {"method": str, "tol": _NUM, "max_iter": int, "alpha": _NUM, "epsilon": _NUM},
    "tolerances": {
        "residual": _NUM, "max_iter": int, "certificate_samples": int, "slope_min": _NUM,
        "r2_min": _NUM, "final_error": _NUM, "certificate_min": _NUM,
    },
    "seeds": {"values": _LIST},
    "output": {"path": str, "format": str},
    "audit": {
        "n_samples": int, "R": _NUM, "n_projections": int, "r0": _NUM, "x0": _LIST,
        "sigmas": _LIST, "region": _NUM, "sample_dims": _LIST,
    },
}
REQUIRED = ("space", "operator", "set", "rhs")


@dataclass
class ExperimentConfig:
    space: SpaceSpec
    op: object
    set: object
    rhs: np.ndarray
    schedule: Schedule | None
    warm_start: bool
    control: bool
    inflate_mode: str
    op_pert: OperatorPerturbation
    rhs_pert: RhsPerturbation
    alternate_rhs: bool
    two_set: bool
    reference: dict
    tol: dict
    seeds: list
    output: dict
    audit: dict
    source: str = ""
    raw: dict = field(default_factory=dict)


def testbed_names() -> list:
    root = resources.files("penaltyvi") / "testbeds"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_raw(name_or_path: str) -> tuple:
    """Read a config file, or a built-in testbed by name."""
    path = Path(name_or_path)
    if path.is_file():
        text, source = path.read_text(), str(path)
    else:
        res = resources.files("penaltyvi") / "testbeds" / f"{name_or_path}.toml"
        if not res.is_file():
            raise ConfigError(f"no config file or testbed named {name_or_path!r}; testbeds: {testbed_names()}")
        text, source = res.read_text(), f"testbed:{name_or_path}"
    try:
        return tomli.loads(text), source
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _check_section(name, table):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    allowed = SCHEMA[name]
    for key, val in table.items():
        if key not in allowed:
            raise ConfigError(f"[{name}] unknown key {key!r}; allowed: {sorted(allowed)}")
        typ = allowed[key]
        # TOML booleans are ints to isinstance; only accept them where asked for
        if not isinstance(val, typ) or (isinstance(val, bool) and typ is not bool):
            raise ConfigError(f"[{name}] {key} has wrong type {type(val).__name__}")


def _levels(sched, key, n):
    v = sched.get(key, 0.0)
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.size == 1:
        arr = np.full(n, float(arr[0]))
    if arr.size != n:
        raise ConfigError(f"[schedule] {key} has {arr.size} entries, epsilon has {n}")
    return arr


def parse_config(raw: dict, source: str = "") -> ExperimentConfig:
    """Validate a raw config mapping into an :class:`ExperimentConfig`."""
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}; allowed: {sorted(SCHEMA)}")
    for name, table in raw.items():
        if SCHEMA[name] is not None:
            _check_section(name, table)
    for name in REQUIRED:
        if name not in raw:
            raise ConfigError(f"missing required section [{name}]")
    try:
        sp = raw["space"]
        if "dim" not in sp or "p" not in sp:
            raise ConfigError("[space] needs dim and p")
        space = SpaceSpec(sp["dim"], float(sp["p"]), sp.get("weights"))

        opc = raw["operator"]
        if "name" not in opc:
            raise ConfigError("[operator] needs name")
        op = make_operator(opc["name"], space.dim, opc.get("params"), opc.get("negate", False))

        omega = set_from_dict(raw["set"], space)

        rv = np.atleast_1d(np.asarray(raw["rhs"]["value"], dtype=float)) if "value" in raw["rhs"] else None
        if rv is None:
            raise ConfigError("[rhs] needs value")
        if rv.size == 1:
            rv = np.full(space.dim, float(rv[0]))
        if rv.size != space.dim:
            raise ConfigError(f"[rhs] value has {rv.size} entries, space has dim {space.dim}")

        sched = raw.get("schedule", {})
        schedule = None
        if "epsilon" in sched:
            eps = [float(e) for e in sched["epsilon"]]
            n = len(eps)
            lv = {k: _levels(sched, k, n) for k in ("sigma", "h", "omega", "alpha")}
            steps = tuple(Step(eps[i], lv["sigma"][i], lv["h"][i], lv["omega"][i], lv["alpha"][i])
                          for i in range(n))
            schedule = Schedule(steps, sched.get("coupling", "exact"))

        pt = raw.get("perturbations", {})
        inflate_mode = pt.get("inflate", "outward")
        if inflate_mode not in ("outward", "inward"):
            raise ConfigError("[perturbations] inflate must be 'outward' or 'inward'")
        gamma = pt.get("operator_gamma", ["constant", [1.0]])
        if len(gamma) != 2:
            raise ConfigError("[perturbations] operator_gamma must be [name, [params...]]")
        op_pert = OperatorPerturbation(
            1.0, (gamma[0], tuple(gamma[1])), pt.get("operator_mode", "monotone_safe"),
            pt.get("operator_seed", 0),
            tuple(pt["operator_direction"]) if "operator_direction" in pt else None,
        )
        rhs_pert = RhsPerturbation(
            1.0, tuple(pt["rhs_direction"]) if "rhs_direction" in pt else None,
            pt.get("rhs_seed", 0),
        )

        ref = {"method": "vi", "tol": 1e-10, "max_iter": 200_000, "alpha": 1e-4, "epsilon": 1e-6}
        ref.update(raw.get("reference", {}))
        if ref["method"] not in ("vi", "regularized"):
            raise ConfigError("[reference] method must be 'vi' or 'regularized'")

        tol = {"residual": 1e-9, "max_iter": 100_000, "certificate_samples": 1000,
               "slope_min": 0.9, "r2_min": 0.0, "final_error": None, "certificate_min": -1e-6}
        tol.update(raw.get("tolerances", {}))

        seeds = [int(s) for s in raw.get("seeds", {}).get("values", [0])]
        if not seeds:
            raise ConfigError("[seeds] values must be nonempty")

        out = {"path": None, "format": "csv"}
        out.update(raw.get("output", {}))
        if out["format"] not in ("csv", "jsonl"):
            raise ConfigError("[output] format must be 'csv' or 'jsonl'")

        audit = {"n_samples": 10_000, "R": 2.0, "n_projections": 200, "r0": 0.5,
                 "x0": None, "sigmas": [1e-3, 1e-2, 1e-1], "region": 2.0, "sample_dims": [1, 5, 50]}
        audit.update(raw.get("audit", {}))
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{source}: {exc}") from None

    return ExperimentConfig(
        space=space, op=op, set=omega, rhs=rv, schedule=schedule,
        warm_start=sched.get("warm_start", True), control=sched.get("control", False),
        inflate_mode=inflate_mode, op_pert=op_pert, rhs_pert=rhs_pert,
        alternate_rhs=pt.get("alternate_rhs", False), two_set=pt.get("two_set", False),
        reference=ref, tol=tol, seeds=seeds, output=out, audit=audit, source=source, raw=raw,
    )


def load_config(name_or_path: str) -> ExperimentConfig:
    raw, source = load_raw(name_or_path)
    return parse_config(raw, source)


# ---------------------------------------------------------------------------
# output

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def format_table(rows: list, fmt: str) -> str:
    """Serialize rows deterministically (floats as ``.17g``)."""
    if fmt == "jsonl":
        return "".join(json.dumps(_jsonable(r), sort_keys=False) + "\n" for r in rows)
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _emit(rows, cfg, args):
    fmt = args.format or cfg.output["format"]
    text = format_table(rows, fmt)
    path = args.out or cfg.output["path"]
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _summary(summary: dict, t0: float):
    summary = dict(summary)
    summary["metadata"] = {"elapsed_s": round(time.time() - t0, 3)}
    sys.stderr.write(json.dumps(_jsonable(summary)) + "\n")


def _canonical(rows):
    return sorted(rows, key=lambda r: (r["seed"], r["step"]))


# ---------------------------------------------------------------------------
# commands

def _require_schedule(cfg, coupling=None):
    if cfg.schedule is None:
        raise ConfigError("[schedule] with epsilon is required for this command")
    if coupling is not None and cfg.schedule.coupling != coupling:
        raise ConfigError(f"[schedule] coupling must be {coupling!r} for this command")


def _reference(cfg, seed=0) -> VISolution:
    ref = cfg.reference
    if ref["method"] == "regularized":
        sol = regularized_reference(cfg.op, cfg.rhs, cfg.set, cfg.space, ref["alpha"],
                                    ref["epsilon"], tol=cfg.tol["residual"], seed=seed)
    else:
        sol = solve_vi_reference(cfg.op, cfg.rhs, cfg.set, tol=ref["tol"],
                                 max_iter=ref["max_iter"], seed=seed)
    if not sol.converged or sol.residual_certificate < cfg.tol["certificate_min"]:
        raise RuntimeError(
            f"reference solution failed (converged={sol.converged}, "
            f"certificate={sol.residual_certificate:.3e})")
    return sol


def _run(cfg, args, seed, schedule=None, reference=None, psi=None, threads=1):
    return run_schedule(
        cfg.op, cfg.rhs, cfg.set, cfg.space, schedule or cfg.schedule,
        reference=reference, op_pert=cfg.op_pert, rhs_pert=cfg.rhs_pert,
        alternate_rhs=cfg.alternate_rhs, inflate_mode=cfg.inflate_mode,
        tol=cfg.tol["residual"], max_iter=cfg.tol["max_iter"],
        warm_start=cfg.warm_start, threads=threads, seed=seed,
        certificate_samples=cfg.tol["certificate_samples"], two_set_psi=psi,
    )


def cmd_solve(cfg, args):
    _require_schedule(cfg)
    if len(cfg.schedule.steps) != 1:
        raise ConfigError("solve needs a single-step schedule (one epsilon)")
    st = cfg.schedule.steps[0]
    rows, ok = [], True
    for seed in cfg.seeds:
        prob = step_problem(cfg.op, cfg.rhs, cfg.set, cfg.space, st, 0, cfg.op_pert,
                            cfg.rhs_pert, cfg.alternate_rhs, cfg.inflate_mode, seed)
        rep = solve_penalty(prob, tol=cfg.tol["residual"], max_iter=cfg.tol["max_iter"],
                            certificate_samples=cfg.tol["certificate_samples"], seed=seed)
        row = {"step": 0, "seed": seed, "epsilon": st.epsilon, "sigma": st.sigma, "h": st.h,
               "omega": st.omega, "alpha": st.alpha}
        row.update(rep.to_dict())
        rows.append(row)
        ok &= bool(rep.converged and rep.certificate_passed)
    return rows, {"command": "solve", "passed": ok}, EXIT_OK if ok else EXIT_FAIL


def _nonincreasing(vals, slack):
    return all(b <= a + slack for a, b in zip(vals, vals[1:]))


def _decreasing(vals):
    return all(b < a for a, b in zip(vals, vals[1:]))


def cmd_converge(cfg, args):
    _require_schedule(cfg, "exact")
    if len(cfg.schedule.steps) < 3:
        raise ConfigError("converge needs at least 3 schedule steps for a rate fit")
    rows, fits, ok = [], [], True
    ref = _reference(cfg)
    for seed in cfg.seeds:
        res = _run(cfg, args, seed, reference=ref, threads=args.threads)
        rows += res.rows
        ok &= not res.aborted
        gaps = [r["penalty_gap"] for r in res.rows]
        errs = [r["error"] for r in res.rows]
        entry = {"seed": seed, "mode": res.mode,
                 "error_nonincreasing": _nonincreasing(errs, 10 * cfg.tol["residual"])}
        if all(g == 0 for g in gaps):
            entry["fit"] = "exact"
        else:
            fit = fit_rate([(r["epsilon"], r["penalty_gap"]) for r in res.rows])
            entry["fit"] = fit.to_dict()
            ok &= fit.slope >= cfg.tol["slope_min"] and fit.r_squared >= cfg.tol["r2_min"]
        if cfg.tol["final_error"] is not None:
            entry["final_error_ok"] = errs[-1] <= cfg.tol["final_error"]
            ok &= entry["final_error_ok"]
        fits.append(entry)
    summary = {"command": "converge", "passed": ok, "x_star": ref.x_star,
               "reference_certificate": ref.residual_certificate, "seeds": fits}
    return _canonical(rows), summary, EXIT_OK if ok else EXIT_FAIL


def _psi_for(cfg):
    if cfg.op.name == "diagonal_power" and cfg.space.weights is None:
        return diagonal_power_modulus(cfg.space, cfg.op.params["s"], cfg.op.params["c"])
    return cfg.op.psi


def cmd_perturb(cfg, args):
    _require_schedule(cfg, "theorem2")
    ref = _reference(cfg)
    psi = _psi_for(cfg) if cfg.two_set else None
    if cfg.two_set and psi is None:
        raise ConfigError("two_set audit needs an operator with a known modulus")
    rows, per_seed, ok = [], [], True
    for seed in cfg.seeds:
        res = _run(cfg, args, seed, reference=ref, psi=psi, threads=args.threads)
        rows += res.rows
        errs = [r["error"] for r in res.rows]
        viol = sum(1 for r in res.rows
                   if "two_set_slack" in r and not r["two_set_vacuous"] and r["two_set_slack"] < -1e-9)
        entry = {"seed": seed, "errors_decreasing": _decreasing(errs),
                 "two_set_violations": viol, **res.coupling_checks}
        if cfg.tol["final_error"] is not None:
            entry["final_error_ok"] = errs[-1] <= cfg.tol["final_error"]
            ok &= entry["final_error_ok"]
        ok &= (not res.aborted) and entry["errors_decreasing"] and viol == 0
        per_seed.append(entry)
    summary = {"command": "perturb", "passed": ok, "x_star": ref.x_star, "seeds": per_seed}
    return _canonical(rows), summary, EXIT_OK if ok else EXIT_FAIL


def _last_displacement(res):
    xs = [r.x for r in res.reports]
    return float(np.linalg.norm(xs[-1] - xs[-2])) if len(xs) >= 2 else float("nan")


def cmd_regularize(cfg, args):
    _require_schedule(cfg, "theorem3_regularized")
    ref = _reference(cfg)
    rows, per_seed, ok = [], [], True
    for seed in cfg.seeds:
        res = _run(cfg, args, seed, reference=ref, threads=args.threads)
        rows += res.rows
        errs = [r["error"] for r in res.rows]
        entry = {"seed": seed, "errors_decreasing": _decreasing(errs),
                 "displacement": _last_displacement(res), **res.coupling_checks}
        if cfg.control:
            steps = tuple(Step(s.epsilon, s.sigma, s.h, s.omega, 0.0) for s in cfg.schedule.steps)
            ctl = _run(cfg, args, seed, schedule=Schedule(steps, "theorem2"), reference=ref)
            entry["control_displacement"] = _last_displacement(ctl)
            entry["control_errors"] = [r["error"] for r in ctl.rows]
            entry["control_converged"] = not ctl.aborted
        ok &= (not res.aborted) and entry["errors_decreasing"]
        per_seed.append(entry)
    summary = {"command": "regularize", "passed": ok, "x_hat": ref.x_star,
               "reference_method": ref.method,
               "reference_certificate": ref.residual_certificate, "seeds": per_seed}
    return _canonical(rows), summary, EXIT_OK if ok else EXIT_FAIL


# audit suites -------------------------------------------------------------

def _suite(name, passed, worst, n, note=""):
    return {"suite": name, "passed": bool(passed), "worst_slack": float(worst),
            "n": int(n), "note": note}


def _audit_duality(cfg, seed):
    a = cfg.audit
    rng = np.random.default_rng(seed)
    worst, n = 0.0, 0
    exact = cfg.space.p == 2.0 and cfg.space.weights is None
    for dim in a["sample_dims"]:
        s = SpaceSpec(int(dim), cfg.space.p, None)
        x = rng.standard_normal((a["n_samples"], s.dim)) * 10.0 ** rng.uniform(-3, 3, (a["n_samples"], 1))
        j = duality_map(x, s)
        nx = norm(x, s)
        e1 = np.abs(pairing(j, x) - nx ** 2) / nx ** 2
        e2 = np.abs(dual_norm(j, s) - nx) / nx
        err = max(float(e1.max()), float(e2.max()))
        if exact:
            err = max(err, float(np.max(np.abs(j - x) / np.maximum(np.abs(x), 1e-300))))
        worst = max(worst, err)
        n += len(x)
    thr = 1e-12 if exact else 1e-10
    return _suite("duality_identities", worst <= thr, -worst, n,
                  f"max relative error, threshold {thr:g}")


def _audit_projection(cfg, seed):
    rng = np.random.default_rng(seed)
    omega, s = cfg.set, cfg.space
    worst = np.inf
    m = cfg.audit["n_projections"]
    xs = sample_points(omega, m, rng) + rng.standard_normal((m, s.dim)) * cfg.audit["region"]
    for i, x in enumerate(xs):
        rep = check_projection_certificate(x, project(x, omega), omega, 200, seed + i)
        worst = min(worst, rep["worst_slack"])
    return _suite("projection_certificate", worst >= -1e-8, worst, m)


def _audit_j_inequalities(cfg, seed):
    rep = check_J_estimates(cfg.space, cfg.audit["R"], cfg.audit["n_samples"], seed)
    worst = min(c["worst_slack"] for c in rep["checks"].values())
    note = "; ".join(f"{k}={v['worst_slack']:.3g}" for k, v in rep["checks"].items())
    return _suite("j_inequalities", rep["passed"], worst, rep["n_pairs"], note)


def _region(cfg):
    r = cfg.audit["region"]
    return -r * np.ones(cfg.space.dim), r * np.ones(cfg.space.dim)


def _audit_lemma2(cfg, seed):
    x0 = np.zeros(cfg.space.dim) if cfg.audit["x0"] is None else np.asarray(cfg.audit["x0"], float)
    rep = check_lemma2_bound(cfg.op, cfg.space, x0, cfg.audit["r0"], cfg.audit["n_samples"],
                             seed, region=_region(cfg))
    return _suite("lemma2_bound", rep["passed"], rep["worst_slack"], cfg.audit["n_samples"],
                  f"r0={rep['r0']:g} c0={rep['c0_used']:.6g}")


def _audit_projection_stability(cfg, seed):
    rng = np.random.default_rng(seed)
    prof = build_profile(cfg.space)
    worst, n, vac = np.inf, 0, 0
    m = cfg.audit["n_projections"]
    for sigma in cfg.audit["sigmas"]:
        other = inflate(cfg.set, float(sigma), "outward")
        H = hausdorff(cfg.set, other)[0]
        xs = sample_points(other, m, rng) + rng.standard_normal((m, cfg.space.dim)) * cfg.audit["region"]
        for x in xs:
            rep = check_projection_stability(x, cfg.set, other, prof, sigma=H)
            worst = min(worst, rep["slack"])
            vac += rep["vacuous"]
            n += 1
    return _suite("projection_stability", worst >= -1e-9, worst, n, f"vacuous={vac}")


def _audit_monotone(cfg, seed):
    rep = check_monotonicity(cfg.op, cfg.audit["n_samples"], seed, region=_region(cfg))
    return _suite("monotonicity", rep["passed"], rep["worst_pairing"], rep["n_pairs"], cfg.op.name)


def _audit_uniform(cfg, seed):
    psi = _psi_for(cfg)
    if psi is None:
        return None
    rep = check_uniform_monotonicity(cfg.op, psi, cfg.space, cfg.audit["n_samples"], seed,
                                     region=_region(cfg))
    return _suite("uniform_monotonicity", rep["passed"], rep["worst_slack"], rep["n_pairs"], rep["form"])


def _audit_penalty_monotone(cfg, seed):
    eps = cfg.schedule.steps[0].epsilon if cfg.schedule else 0.1
    T = assemble(PenaltyProblem(cfg.op, cfg.rhs, cfg.set, cfg.space, eps))
    rng = np.random.default_rng(seed)
    r = cfg.audit["region"]
    n = cfg.audit["n_samples"]
    x1 = rng.uniform(-r, r, (n, cfg.space.dim))
    x2 = x1 + rng.standard_normal((n, cfg.space.dim)) * 10.0 ** rng.uniform(-4, 0, (n, 1))
    val = pairing(T(x1) - T(x2), x1 - x2)
    worst = float(np.min(val))
    return _suite("penalty_operator_monotonicity", worst >= -1e-9, worst, n, f"eps={eps:g}")


def _audit_profile(cfg, seed):
    prof = build_profile(cfg.space)
    inv = prof.check_invariants()
    bad = [k for k, v in inv.items() if not v]
    return _suite("moduli_profile", not bad, 0.0 if not bad else -1.0, len(inv),
                  "failed: " + ",".join(bad) if bad else prof.mode)


AUDIT_SUITES = (
    _audit_duality, _audit_projection, _audit_j_inequalities, _audit_lemma2, _audit_projection_stability,
    _audit_monotone, _audit_uniform, _audit_penalty_monotone, _audit_profile,
)


def cmd_audit(cfg, args):
    rows = []
    for seed in cfg.seeds:
        for suite in AUDIT_SUITES:
            row = suite(cfg, seed)
            if row is not None:
                rows.append({"seed": seed, **row})
    ok = all(r["passed"] for r in rows)
    summary = {"command": "audit", "passed": ok,
               "failed": [r["suite"] for r in rows if not r["passed"]]}
    return rows, summary, EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "perturb": cmd_perturb,
    "regularize": cmd_regularize,
    "audit": cmd_audit,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="penaltyvi", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="TOML file or built-in testbed name")
    ap.add_argument("--out", help="write the table here instead of stdout")
    ap.add_argument("--format", choices=("csv", "jsonl"))
    ap.add_argument("--seed", type=int, help="run with this single seed")
    ap.add_argument("--threads", type=int, default=1,
                    help="parallel schedule steps (only without warm start)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.time()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seeds = [args.seed]
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        rows, summary, code = COMMANDS[args.command](cfg, args)
    except (ConfigError, RateFitError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (RuntimeError, ProjectionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_FAIL
    _emit(rows, cfg, args)
    _summary(summary, t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
