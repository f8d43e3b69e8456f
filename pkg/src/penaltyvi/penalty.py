"""Penalty equations for variational inequalities and their audits.

The constrained problem "find ``x*`` in ``omega`` with ``<Ax* - f, y - x*> >= 0``
for all ``y`` in ``omega``" is replaced by the unconstrained equation::

    A x + eps^-1 J(x - P x) + alpha J x = f

whose solutions approach ``x*`` as ``eps -> 0`` (and ``alpha -> 0`` for the
regularized form).  This module assembles and solves that equation, computes
reference VI solutions with an independent Euclidean extragradient method,
runs parameter schedules with perturbed data and audits the two-set
stability estimate.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import (
    L_CONST,
    ModulusProfile,
    SaturationError,
    SpaceSpec,
    as_vector,
    build_profile,
    dual_norm,
    duality_map,
    norm,
    pairing,
)
from .operators import (
    MonotoneOp,
    MonotonicityModulus,
    OperatorPerturbation,
    RhsPerturbation,
    evaluate,
    perturb_operator,
    perturb_rhs,
)
from .sets import (
    Ball,
    Box,
    ConvexSet,
    Halfspace,
    ProximitySpec,
    distance,
    euclidean_project,
    hausdorff,
    inflate,
    project,
    sample_points,
)

log = logging.getLogger(__name__)

__all__ = [
    "PenaltyProblem",
    "SolveReport",
    "VISolution",
    "Step",
    "Schedule",
    "ScheduleResult",
    "penalty_operator",
    "assemble",
    "working_box",
    "extragradient",
    "solve_penalty",
    "check_generalized_solution",
    "check_vi_certificate",
    "solve_vi_reference",
    "regularized_reference",
    "coupling_quantity",
    "step_problem",
    "run_schedule",
    "check_two_set_bound",
]

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000
DOMAIN_MARGIN = 1e-6


def _bbox(omega: ConvexSet):
    """Componentwise bounding box of a bounded set, or None."""
    res = omega.resolve()
    s = res.space
    if isinstance(res, Box):
        return res.lower, res.upper
    if isinstance(res, Ball):
        ext = res.radius / s.w ** (1.0 / s.p)
        return res.center - ext, res.center + ext
    return None


@dataclass(frozen=True)
class PenaltyProblem:
    """One instance of ``A x + eps^-1 J(x - P x) + alpha J x = f``."""

    op: MonotoneOp
    rhs: np.ndarray
    set: ConvexSet
    space: SpaceSpec
    epsilon: float
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not (self.alpha >= 0):
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.set.space != self.space:
            raise ValueError("set and problem live in different spaces")
        if self.op.dim != self.space.dim:
            raise ValueError("operator dimension does not match the space")
        object.__setattr__(self, "rhs", as_vector(self.rhs, self.space).astype(float))
        if self.op.domain is not None:
            bb = _bbox(self.set)
            lo, up = self.op.domain
            if bb is None or np.any(bb[0] - lo < DOMAIN_MARGIN) or np.any(up - bb[1] < DOMAIN_MARGIN):
                raise ValueError("constraint set must lie strictly inside the operator domain")


@dataclass
class SolveReport:
    x: np.ndarray
    residual: float
    iterations: int
    penalty_gap: float
    converged: bool
    method: str
    epsilon: float
    alpha: float
    certificate: float | None = None
    certificate_passed: bool | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x"] = [float(v) for v in self.x]
        return d


@dataclass
class VISolution:
    x_star: np.ndarray
    residual_certificate: float
    method: str
    converged: bool
    iterations: int
    natural_residual: float


def penalty_operator(x, omega: ConvexSet) -> np.ndarray:
    """``J(x - P x)``: zero on ``omega``, growing off it."""
    s = omega.space
    x = as_vector(x, s)
    return duality_map(x - project(x, omega), s)


def assemble(problem: PenaltyProblem):
    """The operator ``T x = A x + eps^-1 J(x - P x) + alpha J x``."""
    op, omega, s = problem.op, problem.set, problem.space
    inv_eps, alpha = 1.0 / problem.epsilon, problem.alpha

    def T(x):
        x = np.asarray(x, dtype=float)
        out = evaluate(op, x) + inv_eps * penalty_operator(x, omega)
        if alpha > 0:
            out = out + alpha * duality_map(x, s)
        return out

    return T


def working_box(problem: PenaltyProblem, margin: float = 10.0):
    """Bounds of the region searched by the solver: the constraint set's
    bounding box widened by ``margin`` diameters, clipped to the domain."""
    omega = problem.set
    bb = _bbox(omega)
    s = problem.space
    if bb is None:
        c = project(np.zeros(s.dim), omega)
        half = margin * max(1.0, float(np.max(np.abs(c))))
        lo, up = c - half, c + half
    else:
        lo, up = bb
        width = max(float(np.max(up - lo)), 1e-3)
        lo, up = lo - margin * width, up + margin * width
    if problem.op.domain is not None:
        dlo, dup = problem.op.domain
        lo, up = np.maximum(lo, dlo), np.minimum(up, dup)
    return lo, up


# ---------------------------------------------------------------------------
# inner solvers

def extragradient(F, proj, x0, tol=1e-10, max_iter=DEFAULT_MAX_ITER, step=1.0,
                  residual=None):
    """Extragradient (double projection) with adaptive step size.

    Solves ``find x in C: <F(x), y - x> >= 0 for all y in C`` where ``proj``
    is the Euclidean projection on ``C``.  Stops when ``residual(x)`` (by
    default the natural residual ``|x - proj(x - F(x))|``) drops below
    ``tol``.  Returns ``(x, residual, iterations, converged)``.
    """
    if residual is None:
        def residual(x):
            return float(np.linalg.norm(x - proj(x - F(x))))

    x = proj(np.asarray(x0, dtype=float))
    tau = float(step)
    Fx = F(x)
    r = residual(x)
    it = 0
    while it < max_iter and r > tol:
        it += 1
        while True:
            y = proj(x - tau * Fx)
            Fy = F(y)
            dx = np.linalg.norm(x - y)
            if dx == 0.0 or tau * np.linalg.norm(Fx - Fy) <= 0.9 * dx:
                break
            tau *= 0.5
            if tau < 1e-300:
                return x, r, it, False
        x = proj(x - tau * Fy)
        Fx = F(x)
        r = residual(x)
        tau *= 1.2
    return x, r, it, r <= tol


def _fd_jacobian(F, x, fx):
    n = len(x)
    Jm = np.empty((n, n))
    for i in range(n):
        h = 1e-7 * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        Jm[:, i] = (F(x + e) - F(x - e)) / (2 * h)
    return Jm


def _newton(F, x0, resid, tol, max_iter, clip):
    """Regularized Newton with a hyperplane-projection safeguard.

    The Newton direction (central-difference ``J``, least squares) is tried
    first with Armijo backtracking on ``|F|_2^2``.  When backtracking fails,
    the direction solves ``(J + mu I) d = -F`` with ``mu = min(1, |F|_2)``
    and a point ``z`` on the ray with
    ``<F(z), d> <= -1e-4 t |d|^2`` defines a hyperplane separating ``x``
    from the solution set, and ``x`` is projected on it.  The safeguard
    converges for any monotone continuous ``F``, including singular
    Jacobians along flat directions.
    """
    x = clip(np.asarray(x0, dtype=float))
    fx = F(x)
    r = resid(fx)
    n = len(x)
    it = 0
    while r > tol and it < max_iter:
        it += 1
        Jm = _fd_jacobian(F, x, fx)
        nf = float(np.linalg.norm(fx))
        d = np.linalg.lstsq(Jm, -fx, rcond=None)[0]
        t = 1.0
        while t >= 1e-6:
            xn = clip(x + t * d)
            fn = F(xn)
            if np.linalg.norm(fn) ** 2 <= (1.0 - 1e-4 * t) * nf * nf:
                break
            t *= 0.5
        if t >= 1e-6:
            x, fx = xn, fn
            r = resid(fx)
            continue
        mu = min(1.0, nf)
        try:
            d = np.linalg.solve(Jm + mu * np.eye(n), -fx)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(Jm + mu * np.eye(n), -fx, rcond=None)[0]
        dd = float(d @ d)
        t = 1.0
        while True:
            z = x + t * d
            fz = F(z)
            if -float(fz @ d) >= 1e-4 * t * dd or t < 1e-14:
                break
            t *= 0.5
        nz = float(fz @ fz)
        if nz == 0.0:
            x, fx = clip(z), F(clip(z))
        else:
            x = clip(x - float(fz @ (x - z)) / nz * fz)
            fx = F(x)
        r = resid(fx)
        if t < 1e-14:
            break
    ok = r <= tol
    # a few polishing steps so the certificate is not dominated by tol
    for _ in range(3 if ok else 0):
        Jm = _fd_jacobian(F, x, fx)
        xn = clip(x + np.linalg.lstsq(Jm, -fx, rcond=None)[0])
        fn = F(xn)
        rn = resid(fn)
        if not rn < 0.5 * r:
            break
        x, fx, r = xn, fn, rn
        it += 1
    return x, r, it, ok


def solve_penalty(problem: PenaltyProblem, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER, x0=None, method: str = "auto",
                  certificate_samples: int = 1000, seed: int = 0) -> SolveReport:
    """Solve the penalty equation to dual-norm residual ``tol``.

    ``method="auto"`` runs damped Newton (finite-difference Jacobian) and
    falls back to extragradient over the working box when Newton stalls.
    The starting point defaults to the projection of ``x0`` (or of zero) on
    the constraint set.  A non-converged solve returns the best iterate with
    ``converged=False``.
    """
    if not (problem.epsilon > 0):
        raise ValueError("epsilon must be positive")
    s = problem.space
    T = assemble(problem)
    f = problem.rhs
    lo, up = working_box(problem)

    def F(x):
        return T(x) - f

    def resid(fx):
        return float(dual_norm(fx, s))

    def clip(x):
        return np.clip(x, lo, up)

    start = project(np.zeros(s.dim) if x0 is None else as_vector(x0, s), problem.set)
    x, r, it, ok = start, resid(F(start)), 0, False
    used = []
    if method in ("auto", "newton"):
        x, r, it, ok = _newton(F, start, resid, tol, min(max_iter, 500), clip)
        used.append("newton")
    if not ok and method in ("auto", "extragradient"):
        x2, _, it2, _ = extragradient(
            F, clip, x, tol=tol, max_iter=max_iter,
            step=problem.epsilon, residual=lambda z: resid(F(z)),
        )
        r2 = resid(F(x2))
        it += it2
        used.append("extragradient")
        if r2 < r:
            x, r = x2, r2
        ok = r <= tol
        if not ok and method == "auto":
            # extragradient may have moved into Newton's basin
            x3, r3, it3, ok3 = _newton(F, x, resid, tol, 200, clip)
            it += it3
            if r3 < r:
                x, r, ok = x3, r3, ok3
    if not ok:
        log.warning("penalty solve did not converge: residual %.3e after %d iterations", r, it)
    gap = float(norm(x - project(x, problem.set), s))
    report = SolveReport(
        x=x, residual=r, iterations=it, penalty_gap=gap, converged=bool(ok),
        method="+".join(used), epsilon=problem.epsilon, alpha=problem.alpha,
    )
    if certificate_samples:
        cert = check_generalized_solution(report, problem, certificate_samples, seed)
        report.certificate = cert
        lo, up = working_box(problem)
        diam = float(norm(up - lo, s))
        report.certificate_passed = bool(cert >= -10.0 * tol * max(diam, 1.0))
    return report


def check_generalized_solution(report: SolveReport, problem: PenaltyProblem,
                               n_samples: int = 1000, seed: int = 0) -> float:
    """Worst slack over sampled ``x`` of::

        <z - f, x - x_eps> + eps^-1 <J(x_eps - P x_eps), x - x_eps> (+ alpha <J x_eps, x - x_eps>)

    with ``z = A x_eps``; ``x`` ranges over the solver's working box.
    """
    lo, up = working_box(problem)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, up, size=(int(n_samples), problem.space.dim))
    xe = report.x
    g = assemble(problem)(xe) - problem.rhs
    return float(np.min((pts - xe) @ g))


def check_vi_certificate(op: MonotoneOp, f, omega: ConvexSet, x_star,
                         n_samples: int = 1000, seed: int = 0) -> float:
    """Worst sampled ``<A x - f, x - x*>`` over ``x`` in ``omega``."""
    rng = np.random.default_rng(seed)
    n_loc = int(n_samples) // 4
    pts = sample_points(omega, int(n_samples) - n_loc, rng, around=x_star, scale=1.0)
    # local points probe the neighbourhood where the slack is smallest
    radii = 10.0 ** rng.uniform(-6, -1, size=(n_loc, 1))
    local = project(x_star + radii * rng.standard_normal((n_loc, len(x_star))), omega)
    pts = np.vstack([pts, local])
    vals = pairing(evaluate(op, pts) - f, pts - x_star)
    return float(np.min(vals))


def solve_vi_reference(op: MonotoneOp, f, omega: ConvexSet, tol: float = 1e-10,
                       max_iter: int = 200_000, x0=None, n_samples: int = 1000,
                       seed: int = 0) -> VISolution:
    """Reference VI solution by Euclidean extragradient.

    The variational inequality does not involve the norm, so Euclidean
    projections give a valid, norm-independent oracle for ``x*``.
    """
    s = omega.space
    f = as_vector(f, s)

    def F(x):
        return evaluate(op, x) - f

    def proj(x):
        return euclidean_project(x, omega)

    start = np.zeros(s.dim) if x0 is None else as_vector(x0, s)
    x, r, it, ok = extragradient(F, proj, start, tol=tol, max_iter=max_iter, step=1.0)
    cert = check_vi_certificate(op, f, omega, x, n_samples, seed)
    return VISolution(
        x_star=x, residual_certificate=cert, method="extragradient-adaptive",
        converged=bool(ok), iterations=it, natural_residual=r,
    )


def regularized_reference(op: MonotoneOp, f, omega: ConvexSet, space: SpaceSpec,
                          alpha: float = 1e-4, epsilon: float = 1e-6,
                          tol: float = DEFAULT_TOL, n_samples: int = 1000,
                          seed: int = 0) -> VISolution:
    """Limit point selected by the ``alpha J`` term, for operators whose VI
    has many solutions.

    Solves the exact-data regularized equation at small ``alpha`` and
    ``epsilon``, projects the result on ``omega`` and certifies it as a VI
    solution by sampling.
    """
    prob = PenaltyProblem(op, f, omega, space, epsilon, alpha)
    rep = solve_penalty(prob, tol=tol, certificate_samples=0)
    x = project(rep.x, omega)
    cert = check_vi_certificate(op, prob.rhs, omega, x, n_samples, seed)
    return VISolution(
        x_star=x, residual_certificate=cert, method=f"regularized(alpha={alpha:g}, eps={epsilon:g})",
        converged=rep.converged, iterations=rep.iterations, natural_residual=rep.residual,
    )


# ---------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class Step:
    epsilon: float
    sigma: float = 0.0
    h: float = 0.0
    omega: float = 0.0
    alpha: float = 0.0


COUPLINGS = ("exact", "theorem2", "theorem3_regularized")


@dataclass(frozen=True)
class Schedule:
    steps: tuple
    coupling: str = "exact"

    def __post_init__(self):
        steps = tuple(s if isinstance(s, Step) else Step(*s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")
        if not steps:
            raise ValueError("schedule needs at least one step")
        eps = [s.epsilon for s in steps]
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon must be positive and strictly decreasing")
        for s in steps:
            if min(s.sigma, s.h, s.omega, s.alpha) < 0:
                raise ValueError("perturbation levels must be nonnegative")
        if self.coupling == "exact" and any(
                s.sigma or s.h or s.omega or s.alpha for s in steps):
            raise ValueError("exact coupling requires sigma = h = omega = alpha = 0")
        if self.coupling == "theorem3_regularized" and any(s.alpha <= 0 for s in steps):
            raise ValueError("regularized coupling requires alpha > 0")


def coupling_quantity(sigma: float, profile: ModulusProfile, dual_profile: ModulusProfile):
    """``g*^-1(delta^-1(sigma))`` and a saturation flag.

    Saturated inverses are evaluated at their domain end 2.
    """
    if sigma == 0:
        return 0.0, False
    try:
        d = float(profile.delta_inverse(sigma))
    except SaturationError:
        return 2.0, True
    try:
        return float(np.asarray(_g_inv(dual_profile, d))), False
    except SaturationError:
        return 2.0, True


def _g_inv(profile, v):
    from .geometry import g_inverse
    return g_inverse(profile, v)


@dataclass
class ScheduleResult:
    rows: list
    reports: list
    aborted: bool
    mode: str
    coupling_checks: dict = field(default_factory=dict)


def _monotone_decreasing(vals, strict=True):
    vals = [v for v in vals if v is not None]
    if strict:
        return all(b < a for a, b in zip(vals, vals[1:]))
    return all(b <= a for a, b in zip(vals, vals[1:]))


def step_problem(op: MonotoneOp, rhs, omega: ConvexSet, space: SpaceSpec, step: Step,
                 k: int = 0, op_pert: OperatorPerturbation | None = None,
                 rhs_pert: RhsPerturbation | None = None, alternate_rhs: bool = False,
                 inflate_mode: str = "outward", seed: int = 0) -> PenaltyProblem:
    """Perturbed problem of schedule step ``k``.

    The templates supply direction, mode and seed offset; the step supplies
    the levels.  With ``alternate_rhs`` the right-hand side perturbation
    flips sign as ``(-1)^(k+1)``.
    """
    op_pert = op_pert or OperatorPerturbation(0.0)
    rhs_pert = rhs_pert or RhsPerturbation(0.0)
    om = inflate(omega, step.sigma, inflate_mode) if step.sigma > 0 else omega
    A = perturb_operator(op, OperatorPerturbation(
        step.h, op_pert.gamma, op_pert.mode, seed + op_pert.seed, op_pert.direction), space)
    sign = (-1.0) ** (k + 1) if alternate_rhs else 1.0
    f = perturb_rhs(rhs, RhsPerturbation(
        step.omega, rhs_pert.direction, seed + rhs_pert.seed, sign), space)
    return PenaltyProblem(A, f, om, space, step.epsilon, step.alpha)


def run_schedule(op: MonotoneOp, rhs, omega: ConvexSet, space: SpaceSpec, schedule: Schedule,
                 reference=None, op_pert: OperatorPerturbation | None = None,
                 rhs_pert: RhsPerturbation | None = None, alternate_rhs: bool = False,
                 inflate_mode: str = "outward", tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, warm_start: bool = True,
                 threads: int = 1, seed: int = 0, certificate_samples: int = 1000,
                 profile: ModulusProfile | None = None,
                 dual_profile: ModulusProfile | None = None,
                 two_set_psi: MonotonicityModulus | None = None) -> ScheduleResult:
    """Solve the (perturbed) penalty equation at every schedule step.

    Each step builds ``omega_sigma = inflate(omega, sigma)``, ``A^h`` and
    ``f^omega`` from the templates (their levels replaced by the step's),
    solves, and records the error to ``reference``, the penalty gap, the gap
    over ``eps`` and the coupling quantities.  With ``two_set_psi`` given,
    every step with ``sigma > 0`` also solves on the exact set and audits
    the two-set estimate.  A failed solve aborts the run; rows so far are
    returned.
    """
    rhs = as_vector(rhs, space)
    needs_moduli = any(st.sigma > 0 for st in schedule.steps)
    if needs_moduli and profile is None:
        profile = build_profile(space)
    if needs_moduli and dual_profile is None:
        dual_profile = build_profile(space.dual())
    x_ref = None if reference is None else np.asarray(
        reference.x_star if isinstance(reference, VISolution) else reference, float)
    op_pert = op_pert or OperatorPerturbation(0.0)
    rhs_pert = rhs_pert or RhsPerturbation(0.0)

    def solve_step(k, st, x0):
        prob = step_problem(op, rhs, omega, space, st, k, op_pert, rhs_pert,
                            alternate_rhs, inflate_mode, seed)
        rep = solve_penalty(prob, tol=tol, max_iter=max_iter, x0=x0,
                            certificate_samples=certificate_samples, seed=seed + k)
        return prob, rep

    steps = list(schedule.steps)
    results = [None] * len(steps)
    mode = "warm_start" if warm_start else ("parallel" if threads > 1 else "cold_start")
    if warm_start or threads <= 1:
        x0 = None
        for k, st in enumerate(steps):
            prob, rep = solve_step(k, st, x0 if warm_start else None)
            results[k] = (prob, rep)
            if not rep.converged:
                break
            x0 = rep.x
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futs = [ex.submit(solve_step, k, st, None) for k, st in enumerate(steps)]
            results = [fu.result() for fu in futs]

    rows, reports = [], []
    aborted = False
    for k, (st, res) in enumerate(zip(steps, results)):
        if res is None:
            aborted = True
            break
        prob, rep = res
        cq, sat = coupling_quantity(st.sigma, profile, dual_profile)
        H = hausdorff(omega, prob.set)[0] if st.sigma > 0 else 0.0
        row = {
            "step": k, "seed": seed, "epsilon": st.epsilon, "sigma": st.sigma,
            "h": st.h, "omega": st.omega, "alpha": st.alpha,
            "hausdorff": H,
            "error": None if x_ref is None else float(norm(rep.x - x_ref, space)),
            "penalty_gap": rep.penalty_gap,
            "gap_over_eps": rep.penalty_gap / st.epsilon,
            "coupling": cq / st.epsilon,
            "coupling_saturated": sat,
            "residual": rep.residual, "iterations": rep.iterations,
            "converged": rep.converged, "certificate": rep.certificate,
        }
        if st.alpha > 0:
            row["perturbation_over_alpha"] = (st.h + st.omega) / st.alpha
            row["coupling_over_alpha"] = cq / (st.alpha * st.epsilon)
        if two_set_psi is not None and st.sigma > 0:
            exact_prob = PenaltyProblem(prob.op, prob.rhs, omega, space, st.epsilon, st.alpha)
            exact_rep = solve_penalty(exact_prob, tol=tol, max_iter=max_iter, x0=rep.x,
                                      certificate_samples=0)
            tb = check_two_set_bound(exact_rep, rep, omega, prob.set, two_set_psi,
                                     profile, dual_profile, sigma=H)
            row["two_set_lhs"] = tb["lhs"]
            row["two_set_rhs"] = tb["rhs"]
            row["two_set_slack"] = tb["slack"]
            row["two_set_vacuous"] = tb["vacuous"]
        rows.append(row)
        reports.append(rep)
        if not rep.converged:
            aborted = True
            break

    checks = {}
    if schedule.coupling == "theorem2":
        checks["coupling_decreasing"] = _monotone_decreasing([r["coupling"] for r in rows])
    if schedule.coupling == "theorem3_regularized":
        checks["perturbation_over_alpha_decreasing"] = _monotone_decreasing(
            [r["perturbation_over_alpha"] for r in rows])
        checks["coupling_over_alpha_decreasing"] = _monotone_decreasing(
            [r["coupling_over_alpha"] for r in rows], strict=False)
    return ScheduleResult(rows=rows, reports=reports, aborted=aborted, mode=mode,
                          coupling_checks=checks)


# ---------------------------------------------------------------------------
# two-set estimate

def check_two_set_bound(r1: SolveReport, r2: SolveReport, omega1: ConvexSet, omega2: ConvexSet,
                        psi: MonotonicityModulus, profile: ModulusProfile,
                        dual_profile: ModulusProfile, sigma: float | None = None,
                        prox: ProximitySpec | None = None) -> dict:
    """Audit ``psi(|x1 - x2|) <= eps^-1 C g*^-1(2 C^2 L delta^-1(4 L (d + r) sigma))``.

    ``x1, x2`` solve the same penalty equation on ``omega1`` and ``omega2``;
    ``C = 2 max(1, r + d)``, ``d = max dist(0, omega_i)``,
    ``r = max |x_i|``.  With ``prox`` the factor ``d + r`` inside
    ``delta^-1`` becomes ``(d + r)(f1(2r + d) + f2(2r + d))`` and ``sigma``
    is taken from ``prox``.  Saturated inverses are evaluated at their
    domain end 2 (still a valid bound) and flag the result vacuous.  The
    inverse form via ``psi^-1`` and the alternative through
    ``h = rho(t)/t`` are reported alongside.
    """
    if r1.epsilon != r2.epsilon:
        raise ValueError("both solves must use the same epsilon")
    s = omega1.space
    eps = r1.epsilon
    x1, x2 = r1.x, r2.x
    zero = np.zeros(s.dim)
    d = max(distance(zero, omega1), distance(zero, omega2))
    r = max(float(norm(x1, s)), float(norm(x2, s)))
    C = 2.0 * max(1.0, r + d)
    if prox is not None:
        sigma = prox.sigma
        factor = (d + r) * float(prox.f1_eval(2 * r + d) + prox.f2_eval(2 * r + d))
    else:
        if sigma is None:
            sigma = hausdorff(omega1, omega2)[0]
        factor = d + r
    inner = 4.0 * L_CONST * factor * sigma
    vacuous = False
    if not np.isfinite(inner):
        dinv, vacuous = 2.0, True
    else:
        try:
            dinv = float(profile.delta_inverse(inner))
        except SaturationError:
            dinv, vacuous = 2.0, True
    garg = 2.0 * C * C * L_CONST * dinv
    try:
        ginv = float(_g_inv(dual_profile, garg))
    except SaturationError:
        ginv, vacuous = 2.0, True
    try:
        hinv = float(profile.h_inverse(garg))
        alt_rhs = C * hinv / eps
    except SaturationError:
        alt_rhs = np.inf
    rhs = C * ginv / eps
    t = float(norm(x1 - x2, s))
    lhs = float(psi(t))
    return {
        "epsilon": eps, "sigma": float(sigma), "d": d, "r": r, "C": C,
        "delta_inverse": dinv, "g_argument": garg, "g_inverse": ginv,
        "lhs": lhs, "rhs": rhs, "slack": rhs - lhs,
        "distance": t, "distance_bound": float(psi.inverse(rhs)),
        "alt_rhs_h": alt_rhs,
        "vacuous": vacuous,
        "passed": bool(rhs - lhs >= -1e-9),
    }
