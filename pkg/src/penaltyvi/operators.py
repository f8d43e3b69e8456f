"""Monotone operator oracles, perturbation injectors and monotonicity audits.

An operator is a deterministic selection ``x -> z in Ax`` mapping vectors to
dual vectors.  Built-ins cover the smooth diagonal power maps, the unbounded
gradient of ``sum |x_m|^(m+1)/(m+1)``, a nonsmooth sign map, linear maps and
a degenerate operator with flat directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import SpaceSpec, as_vector, dual_norm, duality_map, norm, pairing

__all__ = [
    "DomainError",
    "MonotoneOp",
    "MonotonicityModulus",
    "OperatorPerturbation",
    "RhsPerturbation",
    "OPERATORS",
    "register_operator",
    "make_operator",
    "diagonal_power",
    "power_sum",
    "flat_power",
    "sign_shift",
    "linear",
    "constant",
    "negated",
    "diagonal_power_modulus",
    "evaluate",
    "check_monotonicity",
    "check_uniform_monotonicity",
    "fit_modulus",
    "perturb_operator",
    "perturb_rhs",
    "check_lemma2_bound",
    "check_potential_gradient",
]

CLASSES = ("monotone", "strictly_monotone", "uniformly_monotone")


class DomainError(ValueError):
    """Point outside an operator's declared domain."""


@dataclass(frozen=True)
class MonotonicityModulus:
    """Modulus ``psi`` of uniform monotonicity.

    ``normalized=False`` audits ``<z1 - z2, x1 - x2> >= psi(t)``;
    ``normalized=True`` audits the stronger-looking ``psi(t) * t`` form used
    in the two-set estimate.  ``t`` is the norm of ``x1 - x2``.
    """

    form: str = "power"
    c: float = 1.0
    s: float = 1.0
    table: tuple | None = None
    normalized: bool = True

    def __post_init__(self):
        if self.form == "power":
            if not (self.c > 0 and self.s >= 1):
                raise ValueError("power modulus needs c > 0 and s >= 1")
        elif self.form == "table":
            t, v = (np.asarray(a, float) for a in self.table)
            if t[0] != 0 or v[0] != 0 or np.any(np.diff(t) <= 0) or np.any(np.diff(v) <= 0):
                raise ValueError("tabulated modulus must start at (0, 0) and increase strictly")
        else:
            raise ValueError(f"unknown modulus form {self.form!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.form == "power":
            return self.c * t ** self.s
        tt, vv = (np.asarray(a, float) for a in self.table)
        return np.interp(t, tt, vv)

    def lower_bound(self, t):
        """Right-hand side of the audited inequality."""
        t = np.asarray(t, dtype=float)
        return self(t) * t if self.normalized else self(t)

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if self.form == "power":
            return (np.clip(v, 0, None) / self.c) ** (1.0 / self.s)
        tt, vv = (np.asarray(a, float) for a in self.table)
        if np.any(v > vv[-1]):
            return np.where(v > vv[-1], np.inf, np.interp(v, vv, tt))
        return np.interp(v, vv, tt)

    @property
    def form_name(self) -> str:
        return "psi(t)*t" if self.normalized else "psi(t)"


@dataclass(frozen=True)
class MonotoneOp:
    """Selection oracle of a monotone operator.

    ``domain`` is ``None`` (whole space) or a ``(lower, upper)`` pair of
    arrays describing a box.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "custom"
    cls: str = "monotone"
    psi: MonotonicityModulus | None = None
    potential: Callable[[np.ndarray], float] | None = None
    domain: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ValueError(f"class must be one of {CLASSES}")
        if self.domain is not None:
            lo, up = (np.asarray(a, float) for a in self.domain)
            object.__setattr__(self, "domain", (lo, up))

    def in_domain(self, x) -> bool:
        if self.domain is None:
            return True
        lo, up = self.domain
        return bool(np.all(x >= lo) and np.all(x <= up))

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(op: MonotoneOp, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != op.dim:
        raise ValueError(f"dimension mismatch: operator dim {op.dim}, got {x.shape}")
    if op.domain is not None:
        lo, up = op.domain
        if np.any(x < lo) or np.any(x > up):
            raise DomainError(f"{op.name}: point outside the declared domain box")
    z = op.fn(x)
    if not np.all(np.isfinite(z)):
        raise FloatingPointError(f"{op.name}: non-finite output")
    return z


# ---------------------------------------------------------------------------
# built-in operators

def _spow(x, e):
    return np.sign(x) * np.abs(x) ** e


def diagonal_power(dim: int, s: float = 2.0, c: float = 1.0) -> MonotoneOp:
    """``(Ax)_i = c x_i |x_i|^(s-1)``; gradient of ``c sum |x_i|^(s+1)/(s+1)``."""
    s, c = float(s), float(c)
    return MonotoneOp(
        fn=lambda x: c * _spow(x, s),
        dim=dim, name="diagonal_power", cls="uniformly_monotone",
        potential=lambda x: c * float(np.sum(np.abs(x) ** (s + 1))) / (s + 1),
        params={"s": s, "c": c},
    )


def power_sum(dim: int) -> MonotoneOp:
    """Component ``m`` (1-based) is ``x_m |x_m|^(m-1)``: the gradient of
    ``sum_m |x_m|^(m+1)/(m+1)``, monotone but unbounded on bounded sets as
    ``dim`` grows."""
    m = np.arange(1, dim + 1, dtype=float)
    return MonotoneOp(
        fn=lambda x: _spow(x, m),
        dim=dim, name="power_sum", cls="strictly_monotone",
        potential=lambda x: float(np.sum(np.abs(x) ** (m + 1) / (m + 1))),
    )


def flat_power(dim: int, s: float = 2.0, flat=(0,), c: float = 1.0) -> MonotoneOp:
    """Diagonal power map with zero output on the ``flat`` coordinates.

    Monotone but not strictly monotone: every pair differing only in flat
    coordinates has zero pairing.
    """
    mask = np.ones(dim)
    mask[list(flat)] = 0.0
    s, c = float(s), float(c)
    return MonotoneOp(
        fn=lambda x: c * mask * _spow(x, s),
        dim=dim, name="flat_power", cls="monotone",
        potential=lambda x: c * float(np.sum(mask * np.abs(x) ** (s + 1))) / (s + 1),
        params={"s": s, "c": c, "flat": tuple(int(i) for i in flat)},
    )


def sign_shift(dim: int, c: float = 0.5) -> MonotoneOp:
    """``(Ax)_i = x_i + c sign(x_i)``, the subgradient of
    ``sum x_i^2/2 + c |x_i|``; the selection at a kink is 0."""
    c = float(c)
    return MonotoneOp(
        fn=lambda x: x + c * np.sign(x),
        dim=dim, name="sign_shift", cls="uniformly_monotone",
        potential=lambda x: float(0.5 * np.sum(x * x) + c * np.sum(np.abs(x))),
        params={"c": c},
    )


def linear(matrix, offset=None) -> MonotoneOp:
    """``Ax = Mx + b``; monotone iff the symmetric part of ``M`` is PSD."""
    M = np.asarray(matrix, dtype=float)
    b = np.zeros(M.shape[0]) if offset is None else np.asarray(offset, float)
    sym = 0.5 * (M + M.T)
    eig = np.linalg.eigvalsh(sym)
    if eig[0] < -1e-12:
        raise ValueError("linear operator is not monotone (symmetric part indefinite)")
    cls = "uniformly_monotone" if eig[0] > 0 else "monotone"
    pot = (lambda x: float(0.5 * x @ M @ x + b @ x)) if np.allclose(M, M.T) else None
    return MonotoneOp(
        fn=lambda x: x @ M.T + b, dim=M.shape[0], name="linear", cls=cls,
        potential=pot, params={"matrix": M.tolist(), "offset": b.tolist()},
    )


def constant(value) -> MonotoneOp:
    v = np.asarray(value, dtype=float)
    return MonotoneOp(
        fn=lambda x: np.broadcast_to(v, np.shape(x)).copy(), dim=len(v),
        name="constant", cls="monotone", potential=lambda x: float(v @ x),
        params={"value": v.tolist()},
    )


def negated(op: MonotoneOp) -> MonotoneOp:
    """``-A``; anti-monotone, used as a negative control."""
    return MonotoneOp(
        fn=lambda x: -op.fn(x), dim=op.dim, name=f"negated_{op.name}",
        cls="monotone", domain=op.domain, params=dict(op.params),
    )


OPERATORS: dict[str, Callable[..., MonotoneOp]] = {
    "diagonal_power": diagonal_power,
    "power_sum": power_sum,
    "flat_power": flat_power,
    "sign_shift": sign_shift,
    "linear": lambda dim, matrix, offset=None: linear(matrix, offset),
    "constant": lambda dim, value: constant(value),
}


def register_operator(name: str, factory: Callable[..., MonotoneOp]) -> None:
    """Make a custom operator available to configs under ``name``.

    ``factory`` is called as ``factory(dim, **params)``.
    """
    OPERATORS[name] = factory


def make_operator(name: str, dim: int, params: dict | None = None,
                  negate: bool = False, domain=None) -> MonotoneOp:
    if name not in OPERATORS:
        raise ValueError(f"unknown operator {name!r}; known: {sorted(OPERATORS)}")
    op = OPERATORS[name](dim, **(params or {}))
    if op.dim != dim:
        raise ValueError(f"operator {name!r} has dim {op.dim}, space has {dim}")
    if domain is not None:
        op = MonotoneOp(op.fn, op.dim, op.name, op.cls, op.psi, op.potential, domain, op.params)
    return negated(op) if negate else op


def diagonal_power_modulus(space: SpaceSpec, s: float = 2.0, c: float = 1.0,
                           normalized: bool = True) -> MonotonicityModulus:
    """Analytic modulus for :func:`diagonal_power` with unit weights.

    Uses ``(a|a|^(s-1) - b|b|^(s-1))(a - b) >= 2^(1-s)|a - b|^(s+1)`` and
    ``||d||_(s+1)^(s+1) >= n^min(0, 1-(s+1)/p) ||d||_p^(s+1)``.
    """
    if space.weights is not None:
        raise ValueError("analytic modulus only for unit weights; use fit_modulus")
    n, p = space.dim, space.p
    k = c * 2.0 ** (1.0 - s) * n ** min(0.0, 1.0 - (s + 1.0) / p)
    if normalized:
        return MonotonicityModulus("power", c=k, s=s, normalized=True)
    return MonotonicityModulus("power", c=k, s=s + 1.0, normalized=False)


# ---------------------------------------------------------------------------
# audits

def _region_bounds(region, dim):
    if region is None:
        return -np.ones(dim), np.ones(dim)
    if hasattr(region, "lower"):
        return np.asarray(region.lower, float), np.asarray(region.upper, float)
    lo, up = region
    return np.broadcast_to(np.asarray(lo, float), (dim,)), np.broadcast_to(np.asarray(up, float), (dim,))


def _sample_pairs(lo, up, n, rng):
    dim = len(lo)
    x1 = rng.uniform(lo, up, size=(n, dim))
    x2 = rng.uniform(lo, up, size=(n, dim))
    # a quarter of the pairs are close, a quarter differ in one coordinate
    q = n // 4
    step = rng.standard_normal((q, dim)) * (10.0 ** rng.uniform(-6, -1, size=(q, 1)))
    x2[:q] = np.clip(x1[:q] + step * (up - lo), lo, up)
    idx = rng.integers(0, dim, size=q)
    x2[q:2 * q] = x1[q:2 * q]
    x2[q + np.arange(q), idx] = rng.uniform(lo[idx], up[idx])
    return x1, x2


def check_monotonicity(op: MonotoneOp, n_pairs: int = 10_000, seed: int = 0,
                       region=None) -> dict:
    """Worst ``<A x1 - A x2, x1 - x2>`` over seeded pairs in a box region."""
    lo, up = _region_bounds(region, op.dim)
    rng = np.random.default_rng(seed)
    x1, x2 = _sample_pairs(lo, up, int(n_pairs), rng)
    val = pairing(evaluate(op, x1) - evaluate(op, x2), x1 - x2)
    worst = float(np.min(val))
    return {
        "operator": op.name, "n_pairs": int(n_pairs),
        "worst_pairing": worst, "passed": worst >= -1e-9,
    }


def check_uniform_monotonicity(op: MonotoneOp, psi: MonotonicityModulus, space: SpaceSpec,
                               n_pairs: int = 10_000, seed: int = 0, region=None) -> dict:
    """Worst slack of ``<A x1 - A x2, x1 - x2> - psi-form(||x1 - x2||)``."""
    lo, up = _region_bounds(region, op.dim)
    rng = np.random.default_rng(seed)
    x1, x2 = _sample_pairs(lo, up, int(n_pairs), rng)
    val = pairing(evaluate(op, x1) - evaluate(op, x2), x1 - x2)
    t = norm(x1 - x2, space)
    slack = val - psi.lower_bound(t)
    worst = float(np.min(slack))
    return {
        "operator": op.name, "form": psi.form_name, "n_pairs": int(n_pairs),
        "worst_slack": worst, "passed": worst >= -1e-9,
    }


def fit_modulus(op: MonotoneOp, space: SpaceSpec, s: float, n_pairs: int = 10_000,
                seed: int = 0, region=None, normalized: bool = True,
                safety: float = 0.5) -> MonotonicityModulus:
    """Fit ``psi(t) = c t^s`` as ``safety`` times the smallest observed ratio.

    Re-audit the result with :func:`check_uniform_monotonicity` on a fresh
    seed before relying on it.
    """
    lo, up = _region_bounds(region, op.dim)
    rng = np.random.default_rng(seed)
    x1, x2 = _sample_pairs(lo, up, int(n_pairs), rng)
    val = pairing(evaluate(op, x1) - evaluate(op, x2), x1 - x2)
    t = norm(x1 - x2, space)
    keep = t > 1e-8
    power = s + 1.0 if normalized else s
    ratio = val[keep] / t[keep] ** power
    c = float(np.min(ratio)) * safety
    if not c > 0:
        raise ValueError(f"{op.name}: no positive modulus fits (min ratio {np.min(ratio):.3g})")
    return MonotonicityModulus("power", c=c, s=s, normalized=normalized)


def check_potential_gradient(op: MonotoneOp, points, h: float = 1e-6) -> float:
    """Largest relative error between ``op`` and central differences of its
    potential over ``points``."""
    if op.potential is None:
        raise ValueError(f"{op.name} has no potential")
    worst = 0.0
    for x in np.atleast_2d(points):
        g = np.empty(op.dim)
        for i in range(op.dim):
            e = np.zeros(op.dim)
            e[i] = h * max(1.0, abs(x[i]))
            g[i] = (op.potential(x + e) - op.potential(x - e)) / (2 * e[i])
        z = evaluate(op, x)
        worst = max(worst, float(np.linalg.norm(g - z) / max(np.linalg.norm(z), 1e-12)))
    return worst


def check_lemma2_bound(op: MonotoneOp, space: SpaceSpec, x0, r0: float,
                       n_samples: int = 10_000, seed: int = 0, region=None,
                       safety: float = 1.1) -> dict:
    """Audit ``<F x, x - x0> >= r0 ||F x||_* - c0 (||x - x0|| + r0)``.

    ``c0`` is ``safety`` times the largest ``||F xi||_*`` found by sampling
    the ball of radius ``r0`` around ``x0`` (a lower estimate of the sup).
    """
    x0 = as_vector(x0, space)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_samples, space.dim))
    v /= norm(v, space)[:, None]
    radii = r0 * np.concatenate([np.ones(n_samples // 2),
                                 rng.uniform(0, 1, n_samples - n_samples // 2) ** (1 / space.dim)])
    xi = x0 + v * radii[:, None]
    c0_est = float(np.max(dual_norm(evaluate(op, xi), space)))
    c0 = safety * c0_est

    lo, up = _region_bounds(region, op.dim)
    x = rng.uniform(lo, up, size=(n_samples, space.dim))
    F = evaluate(op, x)
    lhs = pairing(F, x - x0)
    rhs = r0 * dual_norm(F, space) - c0 * (norm(x - x0, space) + r0)
    slack = lhs - rhs
    worst = float(np.min(slack))
    return {
        "operator": op.name, "r0": float(r0), "c0_sampled": c0_est, "c0_used": c0,
        "worst_slack": worst, "passed": worst >= -1e-9,
    }


# ---------------------------------------------------------------------------
# perturbations

def _gamma_fn(gamma):
    name, params = gamma
    params = tuple(float(v) for v in params)
    if name == "constant":
        (a,) = params
        return a, 0.0
    if name == "affine":
        a, b = params
        return a, b
    raise ValueError(f"unknown gamma {name!r}")


def _unit_dual(v, space):
    v = np.asarray(v, float)
    n = dual_norm(v, space)
    if n == 0:
        raise ValueError("direction must be nonzero")
    return v / n


@dataclass(frozen=True)
class OperatorPerturbation:
    """``A^h x = A x + h gamma(||x||) u(x)`` with ``||u(x)||_* <= 1``.

    ``gamma`` is ``("constant", (a,))`` or ``("affine", (a, b))``.  Modes:

    ``constant``
        ``u`` is a fixed seeded unit dual vector.
    ``field``
        ``u(x)`` is a smooth seeded field normalized to unit dual norm; the
        result need not be monotone.
    ``monotone_safe``
        the added term is ``h (b J(x) + a u0)``: monotone, and within the
        ``h gamma`` envelope.
    """

    h: float
    gamma: tuple = ("constant", (1.0,))
    mode: str = "monotone_safe"
    seed: int = 0
    direction: tuple | None = None

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("h must be nonnegative")
        if self.mode not in ("constant", "field", "monotone_safe"):
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        a, b = _gamma_fn(self.gamma)
        if a < 0 or b < 0:
            raise ValueError("gamma must be nonnegative and nondecreasing")


def perturb_operator(op: MonotoneOp, pert: OperatorPerturbation, space: SpaceSpec) -> MonotoneOp:
    if pert.h == 0:
        return op
    a, b = _gamma_fn(pert.gamma)
    rng = np.random.default_rng(pert.seed)
    if pert.direction is not None:
        u0 = _unit_dual(pert.direction, space)
    else:
        u0 = _unit_dual(rng.standard_normal(space.dim), space)
    h = float(pert.h)

    if pert.mode == "constant":
        def fn(x):
            g = a + b * np.asarray(norm(x, space))
            return op.fn(x) + h * g[..., None] * u0
        cls = op.cls
    elif pert.mode == "field":
        W = rng.standard_normal((space.dim, space.dim))
        c = rng.uniform(0, 2 * np.pi, space.dim)

        def fn(x):
            v = np.sin(np.asarray(x) @ W.T + c) + 1e-3 * u0
            v = v / np.asarray(dual_norm(v, space))[..., None]
            g = a + b * np.asarray(norm(x, space))
            return op.fn(x) + h * g[..., None] * v
        cls = "monotone"
    else:
        def fn(x):
            return op.fn(x) + h * (b * duality_map(x, space) + a * u0)
        cls = op.cls

    return MonotoneOp(fn=fn, dim=op.dim, name=f"{op.name}+h", cls=cls, psi=op.psi,
                      domain=op.domain, params={**op.params, "h": h, "mode": pert.mode})


@dataclass(frozen=True)
class RhsPerturbation:
    """``f^omega = f + omega * u`` with ``u`` a unit dual vector.

    ``direction`` fixes ``u``; otherwise it is drawn from ``seed``.
    ``sign`` is ``+1`` or ``-1`` and lets schedules alternate the direction.
    """

    omega: float
    direction: tuple | None = None
    seed: int = 0
    sign: float = 1.0

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")

    def unit_direction(self, space: SpaceSpec) -> np.ndarray:
        if self.direction is not None:
            u = _unit_dual(self.direction, space)
        else:
            u = _unit_dual(np.random.default_rng(self.seed).standard_normal(space.dim), space)
        return self.sign * u


def perturb_rhs(f, pert: RhsPerturbation, space: SpaceSpec) -> np.ndarray:
    f = as_vector(f, space)
    if pert.omega == 0:
        return f.copy()
    return f + pert.omega * pert.unit_direction(space)
