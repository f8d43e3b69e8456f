"""Closed convex sets with metric projection in the space's own norm.

Four variants are supported: :class:`Box`, :class:`Ball` (in the space
norm), :class:`Halfspace` ``{x : <a, x> <= b}`` and :class:`Translate`.
Projections are exact for every variant and every ``p``:

* boxes clamp componentwise (objective and constraints are separable),
* balls project radially,
* halfspaces use ``J(x - xi) = lam * a``; homogeneity of ``J^-1`` makes
  ``lam`` explicit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    L_CONST,
    ModulusProfile,
    SaturationError,
    SpaceSpec,
    as_vector,
    dual_norm,
    duality_map,
    inverse_duality_map,
    norm,
    pairing,
)

__all__ = [
    "ProjectionError",
    "ConvexSet",
    "Box",
    "Ball",
    "Halfspace",
    "Translate",
    "ProximitySpec",
    "project",
    "euclidean_project",
    "distance",
    "contains",
    "hausdorff",
    "inflate",
    "sample_points",
    "check_projection_certificate",
    "check_projection_stability",
    "check_proximity_functions",
    "set_to_dict",
    "set_from_dict",
]

MEMBER_TOL = 1e-10


class ProjectionError(RuntimeError):
    """A projection could not be computed to tolerance."""


class ConvexSet:
    """Base class; concrete variants are frozen dataclasses."""

    space: SpaceSpec

    def resolve(self) -> "ConvexSet":
        return self

    @property
    def bounded(self) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray
    space: SpaceSpec

    def __post_init__(self):
        lo = as_vector(self.lower, self.space).astype(float)
        up = as_vector(self.upper, self.space).astype(float)
        if np.any(lo > up):
            raise ValueError("box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def diameter(self) -> float:
        return float(norm(self.upper - self.lower, self.space))

    def vertices(self):
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    space: SpaceSpec

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, self.space).astype(float))
        if not (self.radius >= 0):
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """``{x : <a, x> <= b}`` with ``a`` a nonzero dual vector."""

    a: np.ndarray
    b: float
    space: SpaceSpec

    def __post_init__(self):
        a = as_vector(self.a, self.space).astype(float)
        if not np.any(a != 0):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def bounded(self) -> bool:
        return False

    @property
    def diameter(self) -> float:
        return np.inf


@dataclass(frozen=True, eq=False)
class Translate(ConvexSet):
    base: ConvexSet
    shift: np.ndarray
    space: SpaceSpec = field(default=None)

    def __post_init__(self):
        if self.space is None:
            object.__setattr__(self, "space", self.base.space)
        object.__setattr__(self, "shift", as_vector(self.shift, self.space).astype(float))

    def resolve(self) -> ConvexSet:
        base = self.base.resolve()
        s = self.shift
        if isinstance(base, Box):
            return Box(base.lower + s, base.upper + s, base.space)
        if isinstance(base, Ball):
            return Ball(base.center + s, base.radius, base.space)
        if isinstance(base, Halfspace):
            return Halfspace(base.a, base.b + float(pairing(base.a, s)), base.space)
        raise TypeError(f"cannot resolve translate of {type(base).__name__}")

    @property
    def bounded(self) -> bool:
        return self.base.bounded

    @property
    def diameter(self) -> float:
        return self.base.diameter


def _check_space(x, s: ConvexSet):
    return as_vector(x, s.space)


def project(x, omega: ConvexSet) -> np.ndarray:
    """Metric projection ``P_omega x`` in the norm of ``omega.space``.

    Vectorized over leading axes of ``x``.
    """
    x = _check_space(x, omega).astype(float)
    s = omega.space
    if isinstance(omega, Translate):
        return project(x - omega.shift, omega.base) + omega.shift
    if isinstance(omega, Box):
        return np.clip(x, omega.lower, omega.upper)
    if isinstance(omega, Ball):
        v = x - omega.center
        nv = np.asarray(norm(v, s))
        factor = np.where(nv > omega.radius, omega.radius / np.maximum(nv, 1e-300), 1.0)
        return omega.center + factor[..., None] * v
    if isinstance(omega, Halfspace):
        excess = np.asarray(pairing(omega.a, x)) - omega.b
        an = dual_norm(omega.a, s)
        lam = np.maximum(excess, 0.0) / an ** 2
        xi = x - lam[..., None] * inverse_duality_map(omega.a, s)
        resid = np.where(excess > 0, np.asarray(pairing(omega.a, xi)) - omega.b, 0.0)
        scale = np.maximum(np.maximum(1.0, abs(omega.b)), an * np.asarray(norm(x, s)))
        if np.any(np.abs(resid) > 1e-10 * scale):
            raise ProjectionError(f"halfspace projection residual {np.max(np.abs(resid)):.3e}")
        return xi
    raise TypeError(f"unsupported set {type(omega).__name__}")


def contains(x, omega: ConvexSet, tol: float = MEMBER_TOL) -> bool:
    x = _check_space(x, omega)
    return bool(norm(x - project(x, omega), omega.space) <= tol)


def distance(x, omega: ConvexSet) -> float:
    x = _check_space(x, omega)
    return float(norm(x - project(x, omega), omega.space))


def euclidean_project(x, omega: ConvexSet) -> np.ndarray:
    """Projection in the plain Euclidean norm, whatever ``omega.space`` is.

    Used by the reference VI solver; a ball defined in a p-norm is handled by
    a nested bisection on the KKT multiplier.
    """
    x = _check_space(x, omega)
    if isinstance(omega, Translate):
        return euclidean_project(x - omega.shift, omega.base) + omega.shift
    if isinstance(omega, Box):
        return np.clip(x, omega.lower, omega.upper)
    if isinstance(omega, Halfspace):
        excess = float(pairing(omega.a, x)) - omega.b
        if excess <= 0:
            return x.copy()
        return x - excess / float(omega.a @ omega.a) * omega.a
    if isinstance(omega, Ball):
        s = omega.space
        v = x - omega.center
        if norm(v, s) <= omega.radius:
            return x.copy()
        if s.is_hilbert:
            w = s.w
            if np.all(w == w[0]):
                return omega.center + omega.radius / norm(v, s) * v
        return omega.center + _euclid_to_pball(v, omega.radius, s)
    raise TypeError(f"unsupported set {type(omega).__name__}")


def _euclid_to_pball(v, R, s: SpaceSpec):
    # argmin ||v - u||_2 s.t. sum w |u|^p <= R^p ; u_i = sign(v_i) t_i with
    # t_i + lam p w_i t_i^(p-1) = |v_i|
    av = np.abs(v)
    p, w = s.p, s.w

    def t_of(lam):
        lo = np.zeros_like(av)
        hi = av.copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            over = mid + lam * p * w * mid ** (p - 1.0) > av
            hi = np.where(over, mid, hi)
            lo = np.where(over, lo, mid)
        return 0.5 * (lo + hi)

    def g(lam):
        return float(np.sum(w * t_of(lam) ** p)) - R ** p

    lo, hi = 0.0, 1.0
    while g(hi) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    t = t_of(hi)
    return np.sign(v) * t


# ---------------------------------------------------------------------------
# Hausdorff distance and perturbation generators

def _sup_dist_over(a: ConvexSet, b: ConvexSet):
    """(upper bound on sup_{x in a} d(x, b), exact flag)."""
    s = a.space
    if isinstance(a, Box) and isinstance(b, Box):
        gap = np.maximum.reduce([b.lower - a.lower, a.upper - b.upper, np.zeros(s.dim)])
        return float(norm(gap, s)), True
    if isinstance(a, Box) and s.dim <= 16:
        # d(., b) is convex so its sup over a box sits at a vertex
        return max(distance(v, b) for v in a.vertices()), True
    if isinstance(a, Ball):
        if isinstance(b, Ball):
            return max(float(norm(a.center - b.center, s)) + a.radius - b.radius, 0.0), True
        # d(., b) is 1-Lipschitz
        return distance(a.center, b) + a.radius, False
    if isinstance(a, Halfspace):
        if isinstance(b, Halfspace):
            na = dual_norm(a.a, s)
            nb = dual_norm(b.a, s)
            if np.allclose(a.a / na, b.a / nb, rtol=0, atol=1e-14):
                return max(a.b / na - b.b / nb, 0.0), True
        return np.inf, False
    if isinstance(a, Box):
        return max(distance(v, b) for v in (a.lower, a.upper)) + a.diameter, False
    return np.inf, False


def hausdorff(s1: ConvexSet, s2: ConvexSet):
    """Hausdorff distance ``H(s1, s2)`` as ``(value, exact)``.

    Box/Box, Ball/Ball and parallel Halfspace pairs are exact; other pairs
    get a certified upper bound flagged ``exact=False``.
    """
    if s1.space != s2.space:
        raise ValueError("sets live in different spaces")
    a, b = s1.resolve(), s2.resolve()
    v1, e1 = _sup_dist_over(a, b)
    v2, e2 = _sup_dist_over(b, a)
    return max(v1, v2), bool(e1 and e2)


def inflate(omega: ConvexSet, sigma: float, mode: str = "outward") -> ConvexSet:
    """Perturbed set with ``H(omega, result) <= sigma``."""
    sigma = float(sigma)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if mode not in ("outward", "inward"):
        raise ValueError(f"unknown inflate mode {mode!r}")
    sign = 1.0 if mode == "outward" else -1.0
    s = omega.space
    if sigma == 0:
        return omega
    if isinstance(omega, Translate):
        return Translate(inflate(omega.base, sigma, mode), omega.shift, s)
    if isinstance(omega, Ball):
        r = omega.radius + sign * sigma
        if r < 0:
            raise ValueError("inward inflation empties the ball")
        return Ball(omega.center, r, s)
    if isinstance(omega, Box):
        per = sigma / float(np.sum(s.w)) ** (1.0 / s.p)
        lo, up = omega.lower - sign * per, omega.upper + sign * per
        if np.any(lo > up):
            raise ValueError("inward inflation empties the box")
        return Box(lo, up, s)
    if isinstance(omega, Halfspace):
        return Halfspace(omega.a, omega.b + sign * sigma * dual_norm(omega.a, s), s)
    raise TypeError(f"unsupported set {type(omega).__name__}")


# ---------------------------------------------------------------------------
# sampling and audits

def sample_points(omega: ConvexSet, n: int, rng, around=None, scale: float = 1.0) -> np.ndarray:
    """Seeded sample of ``n`` points of ``omega``: an interior/boundary mix.

    Boundary points are projections of random exterior points, which places
    some of them near any given point's projection.  For unbounded sets the
    sample is localized to a region of size ``scale`` around ``around``.
    """
    s = omega.space
    res = omega.resolve()
    n_in = n - n // 2
    n_bd = n // 2
    if isinstance(res, Box):
        inner = rng.uniform(res.lower, res.upper, size=(n_in, s.dim))
        center = 0.5 * (res.lower + res.upper)
        spread = np.maximum(res.upper - res.lower, 1e-12)
    elif isinstance(res, Ball):
        v = rng.standard_normal((n_in, s.dim))
        v /= np.maximum(norm(v, s), 1e-300)[:, None]
        inner = res.center + v * (res.radius * rng.uniform(0, 1, n_in) ** (1.0 / s.dim))[:, None]
        center = res.center
        spread = np.full(s.dim, max(res.radius, 1e-12))
    else:
        center = np.zeros(s.dim) if around is None else np.asarray(around, float)
        spread = np.full(s.dim, scale)
        raw = center + rng.uniform(-1, 1, size=(n_in, s.dim)) * spread
        inner = project(raw, res) if n_in else np.empty((0, s.dim))
        # pull projected points back inside by a random convex combination
        anchor = project(center, res)
        lam = rng.uniform(0, 1, size=(n_in, 1))
        inner = lam * inner + (1 - lam) * anchor
    base = center if around is None else np.asarray(around, float)
    outer = base + rng.standard_normal((n_bd, s.dim)) * spread * 1.5
    boundary = project(outer, res) if n_bd else np.empty((0, s.dim))
    return np.vstack([inner, boundary])


def check_projection_certificate(x, xbar, omega: ConvexSet, n_samples: int = 1000,
                                 seed: int = 0, points=None) -> dict:
    """Audit ``xbar`` as the projection of ``x`` on ``omega``.

    For sampled ``xi`` in ``omega`` reports the worst slack of

    * ``<J(x - xbar), x - xi> - ||x - xbar||^2 >= 0``  (characterization),
    * ``<J(x - xbar), xbar - xi> >= 0``,

    and the spread of ``P(xi) - Q(xi)`` around ``||x - xbar||^2``.
    """
    s = omega.space
    x = as_vector(x, s)
    xbar = as_vector(xbar, s)
    if points is None:
        rng = np.random.default_rng(seed)
        pts = sample_points(omega, n_samples, rng, around=xbar, scale=max(1.0, float(norm(x - xbar, s))))
    else:
        pts = np.atleast_2d(as_vector(points, s))
    jd = duality_map(x - xbar, s)
    d = float(norm(x - xbar, s)) ** 2
    P = (x - pts) @ jd
    Q = (xbar - pts) @ jd
    char_slack = P - d
    var_slack = Q
    const_err = float(np.max(np.abs(P - Q - d))) if len(pts) else 0.0
    scale = max(1.0, d)
    worst_char = float(np.min(char_slack)) if len(pts) else 0.0
    worst_var = float(np.min(var_slack)) if len(pts) else 0.0
    return {
        "n_points": int(len(pts)),
        "member": contains(xbar, omega, tol=1e-9 * max(1.0, float(norm(xbar, s)))),
        "d": d,
        "worst_characterization_slack": worst_char,
        "worst_variational_slack": worst_var,
        "worst_slack": min(worst_char, worst_var),
        "constant_difference_error": const_err,
        "constant_difference_ok": const_err <= 1e-9 * scale,
    }


def check_projection_stability(x, s1: ConvexSet, s2: ConvexSet, profile: ModulusProfile,
                               sigma: float | None = None) -> dict:
    """Audit ``||P1 x - P2 x|| <= C delta^-1(4 L C1 sigma)`` for two sets at
    Hausdorff distance ``sigma``.

    ``C = 2 max(1, |x - P1x|, |x - P2x|)`` and ``C1 = 2 max(|x - P1x|, |x - P2x|)``,
    both used exactly as stated.  When the ``delta^-1`` argument exceeds
    ``delta(2)`` the inverse is evaluated at its domain end 2 and the bound
    is flagged vacuous.
    """
    s = s1.space
    x = as_vector(x, s)
    if sigma is None:
        sigma, exact = hausdorff(s1, s2)
    else:
        exact = None
    p1, p2 = project(x, s1), project(x, s2)
    lhs = float(norm(p1 - p2, s))
    r1, r2 = float(norm(x - p1, s)), float(norm(x - p2, s))
    C = 2.0 * max(1.0, r1, r2)
    C1 = 2.0 * max(r1, r2)
    arg = 4.0 * L_CONST * C1 * sigma
    vacuous = False
    if not np.isfinite(arg):
        inv, vacuous = 2.0, True
    else:
        try:
            inv = float(profile.delta_inverse(arg))
        except SaturationError:
            inv, vacuous = 2.0, True
    rhs = C * inv
    return {
        "sigma": float(sigma), "sigma_exact": exact,
        "lhs": lhs, "rhs": rhs, "slack": rhs - lhs,
        "C": C, "C1": C1, "vacuous": vacuous,
        "passed": rhs - lhs >= -1e-9,
    }


@dataclass(frozen=True)
class ProximitySpec:
    """``sigma`` with growth functions ``f1, f2`` given as ``(name, params)``.

    Supported names: ``"constant"`` ``(c,)`` and ``"affine"`` ``(a, b)`` for
    ``t -> a + b t``.
    """

    sigma: float
    f1: tuple = ("constant", (1.0,))
    f2: tuple = ("constant", (1.0,))

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        for f in (self.f1, self.f2):
            self._fn(f)(0.0)

    @staticmethod
    def _fn(entry):
        name, params = entry
        params = tuple(float(v) for v in params)
        if name == "constant":
            (c,) = params
            if c < 0:
                raise ValueError("proximity function must be nonnegative")
            return lambda t: c + 0.0 * np.asarray(t)
        if name == "affine":
            a, b = params
            if a < 0 or b < 0:
                raise ValueError("affine proximity function needs a, b >= 0")
            return lambda t: a + b * np.asarray(t)
        raise ValueError(f"unknown proximity function {name!r}")

    def f1_eval(self, t):
        return self._fn(self.f1)(t)

    def f2_eval(self, t):
        return self._fn(self.f2)(t)


def check_proximity_functions(s1: ConvexSet, s2: ConvexSet, prox: ProximitySpec,
                              n_samples: int = 1000, seed: int = 0,
                              around=None, scale: float = 1.0) -> dict:
    """Audit ``d(x, s1) <= sigma f1(|x|)`` on ``s2`` and
    ``d(x, s2) <= sigma f2(|x|)`` on ``s1`` by sampling."""
    s = s1.space
    rng = np.random.default_rng(seed)

    def worst(pts, other, f):
        worst_ratio = 0.0
        for x in pts:
            d = distance(x, other)
            bound = prox.sigma * float(f(float(norm(x, s))))
            if d <= 1e-12:
                continue
            worst_ratio = max(worst_ratio, d / bound if bound > 0 else np.inf)
        return worst_ratio

    on2 = sample_points(s2, n_samples, rng, around=around, scale=scale)
    on1 = sample_points(s1, n_samples, rng, around=around, scale=scale)
    r1 = worst(on2, s1, prox.f1_eval)
    r2 = worst(on1, s2, prox.f2_eval)
    return {
        "worst_ratio_f1": r1,
        "worst_ratio_f2": r2,
        "passed": bool(r1 <= 1.0 + 1e-9 and r2 <= 1.0 + 1e-9),
    }


# ---------------------------------------------------------------------------
# config serialization

def set_to_dict(omega: ConvexSet) -> dict:
    if isinstance(omega, Box):
        return {"kind": "box", "lower": omega.lower.tolist(), "upper": omega.upper.tolist()}
    if isinstance(omega, Ball):
        return {"kind": "ball", "center": omega.center.tolist(), "radius": omega.radius}
    if isinstance(omega, Halfspace):
        return {"kind": "halfspace", "a": omega.a.tolist(), "b": omega.b}
    if isinstance(omega, Translate):
        return {"kind": "translate", "base": set_to_dict(omega.base), "shift": omega.shift.tolist()}
    raise TypeError(type(omega).__name__)


_SET_KEYS = {
    "box": {"lower", "upper"},
    "ball": {"center", "radius"},
    "halfspace": {"a", "b"},
    "translate": {"base", "shift"},
}


def _broadcast(v, dim):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return np.full(dim, float(arr))
    return arr


def set_from_dict(d: dict, space: SpaceSpec) -> ConvexSet:
    """Build a set from its config table; unknown keys are rejected.

    Scalars are broadcast for ``lower``, ``upper``, ``center`` and ``shift``.
    """
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _SET_KEYS:
        raise ValueError(f"set.kind must be one of {sorted(_SET_KEYS)}, got {kind!r}")
    extra = set(d) - _SET_KEYS[kind]
    missing = _SET_KEYS[kind] - set(d)
    if extra:
        raise ValueError(f"unknown key(s) for {kind} set: {sorted(extra)}")
    if missing:
        raise ValueError(f"missing key(s) for {kind} set: {sorted(missing)}")
    n = space.dim
    if kind == "box":
        return Box(_broadcast(d["lower"], n), _broadcast(d["upper"], n), space)
    if kind == "ball":
        return Ball(_broadcast(d["center"], n), float(d["radius"]), space)
    if kind == "halfspace":
        return Halfspace(np.asarray(d["a"], float), float(d["b"]), space)
    return Translate(set_from_dict(d["base"], space), _broadcast(d["shift"], n), space)


def with_space(omega: ConvexSet, space: SpaceSpec) -> ConvexSet:
    """Same set description interpreted in another space."""
    if isinstance(omega, Translate):
        return Translate(with_space(omega.base, space), omega.shift, space)
    return replace(omega, space=space)
