"""Finite-dimensional weighted l^p geometry.

Norms, the dual pairing, the normalized duality mapping ``J`` and numerical
moduli of convexity and smoothness.  Vectors are plain 1-D numpy arrays; a
:class:`SpaceSpec` carries the exponent and optional quadrature weights.

The weighted space ``(R^n, (sum w_i |x_i|^p)^(1/p))`` is isometric to the
unweighted ``l^p_n`` via ``u_i = w_i^(1/p) x_i``, and every ``l^p_n`` with
``n >= 2`` has the same moduli as two-dimensional ``l^p``.  The numeric moduli
are therefore sampled on the two-dimensional unit sphere.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "L_CONST",
    "BISECTION_TOL",
    "SaturationError",
    "SpaceSpec",
    "ModulusProfile",
    "as_vector",
    "norm",
    "dual_norm",
    "pairing",
    "duality_map",
    "inverse_duality_map",
    "estimate_delta",
    "estimate_rho",
    "build_profile",
    "g_inverse",
    "check_J_estimates",
]

# Upper end of the admissible range 1 < L < 3.18; every bound used here
# weakens as L grows.
L_CONST = 3.18
BISECTION_TOL = 1e-10
GRID_SIZE = 64
GRID_MIN = 1e-3


class SaturationError(ValueError):
    """Raised when an inverse modulus is asked for a value beyond its range."""

    def __init__(self, value, maximum, name="g"):
        self.value = float(value)
        self.maximum = float(maximum)
        self.name = name
        super().__init__(
            f"{name}^-1 saturated: requested {self.value:.6g}, "
            f"achievable maximum {self.maximum:.6g}"
        )


@dataclass(frozen=True)
class SpaceSpec:
    """The space ``R^dim`` with norm ``(sum w_i |x_i|^p)^(1/p)``."""

    dim: int
    p: float
    weights: tuple | None = None

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        p = float(self.p)
        if not (1.0 < p < np.inf):
            raise ValueError(f"exponent must satisfy 1 < p < inf, got {self.p!r}")
        object.__setattr__(self, "p", p)
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != self.dim:
                raise ValueError(f"expected {self.dim} weights, got {len(w)}")
            if not all(np.isfinite(v) and v > 0 for v in w):
                raise ValueError("weights must be finite and strictly positive")
            object.__setattr__(self, "weights", w)

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def w(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.dim)
        return np.asarray(self.weights)

    @property
    def is_hilbert(self) -> bool:
        return self.p == 2.0

    def dual(self) -> "SpaceSpec":
        """The dual space; its norm is :func:`dual_norm` of this space."""
        if self.weights is None:
            return SpaceSpec(self.dim, self.q)
        return SpaceSpec(self.dim, self.q, tuple(self.w ** (1.0 - self.q)))

    def zero(self) -> np.ndarray:
        return np.zeros(self.dim)


def as_vector(x, s: SpaceSpec) -> np.ndarray:
    """Validate ``x`` (or a stack of vectors along the last axis) for ``s``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != s.dim:
        raise ValueError(f"dimension mismatch: expected {s.dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    return arr


def _pnorm(x, p, w):
    # scale by the max entry so large exponents do not overflow
    a = np.abs(x)
    m = np.max(a, axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    s = np.sum(w * (a / safe) ** p, axis=-1) ** (1.0 / p)
    return s * m[..., 0]


def norm(x, s: SpaceSpec):
    """Weighted p-norm; vectorized over leading axes."""
    return _pnorm(as_vector(x, s), s.p, s.w)


def dual_norm(y, s: SpaceSpec):
    """Norm of the dual space, ``sup{<y, x> : ||x|| <= 1}``."""
    return _pnorm(as_vector(y, s), s.q, s.w ** (1.0 - s.q))


def pairing(y, x) -> float:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape[-1] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: {y.shape} vs {x.shape}")
    return np.sum(y * x, axis=-1)


def _signed_power(x, e):
    # x |x|^e with the convention 0 |0|^e = 0 for e > -1
    a = np.abs(x)
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = np.sign(x[nz]) * a[nz] ** (e + 1.0)
    return out


def duality_map(x, s: SpaceSpec) -> np.ndarray:
    """Normalized duality mapping ``J``.

    ``Jx = ||x||^(2-p) (w_i x_i |x_i|^(p-2))_i`` so that ``<Jx, x> = ||x||^2``
    and ``||Jx||_* = ||x||``.  ``J(0) = 0``.
    """
    x = as_vector(x, s)
    if s.is_hilbert and s.weights is None:
        return x.copy()
    nx = np.atleast_1d(norm(x, s))
    scale = np.zeros_like(nx)
    pos = nx > 0
    scale[pos] = nx[pos] ** (2.0 - s.p)
    out = s.w * _signed_power(x, s.p - 2.0) * scale[..., None]
    return out.reshape(x.shape)


def inverse_duality_map(y, s: SpaceSpec) -> np.ndarray:
    """Inverse of :func:`duality_map`; the duality mapping of the dual space."""
    y = as_vector(y, s)
    if s.is_hilbert and s.weights is None:
        return y.copy()
    ny = np.atleast_1d(dual_norm(y, s))
    scale = np.zeros_like(ny)
    pos = ny > 0
    scale[pos] = ny[pos] ** (2.0 - s.q)
    out = s.w ** (1.0 - s.q) * _signed_power(y, s.q - 2.0) * scale[..., None]
    return out.reshape(y.shape)


# ---------------------------------------------------------------------------
# moduli of convexity and smoothness

def _unit_circle(theta, p):
    v = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return v / _pnorm(v, p, 1.0)[..., None]


def _delta_at(theta, eps, p, n_bisect=100):
    """For each x = u(theta), the value 1 - ||(x+y)/2|| where y = u(phi) is the
    first point counter-clockwise from x with ||x - y|| = eps."""
    theta = np.asarray(theta, dtype=float)
    x = _unit_circle(theta, p)
    lo = theta.copy()
    hi = theta + np.pi
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        d = _pnorm(x - _unit_circle(mid, p), p, 1.0)
        below = d < eps
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    y = _unit_circle(0.5 * (lo + hi), p)
    return 1.0 - _pnorm(0.5 * (x + y), p, 1.0)


def _delta_hilbert(eps):
    eps = np.asarray(eps, dtype=float)
    return 1.0 - np.sqrt(np.clip(1.0 - eps ** 2 / 4.0, 0.0, None))


def _rho_hilbert(tau):
    return np.sqrt(1.0 + np.asarray(tau, dtype=float) ** 2) - 1.0


def _zoom_minimize(fn, center, width, rounds=4, points=64):
    # deterministic local descent: repeatedly resample a shrinking window
    # around the incumbent
    best_t, best_v = center, float(fn(np.array([center]))[0])
    for _ in range(rounds):
        t = best_t + np.linspace(-width, width, points)
        v = fn(t)
        i = int(np.argmin(v))
        if v[i] < best_v:
            best_t, best_v = float(t[i]), float(v[i])
        width *= 4.0 / points
    return best_v


def estimate_delta(s: SpaceSpec, eps: float, n_samples: int = 2000, seed: int = 0) -> float:
    """Sampled modulus of convexity ``delta_B(eps)``.

    Draws ``n_samples`` seeded points on the unit sphere, pairs each with the
    sphere point at distance ``eps`` and refines the worst pair by a local
    zoom search.  The result is an upper bound on the true infimum; for
    ``p = 2`` the closed form ``1 - sqrt(1 - eps^2/4)`` is returned.
    """
    eps = float(eps)
    if not (0.0 < eps <= 2.0):
        raise ValueError(f"eps must lie in (0, 2], got {eps}")
    if s.is_hilbert:
        return float(_delta_hilbert(eps))
    return _delta_numeric(s.p, eps, int(n_samples), int(seed))


def _delta_numeric(p, eps, n_samples, seed):
    if eps >= 2.0:
        # diametral pairs y = -x realize 1 - 0
        return 1.0
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_samples)
    vals = _delta_at(theta, eps, p)
    i = int(np.argmin(vals))
    refined = _zoom_minimize(
        lambda t: _delta_at(t, eps, p), theta[i], 2.0 * np.pi / n_samples * 4
    )
    return float(max(min(vals[i], refined), 0.0))


def _rho_at(theta, phi, tau, p):
    x = _unit_circle(theta, p)
    y = _unit_circle(phi, p)
    return 0.5 * (_pnorm(x + tau * y, p, 1.0) + _pnorm(x - tau * y, p, 1.0)) - 1.0


def estimate_rho(s: SpaceSpec, tau: float, n_samples: int = 2000, seed: int = 0) -> float:
    """Sampled modulus of smoothness ``rho_B(tau)`` (a lower bound on the
    supremum); closed form ``sqrt(1 + tau^2) - 1`` for ``p = 2``."""
    tau = float(tau)
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    if tau == 0.0:
        return 0.0
    if s.is_hilbert:
        return float(_rho_hilbert(tau))
    return _rho_numeric(s.p, tau, int(n_samples), int(seed))


def _rho_numeric(p, tau, n_samples, seed):
    rng = np.random.default_rng(seed)
    # the symmetric configurations (axes, diagonals) hold the extremizers
    # of l^p; random pairs cover the rest
    sym = np.arange(8) * (np.pi / 4.0)
    st, sp = (a.ravel() for a in np.meshgrid(sym, sym, indexing="ij"))
    theta = np.concatenate([st, rng.uniform(0.0, 2.0 * np.pi, size=n_samples)])
    phi = np.concatenate([sp, rng.uniform(0.0, 2.0 * np.pi, size=n_samples)])
    vals = _rho_at(theta, phi, tau, p)
    i = int(np.argmax(vals))
    t0, f0 = theta[i], phi[i]
    width = 2.0 * np.pi / np.sqrt(n_samples) * 2
    best = vals[i]
    # coordinate-wise zoom ascent in (theta, phi)
    for _ in range(6):
        grid = np.linspace(-width, width, 33)
        tt, ff = np.meshgrid(t0 + grid, f0 + grid, indexing="ij")
        v = _rho_at(tt.ravel(), ff.ravel(), tau, p)
        j = int(np.argmax(v))
        if v[j] > best:
            best, t0, f0 = v[j], tt.ravel()[j], ff.ravel()[j]
        width *= 0.25
    return float(max(best, 0.0))


@dataclass(frozen=True)
class ModulusProfile:
    """Tabulated moduli of one space.

    ``g = delta/eps`` is stored on a geometric grid on ``[GRID_MIN, 2]`` after
    monotone rearrangement, so ``delta = eps * g`` is increasing as well.
    ``rho`` is stored on ``[0, rho_max]`` and evaluated with a lower
    interpolant that is valid for convex functions.
    """

    space: SpaceSpec
    mode: str
    sample_count: int
    eps_grid: np.ndarray = field(repr=False)
    g_grid: np.ndarray = field(repr=False)
    tau_grid: np.ndarray = field(repr=False)
    rho_grid: np.ndarray = field(repr=False)
    c1: float = 0.0
    c2: float = 0.25
    gamma: float = 1.0

    # -- modulus of convexity ------------------------------------------------
    def g(self, eps):
        eps = np.asarray(eps, dtype=float)
        if self.mode == "analytic":
            out = np.zeros_like(eps)
            pos = eps > 0
            out[pos] = _delta_hilbert(eps[pos]) / eps[pos]
            return out
        e0, e1 = self.eps_grid[0], self.eps_grid[1]
        g0, g1 = self.g_grid[0], self.g_grid[1]
        k = np.log(g1 / g0) / np.log(e1 / e0) if g0 > 0 else 1.0
        small = g0 * (np.clip(eps, 0.0, None) / e0) ** k
        inside = np.interp(eps, self.eps_grid, self.g_grid)
        return np.where(eps < e0, small, inside)

    def delta(self, eps):
        eps = np.asarray(eps, dtype=float)
        if self.mode == "analytic":
            return _delta_hilbert(np.clip(eps, 0.0, 2.0))
        return np.clip(eps, 0.0, None) * self.g(eps)

    def delta_inverse(self, v):
        """Inverse of ``delta`` on ``[0, 2]``; raises :class:`SaturationError`
        above ``delta(2)``."""
        v = np.asarray(v, dtype=float)
        top = float(self.delta(2.0))
        if np.any(v > top):
            raise SaturationError(np.max(v), top, name="delta")
        if self.mode == "analytic":
            return 2.0 * np.sqrt(np.clip(1.0 - (1.0 - v) ** 2, 0.0, None))
        return _bisect(self.delta, v, 0.0, 2.0)

    # -- modulus of smoothness -----------------------------------------------
    def rho(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.mode == "analytic":
            return _rho_hilbert(tau)
        tg, rg = self.tau_grid, self.rho_grid
        k = np.clip(np.searchsorted(tg, tau, side="right") - 1, 0, len(tg) - 1)
        slope = np.zeros(len(tg))
        slope[1:] = np.diff(rg) / np.diff(tg)
        # a chord of a convex function continued past its right end stays below it
        prev = np.where(k >= 1, slope[k], 0.0)
        out = np.maximum(rg[k], rg[k] + prev * (tau - tg[k]))
        # below the first positive node: rho(t)/t^2 is nonincreasing for l^p,
        # and no space is smoother than Hilbert space
        t1, r1 = tg[1], rg[1]
        low = r1 * (np.clip(tau, 0.0, None) / t1) ** 2
        out = np.where(tau < t1, low, out)
        return np.maximum(out, _rho_hilbert(np.clip(tau, 0.0, None)))

    def h(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.zeros_like(tau)
        pos = tau > 0
        out[pos] = self.rho(tau[pos]) / tau[pos]
        return out

    def h_inverse(self, v):
        v = np.asarray(v, dtype=float)
        top = float(self.h(self.tau_grid[-1]))
        if np.any(v > top):
            raise SaturationError(np.max(v), top, name="h")
        return _bisect(self.h, v, 0.0, float(self.tau_grid[-1]))

    def check_invariants(self) -> dict:
        """Audit the tabulated moduli for the shape properties of delta, rho, g."""
        eps = self.eps_grid
        d = self.delta(eps)
        gg = self.g(eps)
        r = self.rho(self.tau_grid)
        c1eg = self.c1 * eps ** self.gamma
        return {
            "delta_zero": float(self.delta(0.0)) == 0.0,
            "delta_nondecreasing": bool(np.all(np.diff(d) >= 0)),
            "delta_at_most_one": bool(np.all(d <= 1.0 + 1e-12)),
            "rho_zero": float(self.rho(0.0)) == 0.0,
            "rho_nondecreasing": bool(np.all(np.diff(r) >= 0)),
            "g_increasing": bool(np.all(np.diff(gg) >= 0)),
            "sandwich": bool(np.all(c1eg <= gg * (1 + 1e-12)) and np.all(gg <= self.c2 * eps)),
        }


def _bisect(fn, v, lo, hi, tol=BISECTION_TOL):
    """Vectorized bisection for an increasing ``fn``: smallest t with fn(t) >= v."""
    v = np.asarray(v, dtype=float)
    a = np.full(v.shape, float(lo))
    b = np.full(v.shape, float(hi))
    n = int(np.ceil(np.log2(max(hi - lo, tol) / tol))) + 1
    for _ in range(n):
        m = 0.5 * (a + b)
        below = fn(m) < v
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    out = 0.5 * (a + b)
    return np.where(v <= 0, 0.0, out)


@functools.lru_cache(maxsize=32)
def _numeric_tables(p, n_samples, seed, rho_max):
    eps_grid = np.geomspace(GRID_MIN, 2.0, GRID_SIZE)
    delta = np.array([
        _delta_numeric(p, e, n_samples, seed + i) for i, e in enumerate(eps_grid)
    ])
    g = np.maximum.accumulate(delta / eps_grid)
    tau_grid = np.concatenate([[0.0], np.geomspace(GRID_MIN, rho_max, GRID_SIZE - 1)])
    rho = np.array([0.0] + [
        _rho_numeric(p, t, n_samples, seed + 1000 + i)
        for i, t in enumerate(tau_grid[1:])
    ])
    rho = np.maximum.accumulate(rho)
    return eps_grid, g, tau_grid, rho


def build_profile(s: SpaceSpec, n_samples: int = 2000, seed: int = 0,
                  rho_max: float = 16.0) -> ModulusProfile:
    """Tabulate the moduli of ``s`` (closed forms when ``p = 2``)."""
    eps_grid = np.geomspace(GRID_MIN, 2.0, GRID_SIZE)
    if s.is_hilbert:
        mode = "analytic"
        g = _delta_hilbert(eps_grid) / eps_grid
        tau_grid = np.concatenate([[0.0], np.geomspace(GRID_MIN, rho_max, GRID_SIZE - 1)])
        rho = _rho_hilbert(tau_grid)
    else:
        mode = "numeric"
        eps_grid, g, tau_grid, rho = _numeric_tables(s.p, int(n_samples), int(seed), float(rho_max))
    # sandwich c1 eps^gamma <= g <= c2 eps with gamma from the small-eps slope
    slope = np.polyfit(np.log(eps_grid[:8]), np.log(g[:8]), 1)[0]
    gamma = max(1.0, float(slope))
    c1 = float(np.min(g / eps_grid ** gamma))
    c2 = max(0.25, float(np.max(g / eps_grid)))
    return ModulusProfile(
        space=s, mode=mode, sample_count=0 if mode == "analytic" else int(n_samples),
        eps_grid=eps_grid, g_grid=g, tau_grid=tau_grid, rho_grid=rho,
        c1=c1, c2=c2, gamma=gamma,
    )


def g_inverse(profile: ModulusProfile, v):
    """Inverse of ``g = delta/eps`` by bisection on ``[0, 2]``.

    Raises
    ------
    SaturationError
        If ``v`` exceeds ``g(2)``; the achievable maximum is attached.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("g_inverse needs v >= 0")
    top = float(profile.g(2.0))
    if np.any(v > top):
        raise SaturationError(np.max(v), top, name="g")
    out = _bisect(profile.g, v, 0.0, 2.0)
    return float(out) if out.ndim == 0 else out


def _sample_ball_pairs(s: SpaceSpec, R, n, rng):
    def ball(m):
        v = rng.standard_normal((m, s.dim))
        v /= norm(v, s)[:, None]
        return v * (R * rng.uniform(0, 1, size=m) ** (1.0 / s.dim))[:, None]

    half = n // 2
    x = ball(n)
    y = np.empty_like(x)
    y[:half] = ball(half)
    # close pairs probe the small-distance regime where the bounds are tightest
    d = rng.standard_normal((n - half, s.dim))
    d /= norm(d, s)[:, None]
    d *= 10.0 ** rng.uniform(-4, 0, size=n - half)[:, None]
    yy = x[half:] + d
    ny = norm(yy, s)
    over = ny > R
    yy[over] *= (R / ny[over])[:, None]
    y[half:] = yy
    return x, y


def check_J_estimates(s: SpaceSpec, R: float, n_samples: int = 10_000, seed: int = 0,
                      profile: ModulusProfile | None = None,
                      dual_profile: ModulusProfile | None = None,
                      pairs=None) -> dict:
    """Audit the quantitative monotonicity/continuity estimates of ``J`` on the
    ball of radius ``R``.

    For pairs ``x, y`` with norms at most ``R`` the slacks of

    * ``<Jx-Jy, x-y> >= (2L)^-1 delta(C2 ||x-y||)``
    * ``||Jx-Jy||_* <= C2 g*^-1(2 L C2 ||x-y||)``
    * ``<Jx-Jy, x-y> <= 8||x-y||^2 + 8 C1 rho(||x-y||)``
    * ``<Jx-Jy, x-y> <= Cbar1 rho(||x-y||)``

    are reported, with ``C2 = max(1, R)``, ``C1 = max(L, R)`` and
    ``Cbar1 = 8(sqrt(1+4R^2)+1) + max(L, R)``.  ``g*`` belongs to the dual
    space.  Saturated ``g*^-1`` arguments are evaluated at the domain end 2
    and counted; ``delta`` arguments past 2 use ``delta(2)`` and are counted.
    """
    R = float(R)
    if R <= 0:
        raise ValueError("R must be positive")
    L = L_CONST
    if profile is None:
        profile = build_profile(s, seed=seed)
    if dual_profile is None:
        dual_profile = build_profile(s.dual(), seed=seed)
    if pairs is None:
        rng = np.random.default_rng(seed)
        x, y = _sample_ball_pairs(s, R, int(n_samples), rng)
    else:
        x, y = (as_vector(a, s) for a in pairs)
        x, y = np.atleast_2d(x), np.atleast_2d(y)
    C2 = max(1.0, R)
    C1 = max(L, R)
    Cbar1 = 8.0 * (np.sqrt(1.0 + 4.0 * R * R) + 1.0) + max(L, R)

    t = norm(x - y, s)
    Jdiff = duality_map(x, s) - duality_map(y, s)
    mono = pairing(Jdiff, x - y)
    jdn = dual_norm(Jdiff, s)

    darg = C2 * t
    out_of_domain = darg > 2.0
    lower_rhs = profile.delta(np.minimum(darg, 2.0)) / (2.0 * L)

    garg = 2.0 * L * C2 * t
    gtop = float(dual_profile.g(2.0))
    sat = garg > gtop
    ginv = np.full(t.shape, 2.0)
    if np.any(~sat):
        ginv[~sat] = _bisect(dual_profile.g, garg[~sat], 0.0, 2.0)
    cont_rhs = C2 * ginv

    rho_t = profile.rho(t)
    upper_quad = 8.0 * t * t + 8.0 * C1 * rho_t
    upper_rho = Cbar1 * rho_t

    slacks = {
        "lower_delta": mono - lower_rhs,
        "dual_continuity": cont_rhs - jdn,
        "upper_quadratic_rho": upper_quad - mono,
        "upper_rho": upper_rho - mono,
    }
    tol = 1e-9
    report = {
        "p": s.p, "R": R, "L": L, "C1": C1, "C2": C2, "Cbar1": float(Cbar1),
        "n_pairs": int(len(t)),
        "radius_rule": "R bounds both norms (joint radius)",
        "g_saturated": int(np.sum(sat)),
        "delta_out_of_domain": int(np.sum(out_of_domain)),
        "moduli_mode": profile.mode,
        "checks": {},
    }
    ok = True
    for name, sl in slacks.items():
        worst = float(np.min(sl)) if len(sl) else 0.0
        passed = worst >= -tol
        ok &= passed
        report["checks"][name] = {
            "worst_slack": worst,
            "violations": int(np.sum(sl < -tol)),
            "passed": bool(passed),
        }
    report["passed"] = bool(ok)
    return report
