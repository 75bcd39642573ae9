"""Ground-truth maximizers of Vdot on ``{V = rho}`` for desk-scale checks.

Two independent routes: a dense angular grid followed by a short
projected-ascent polish (any system, N <= 3), and the exact generalized
eigenvalue answer for linear dynamics with quadratic V (any N). The
reversed Van der Pol limit cycle is also computed here so certified
levels can be scored by the fraction of the true basin they cover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dynamics import OdeSystem
from .errors import UnsupportedDimensionError
from .lyapunov import GramCandidate, LieDerivative
from .sampler import _polish as _newton_polish
from .sampler import _project_batch, _ray_levels
from .validation import check_square

__all__ = [
    "OracleResult",
    "KappaResult",
    "grid_max_vdot",
    "eigen_exact_linear",
    "vdp_limit_cycle",
    "measure_kappa",
]


@dataclass
class OracleResult:
    gamma_true: float
    argmax_state: np.ndarray
    method: str
    resolution: int


@dataclass
class KappaResult:
    kappa: float
    std_error: float
    n_samples: int
    roa_area: float


def _grid_directions(n: int, resolution: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    phi = np.linspace(0.0, 2.0 * np.pi, resolution, endpoint=False)
    if n == 2:
        return np.column_stack([np.cos(phi), np.sin(phi)])
    theta = np.linspace(0.0, np.pi, resolution)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    T, P = T.ravel(), P.ravel()
    return np.column_stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)])


def _polish(lie: LieDerivative, X, rho, *, tol=1e-13, max_iter=5000):
    """Projected gradient ascent with per-row step adaptation (no noise)."""
    c = lie.candidate
    val, grad = lie._value_and_grad(X)
    scale = np.linalg.norm(X, axis=1)
    step = 0.1 * scale / np.maximum(np.linalg.norm(grad, axis=1), 1e-300)
    active = np.ones(X.shape[0], dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        a = np.flatnonzero(active)
        Xn, ok = _project_batch(c, X[a] + step[a, None] * grad[a], rho, 1e-12, 50)
        vn, gn = lie._value_and_grad(Xn)
        up = ok & (vn > val[a])
        i = a[up]
        gain = vn[up] - val[i]
        X[i], val[i], grad[i] = Xn[up], vn[up], gn[up]
        step[i] *= 1.5
        step[a[~up]] *= 0.5
        stalled = (step[a] < 1e-16 * scale[a]) | np.isin(a, i[gain <= tol * np.maximum(1.0, np.abs(val[i]))])
        active[a[stalled]] = False
    return X, val


def grid_max_vdot(system: OdeSystem, candidate: GramCandidate, rho: float, resolution: int = 720, n_polish: int = 10) -> OracleResult:
    """Dense directional grid on ``{V = rho}`` plus T=0 ascent from the best points.

    ``resolution`` is the number of grid points per angle (so ``resolution**2``
    directions in three dimensions).
    """
    if system.dimension > 3:
        raise UnsupportedDimensionError(f"grid oracle supports N <= 3, got N = {system.dimension}")
    if not rho > 0:
        raise ValueError("rho must be positive")
    lie = LieDerivative(candidate, system)
    U = _grid_directions(system.dimension, int(resolution))
    X = _ray_levels(candidate, U, rho, 1e-12)[:, None] * U
    X, _ = _project_batch(candidate, X, rho, 1e-12, 50)
    X = _newton_polish(candidate, X, rho)
    vals = lie._value(X)
    top = np.argsort(vals)[::-1][:n_polish]
    Xp, _ = _polish(lie, X[top].copy(), rho)
    Xp = _newton_polish(candidate, Xp, rho)
    vp = lie._value(Xp)
    best = int(np.argmax(vp))
    if vp[best] >= vals[top[0]]:
        return OracleResult(float(vp[best]), Xp[best], "grid_polish", int(resolution))
    return OracleResult(float(vals[top[0]]), X[top[0]], "grid_polish", int(resolution))


def eigen_exact_linear(M, P, rho: float) -> OracleResult:
    """Exact ``max x^T (M^T P + P M) x`` subject to ``x^T P x = rho``."""
    M = check_square(M, name="M")
    P = check_square(P, name="P")
    if M.shape != P.shape:
        raise ValueError("M and P must have the same shape")
    P = 0.5 * (P + P.T)
    w, U = np.linalg.eigh(P)
    if w[0] <= 0:
        raise ValueError("P must be positive definite")
    P_inv_half = (U / np.sqrt(w)) @ U.T
    A = M.T @ P + P @ M
    S = P_inv_half @ A @ P_inv_half
    lam, vec = np.linalg.eigh(0.5 * (S + S.T))
    x = P_inv_half @ vec[:, -1] * math.sqrt(rho)
    return OracleResult(float(rho * lam[-1]), x, "eigen_exact", 0)


# ---------------------------------------------------------------------------
# reversed Van der Pol basin


def _rk4_backward_vdp(x, h):
    # backward time for the reversed oscillator is the classical one
    def g(s):
        return np.array([s[1], -s[0] + (1.0 - s[0] * s[0]) * s[1]])

    k1 = g(x)
    k2 = g(x + 0.5 * h * k1)
    k3 = g(x + 0.5 * h * k2)
    k4 = g(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


@lru_cache(maxsize=1)
def vdp_limit_cycle(step: float = 1e-3, transient: float = 60.0) -> np.ndarray:
    """Closed polyline of the unstable limit cycle bounding the basin.

    Integrates the oscillator in backward time (where the cycle attracts)
    with fixed-step RK4, discards a transient, then records one revolution
    between two upward crossings of ``x2 = 0`` on the positive ``x1`` axis.
    """
    x = np.array([2.0, 0.0])
    for _ in range(int(transient / step)):
        x = _rk4_backward_vdp(x, step)
    # advance to an upward crossing of x2 = 0 with x1 > 0
    while True:
        xn = _rk4_backward_vdp(x, step)
        if x[1] > 0 >= xn[1] and xn[0] > 0:
            x = xn
            break
        x = xn
    pts = [x]
    while True:
        xn = _rk4_backward_vdp(pts[-1], step)
        if pts[-1][1] > 0 >= xn[1] and xn[0] > 0 and len(pts) > 100:
            break
        pts.append(xn)
        if len(pts) > 10**7:
            raise RuntimeError("limit cycle did not close")
    out = np.array(pts)
    out.setflags(write=False)
    return out


def _radial_profile(poly):
    """Boundary radius as a periodic function of polar angle (star-shaped curve)."""
    ang = np.arctan2(poly[:, 1], poly[:, 0])
    r = np.hypot(poly[:, 0], poly[:, 1])
    order = np.argsort(ang)
    ang, r = ang[order], r[order]
    ang = np.concatenate([ang[-1:] - 2 * np.pi, ang, ang[:1] + 2 * np.pi])
    r = np.concatenate([r[-1:], r, r[:1]])
    return ang, r


def measure_kappa(
    system: OdeSystem,
    candidate: GramCandidate,
    rho_certified: float,
    n_samples: int = 10**6,
    seed: int = 0,
) -> KappaResult:
    """Fraction of the true basin area covered by ``{V <= rho_certified}``.

    Only the reversed Van der Pol system has a reference basin. Areas are
    estimated from ``n_samples`` uniform points in the basin's bounding box;
    the covered part is the intersection of the sublevel set with the basin.
    """
    if getattr(system, "name", None) != "vdp_reversed":
        raise UnsupportedDimensionError("kappa needs a reference basin; only vdp_reversed has one")
    if rho_certified <= 0:
        return KappaResult(0.0, 0.0, int(n_samples), float("nan"))
    poly = vdp_limit_cycle()
    ang, rad = _radial_profile(poly)
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    rng = np.random.default_rng(seed)
    inside_roa = 0
    inside_both = 0
    chunk = 200_000
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        X = lo + (hi - lo) * rng.random((k, 2))
        r = np.hypot(X[:, 0], X[:, 1])
        roa = r < np.interp(np.arctan2(X[:, 1], X[:, 0]), ang, rad)
        sub = candidate._value(X[roa]) <= rho_certified
        inside_roa += int(roa.sum())
        inside_both += int(sub.sum())
        done += k
    kappa = inside_both / inside_roa
    return KappaResult(
        kappa=float(kappa),
        std_error=float(math.sqrt(kappa * (1 - kappa) / inside_roa)),
        n_samples=int(n_samples),
        roa_area=float(np.prod(hi - lo) * inside_roa / n_samples),
    )
