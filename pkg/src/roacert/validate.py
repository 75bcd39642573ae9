"""Quick invariant checks behind ``roacert validate``.

Each check returns ``(name, passed, detail)``; all run in well under a
minute so the command is usable as a smoke test on a new machine.
"""

from __future__ import annotations

import numpy as np

from .dynamics import HurwitzSpec, finite_difference_jacobian, make_dense_hurwitz, make_linear, make_reversed_vdp, make_scalar_cubic
from .evt import GevParams, fit_gev_mle, gev_sample
from .lyapunov import GramCandidate, LieDerivative, make_poly_dictionary
from .oracle import eigen_exact_linear, grid_max_vdot
from .sampler import PsgldConfig, collect_block_maxima

__all__ = ["run_validation"]


def _fd_grad(fun, X, h=1e-6):
    G = np.empty_like(X)
    for k in range(X.shape[1]):
        E = np.zeros_like(X)
        E[:, k] = h * (1.0 + np.abs(X[:, k]))
        G[:, k] = (fun(X + E) - fun(X - E)) / (2.0 * E[:, k])
    return G


def _rel_err(a, b):
    return float(np.max(np.abs(a - b) / (1e-8 + np.abs(b))))


def _check_jacobians(rng, n_points):
    systems = [make_reversed_vdp(), make_scalar_cubic(), make_dense_hurwitz(HurwitzSpec(5, seed=1))]
    worst = 0.0
    for s in systems:
        X = rng.uniform(-2, 2, size=(n_points, s.dimension))
        worst = max(worst, _rel_err(s._batch_jacobian(X), finite_difference_jacobian(s._batch_field, X)))
    return "jacobian_vs_finite_differences", worst < 1e-5, f"max rel err {worst:.2e}"


def _check_origin():
    systems = [make_reversed_vdp(), make_scalar_cubic(), make_dense_hurwitz(HurwitzSpec(5, seed=1))]
    worst = max(float(np.max(np.abs(s.field(np.zeros(s.dimension))))) for s in systems)
    return "field_vanishes_at_origin", worst <= 1e-12, f"max |f(0)| {worst:.1e}"


def _check_lie_gradients(rng, n_points):
    vdp = make_reversed_vdp()
    d = make_poly_dictionary(2, 2)
    L = rng.standard_normal((d.size, d.size))
    cand = GramCandidate(d, L @ L.T + np.eye(d.size))
    lie = LieDerivative(cand, vdp)
    X = rng.uniform(-1.5, 1.5, size=(n_points, 2))
    e1 = _rel_err(cand.gradient(X), _fd_grad(cand._value, X))
    e2 = _rel_err(lie.gradient(X), _fd_grad(lie._value, X))
    worst = max(e1, e2)
    return "lie_derivative_gradients", worst < 1e-4, f"grad V {e1:.1e}, grad Vdot {e2:.1e}"


def _check_oracles():
    worst = 0.0
    for n, seed in ((2, 3), (3, 4)):
        s = make_dense_hurwitz(HurwitzSpec(n, seed=seed))
        cand = GramCandidate.quadratic(np.eye(n))
        g = grid_max_vdot(s, cand, 1.0, resolution=181 if n == 3 else 720).gamma_true
        e = eigen_exact_linear(s.matrix, np.eye(n), 1.0).gamma_true
        worst = max(worst, abs(g - e) / abs(e))
    return "grid_oracle_matches_eigen_oracle", worst <= 1e-4, f"max rel diff {worst:.1e}"


def _check_sampler():
    s = make_linear(np.diag([-1.0, -3.0]))
    lie = LieDerivative(GramCandidate.quadratic(np.eye(2)), s)
    cfg = PsgldConfig(k_steps=200, block_size=16, n_blocks=10, temperature=1e-3, seed=7)
    a = collect_block_maxima(lie, 1.0, cfg)
    b = collect_block_maxima(lie, 1.0, cfg, threads=2)
    same = np.array_equal(a.values, b.values)
    below = bool(np.all(a.values <= -2.0 + 1e-9))
    near = bool(np.all(a.values > -2.1))
    ok = same and below and near
    return "sampler_oracle_and_determinism", ok, f"max {a.values.max():.6f}, thread-independent={same}"


def _check_gev(rng):
    y = gev_sample(GevParams(-0.5, 0.0, 1.0), 10_000, rng)
    p = fit_gev_mle(y).params
    ok = -0.56 <= p.shape <= -0.44 and abs(p.location) <= 0.05 and 0.95 <= p.scale <= 1.05
    return "gev_parameter_recovery", ok, f"shape={p.shape:.3f} loc={p.location:.3f} scale={p.scale:.3f}"


def run_validation(cfg: dict | None = None) -> list[tuple[str, bool, str]]:
    cfg = cfg or {}
    n_points = int(cfg.get("validate", {}).get("n_points", 100))
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    return [
        _check_origin(),
        _check_jacobians(rng, n_points),
        _check_lie_gradients(rng, n_points),
        _check_oracles(),
        _check_sampler(),
        _check_gev(rng),
    ]
