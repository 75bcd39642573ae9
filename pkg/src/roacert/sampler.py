"""Projected stochastic gradient Langevin dynamics on a level set of V.

Chains live on ``M = {x : V(x) = rho}`` and ascend the Lie derivative:

    x <- Proj_M(x + eta * grad Vdot(x) + sqrt(2 T eta) * noise)

All chains of all requested blocks are advanced together as one
``(n_blocks * block_size, N)`` array. Randomness is drawn from one
counter-based (Philox) stream per block, keyed by ``(seed, namespace,
block_index)``: block ``b`` always sees the same noise regardless of which
other blocks run alongside it or on which worker thread.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import BudgetExceededError, NonCompactLevelSetError, ProjectionError
from .lyapunov import GramCandidate, LieDerivative
from .validation import check_states

__all__ = [
    "PsgldConfig",
    "ChainState",
    "BlockRun",
    "BlockMaximaSet",
    "block_stream",
    "project_to_levelset",
    "sample_uniform_on_levelset",
    "psgld_step",
    "run_block",
    "collect_block_maxima",
    "resolve_config",
    "write_blockmax_csv",
    "read_blockmax_csv",
]

MODES = ("exact_projection", "soft_penalty")

# chains advanced together in one array; fixed so that results never depend
# on how blocks are spread over worker threads
CHUNK_CHAINS = 2048


@dataclass
class PsgldConfig:
    """Sampler hyperparameters.

    ``eta`` and ``temperature`` may be left as ``None``; :func:`resolve_config`
    then derives them from the problem: ``eta = eta_scale / kappa`` where
    ``kappa`` is the largest ``|grad Vdot(x)| / |x|`` over initial states,
    and ``temperature = temperature_scale * median |Vdot|``.
    """

    eta: float | None = None
    temperature: float | None = None
    k_steps: int = 500
    block_size: int = 64
    n_blocks: int = 100
    grad_clip: float | str | None = "auto"
    projection_tol: float = 1e-9
    projection_max_iters: int = 50
    reseed_period: int | None = None
    mode: str = "exact_projection"
    penalty_weight: float = 10.0
    seed: int = 0
    eta_scale: float = 0.5
    temperature_scale: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("k_steps", "block_size", "n_blocks", "projection_max_iters"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("eta", "temperature"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.projection_tol > 0:
            raise ValueError("projection_tol must be positive")
        if self.reseed_period is not None and int(self.reseed_period) < 1:
            raise ValueError("reseed_period must be >= 1 or None")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ChainState:
    position: np.ndarray
    rng: np.random.Generator


@dataclass
class BlockRun:
    """Output of one block: the maximum plus everything the certifier scans."""

    block_index: int
    maximum: float
    final_values: np.ndarray
    final_states: np.ndarray
    best_value: float
    best_state: np.ndarray


@dataclass
class BlockMaximaSet:
    values: np.ndarray
    rho: float
    seed: int
    config_hash: str
    config: dict
    empirical_max: float
    empirical_argmax: np.ndarray
    violation: np.ndarray | None = None
    violation_value: float | None = None
    final_values: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_blocks(self) -> int:
        return int(self.values.size)

    def to_csv(self, path) -> None:
        write_blockmax_csv(path, self.values, self.rho, self.seed, self.config_hash)


def write_blockmax_csv(path, values, rho: float, seed: int, config_hash: str) -> None:
    """One block maximum per line under a commented provenance header."""
    with open(path, "w") as fh:
        fh.write(f"# block_max rho={float(rho)!r} seed={int(seed)} config_hash={config_hash}\n")
        for v in np.asarray(values, dtype=float):
            fh.write(f"{float(v)!r}\n")


def read_blockmax_csv(path) -> np.ndarray:
    return np.loadtxt(path, comments="#", dtype=float, ndmin=1)


def block_stream(seed: int, block_index: int, namespace: int = 0) -> np.random.Generator:
    """Independent Philox stream for one block."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(namespace), int(block_index)])
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# level-set geometry


def _project_batch(c: GramCandidate, X, rho, tol, max_iters):
    """Damped Newton along grad V. Returns (X, ok) with ok marking converged rows."""
    X = X.copy()
    ok = np.zeros(X.shape[0], dtype=bool)
    idx = np.arange(X.shape[0])
    Xa = X
    v, g, _ = c._value_grad(Xa)
    for _ in range(max_iters + 1):
        r = v - rho
        done = np.abs(r) <= tol
        ok[idx[done]] = True
        gn2 = np.einsum("bi,bi->b", g, g)
        keep = ~done & (gn2 >= 1e-20) & np.isfinite(r)
        if not keep.any():
            break
        if not keep.all():
            idx, Xa, r, g, gn2 = idx[keep], Xa[keep], r[keep], g[keep], gn2[keep]
        step = (r / gn2)[:, None] * g
        Xn = Xa - step
        vn, gnew, _ = c._value_grad(Xn)
        worse = ~(np.abs(vn - rho) < np.abs(r))
        lam = 1.0
        while worse.any() and lam > 1e-9:
            lam *= 0.5
            w = np.flatnonzero(worse)
            Xw = Xa[w] - lam * step[w]
            vw, gw, _ = c._value_grad(Xw)
            Xn[w], vn[w], gnew[w] = Xw, vw, gw
            worse[w] = ~(np.abs(vw - rho) < np.abs(r[w]))
        Xa, v, g = Xn, vn, gnew
        X[idx] = Xa
    return X, ok


def _project_along(c: GramCandidate, X, D, rho, tol, max_iters):
    """Move each row of ``X`` along its fixed direction ``-D`` onto ``{V = rho}``.

    With ``D = grad V`` at the pre-step state a proposal that differs from a
    constrained critical point only along the normal lands exactly back on
    it, which the plain Newton projection does not guarantee. Rows where
    the scalar Newton solve stalls fall back to :func:`_project_batch`.
    """
    if c.is_quadratic:
        # V(x - t d) = rho is a quadratic in t: take the root nearest zero
        Q = c.gram
        QD = D @ Q
        a = np.einsum("bi,bi->b", D, QD)
        b = 2.0 * np.einsum("bi,bi->b", X, QD)
        r = np.einsum("bi,bi->b", X, X @ Q) - rho
        disc = b * b - 4.0 * a * r
        root = np.sqrt(np.where(disc >= 0, disc, 0.0))
        den = b + np.where(b >= 0, root, -root)
        t = np.where(den != 0, 2.0 * r / np.where(den != 0, den, 1.0), 0.0)
        Y = X - t[:, None] * D
        ok = (disc >= 0) & (np.abs(c._value(Y) - rho) <= tol)
        if not ok.all():
            bad = np.flatnonzero(~ok)
            Y[bad], ok[bad] = _project_batch(c, X[bad], rho, tol, max_iters)
        return Y, ok
    t = np.zeros(X.shape[0])
    Y = X.copy()
    v, g, _ = c._value_grad(Y)
    ok = np.zeros(X.shape[0], dtype=bool)
    for _ in range(max_iters):
        r = v - rho
        ok = np.abs(r) <= tol
        if ok.all():
            break
        dphi = -np.einsum("bi,bi->b", g, D)
        live = ~ok & (np.abs(dphi) > 1e-300)
        dt = np.where(live, -r / np.where(live, dphi, 1.0), 0.0)
        lam = np.ones_like(t)
        for _ in range(30):
            Yn = X - (t + lam * dt)[:, None] * D
            vn, gn, _ = c._value_grad(Yn)
            worse = live & ~(np.abs(vn - rho) < np.abs(r))
            if not worse.any():
                break
            lam = np.where(worse, 0.5 * lam, lam)
        t = np.where(live, t + lam * dt, t)
        Y = np.where(live[:, None], Yn, Y)
        v = np.where(live, vn, v)
        g = np.where(live[:, None], gn, g)
    ok = np.abs(v - rho) <= tol
    if not ok.all():
        bad = np.flatnonzero(~ok)
        Y[bad], ok_bad = _project_batch(c, X[bad], rho, tol, max_iters)
        ok[bad] = ok_bad
    return Y, ok


def _polish(c: GramCandidate, X, rho, iters: int = 3):
    """Plain Newton steps kept only where they shrink ``|V - rho|``.

    Used on final chain states so recorded values sit on the level set to
    rounding accuracy rather than ``projection_tol``.
    """
    v, g, _ = c._value_grad(X)
    for _ in range(iters):
        gn2 = np.einsum("bi,bi->b", g, g)
        r = v - rho
        Xn = X - (r / np.where(gn2 > 0, gn2, 1.0))[:, None] * g
        vn, gnew, _ = c._value_grad(Xn)
        better = np.abs(vn - rho) < np.abs(r)
        if not better.any():
            break
        X = np.where(better[:, None], Xn, X)
        v = np.where(better, vn, v)
        g = np.where(better[:, None], gnew, g)
    return X


def project_to_levelset(c: GramCandidate, x, rho: float, tol: float = 1e-9, max_iters: int = 50):
    """Newton projection of ``x`` onto ``{V = rho}``.

    Raises :class:`ProjectionError` when a critical point of V is hit or
    the iteration does not reach ``tol`` within ``max_iters`` steps.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    X, single = check_states(x, c.dimension)
    if np.any(np.all(X == 0.0, axis=1)):
        raise ProjectionError("cannot project the origin: grad V vanishes there")
    Y, ok = _project_batch(c, X, rho, tol, max_iters)
    if not ok.all():
        raise ProjectionError(f"{int((~ok).sum())} state(s) failed to project onto V = {rho}")
    return Y[0] if single else Y


def _ray_levels(c: GramCandidate, U, rho, tol):
    """For unit directions ``U`` find ``t > 0`` with ``V(t u) = rho``."""
    B = U.shape[0]
    if c.is_quadratic:
        return np.sqrt(rho / c._value(U))
    lo = np.zeros(B)
    hi = np.ones(B)
    # shrink hi until it is below the level so the bracket holds the first crossing
    for _ in range(200):
        above = c._value(hi[:, None] * U) > rho
        if not above.any():
            break
        hi[above] *= 0.5
    lo[:] = hi
    for _ in range(61):
        below = c._value(hi[:, None] * U) <= rho
        if not below.any():
            break
        lo[below] = hi[below]
        hi[below] *= 2.0
    else:
        raise NonCompactLevelSetError(f"V stays below {rho} along a ray out to 2^60")
    if np.any(c._value(hi[:, None] * U) <= rho):
        raise NonCompactLevelSetError(f"V stays below {rho} along a ray out to 2^60")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = c._value(mid[:, None] * U) <= rho
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * hi):
            break
    t = 0.5 * (lo + hi)
    # 1-D Newton polish along the ray
    for _ in range(5):
        X = t[:, None] * U
        v, g, _ = c._value_grad(X)
        r = v - rho
        if np.all(np.abs(r) <= tol):
            break
        dv = np.einsum("bi,bi->b", g, U)
        step = np.where(np.abs(dv) > 0, r / np.where(dv == 0, 1.0, dv), 0.0)
        t = np.clip(t - step, lo, hi)
    return t


def sample_uniform_on_levelset(c: GramCandidate, rho: float, count: int, rng: np.random.Generator, tol: float = 1e-9):
    """Direction-uniform points on ``{V = rho}``: ``t(u) u`` for ``u`` uniform on the sphere."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    U = rng.standard_normal((int(count), c.dimension))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    X = _ray_levels(c, U, rho, tol)[:, None] * U
    bad = np.abs(c._value(X) - rho) > tol
    if bad.any():
        X[bad], ok = _project_batch(c, X[bad], rho, tol, 50)
        if not ok.all():
            raise ProjectionError("ray initialization failed to reach the level set")
    return X


# ---------------------------------------------------------------------------
# hyperparameters


def resolve_config(lie: LieDerivative, rho: float, cfg: PsgldConfig) -> PsgldConfig:
    """Fill in problem-scaled ``eta``, ``temperature`` and ``grad_clip``."""
    clip = cfg.grad_clip
    if clip == "auto":
        clip = 10.0 * math.sqrt(lie.dimension)
    if cfg.eta is not None and cfg.temperature is not None:
        return replace(cfg, grad_clip=clip)
    rng = block_stream(cfg.seed, 0, namespace=0x5CA1E)
    X = sample_uniform_on_levelset(lie.candidate, rho, 256, rng, cfg.projection_tol)
    vdot, g = lie._value_and_grad(X)
    eta = cfg.eta
    if eta is None:
        kappa = np.max(np.linalg.norm(g, axis=1) / np.linalg.norm(X, axis=1))
        eta = cfg.eta_scale / kappa if kappa > 0 else cfg.eta_scale * float(np.mean(np.linalg.norm(X, axis=1))) ** 2
    temp = cfg.temperature
    if temp is None:
        temp = cfg.temperature_scale * float(np.median(np.abs(vdot)))
    return replace(cfg, eta=float(eta), temperature=float(temp), grad_clip=clip)


# ---------------------------------------------------------------------------
# chain dynamics


def _clip_rows(G, clip):
    if clip is None:
        return G
    norms = np.linalg.norm(G, axis=1)
    scale = np.where(norms > clip, clip / np.where(norms > 0, norms, 1.0), 1.0)
    return G * scale[:, None]


def _propose(lie, X, grad, noise, rho, cfg):
    c = lie.candidate
    if cfg.mode == "soft_penalty":
        v, gV, _ = c._value_grad(X)
        grad = grad - cfg.penalty_weight * (v - rho)[:, None] * gV
    g = _clip_rows(grad, cfg.grad_clip)
    return X + cfg.eta * g + math.sqrt(2.0 * cfg.temperature * cfg.eta) * noise


def psgld_step(lie: LieDerivative, state: ChainState, rho: float, cfg: PsgldConfig) -> ChainState:
    """One PSGLD update of a single chain.

    In ``exact_projection`` mode the proposal is projected back onto the
    level set; if projection fails the chain is re-drawn uniformly on the
    level set. ``soft_penalty`` mode pulls towards the level set through
    the gradient instead and skips the projection.
    """
    if cfg.eta is None or cfg.temperature is None or cfg.grad_clip == "auto":
        cfg = resolve_config(lie, rho, cfg)
    X, _ = check_states(state.position, lie.dimension)
    _, grad = lie._value_and_grad(X)
    noise = state.rng.standard_normal(X.shape)
    Xt = _propose(lie, X, grad, noise, rho, cfg)
    if cfg.mode == "soft_penalty":
        return ChainState(Xt[0], state.rng)
    normal = lie.candidate._value_grad(X)[1]
    Xp, ok = _project_along(lie.candidate, Xt, normal, rho, cfg.projection_tol, cfg.projection_max_iters)
    if not ok[0]:
        Xp = sample_uniform_on_levelset(lie.candidate, rho, 1, state.rng, cfg.projection_tol)
    return ChainState(Xp[0], state.rng)


def _reinit(c, rho, rngs, rows, m, cfg, X):
    """Redraw chains ``rows`` from the streams of their blocks, in row order."""
    blocks = rows // m
    for b in np.unique(blocks):
        sel = rows[blocks == b]
        X[sel] = sample_uniform_on_levelset(c, rho, sel.size, rngs[b], cfg.projection_tol)


def _run_blocks(
    lie: LieDerivative,
    rho: float,
    cfg: PsgldConfig,
    block_indices,
    namespace: int,
    stop_on_violation: bool,
    deadline: float | None = None,
    limit: list | None = None,
):
    c = lie.candidate
    m = cfg.block_size
    nb = len(block_indices)
    rngs = [block_stream(cfg.seed, b, namespace) for b in block_indices]
    X = np.concatenate([sample_uniform_on_levelset(c, rho, m, r, cfg.projection_tol) for r in rngs])
    n_chains = X.shape[0]
    best_val = np.full(n_chains, -np.inf)
    best_state = X.copy()
    proj_fail = 0
    reseeds = 0
    violation = None
    steps_done = 0

    for k in range(cfg.k_steps):
        if limit is not None and k >= limit[0]:
            break
        if deadline is not None and time.perf_counter() > deadline:
            raise BudgetExceededError(f"deadline reached after {k} sampler steps")
        vdot, grad = lie._value_and_grad(X)
        if cfg.mode == "exact_projection":
            better = vdot > best_val
            best_val[better] = vdot[better]
            best_state[better] = X[better]
            if stop_on_violation and np.any(vdot >= 0):
                i = int(np.argmax(vdot))
                violation = (X[i].copy(), float(vdot[i]), k)
                if limit is not None:
                    limit[0] = min(limit[0], k + 1)
                break
        if cfg.reseed_period and k > 0 and k % cfg.reseed_period == 0:
            # re-draw the lower half of every block
            rows = []
            for bi in range(nb):
                sl = vdot[bi * m : (bi + 1) * m]
                rows.append(bi * m + np.flatnonzero(sl < np.median(sl)))
            rows = np.concatenate(rows)
            if rows.size:
                _reinit(c, rho, rngs, rows, m, cfg, X)
                reseeds += rows.size
                vdot, grad = lie._value_and_grad(X)
        noise = np.concatenate([r.standard_normal((m, lie.dimension)) for r in rngs])
        Xt = _propose(lie, X, grad, noise, rho, cfg)
        if cfg.mode == "exact_projection":
            normal = c._value_grad(X)[1]
            X, ok = _project_along(c, Xt, normal, rho, cfg.projection_tol, cfg.projection_max_iters)
            if not ok.all():
                bad = np.flatnonzero(~ok)
                proj_fail += bad.size
                _reinit(c, rho, rngs, bad, m, cfg, X)
        else:
            X = Xt
        steps_done = k + 1

    if violation is None:
        if cfg.mode == "soft_penalty":
            X, ok = _project_batch(c, X, rho, cfg.projection_tol, cfg.projection_max_iters)
            if not ok.all():
                bad = np.flatnonzero(~ok)
                proj_fail += bad.size
                _reinit(c, rho, rngs, bad, m, cfg, X)
        X = _polish(c, X, rho)
        final = lie._value(X)
        better = final > best_val
        best_val[better] = final[better]
        best_state[better] = X[better]
        if stop_on_violation and np.any(final >= 0):
            i = int(np.argmax(final))
            violation = (X[i].copy(), float(final[i]), cfg.k_steps)
    else:
        final = None

    return {
        "final_values": None if final is None else final.reshape(nb, m),
        "final_states": X.reshape(nb, m, -1),
        "best_values": best_val.reshape(nb, m),
        "best_states": best_state.reshape(nb, m, -1),
        "violation": violation,
        "projection_failures": proj_fail,
        "reseeds": reseeds,
        "steps": steps_done,
    }


def run_block(lie: LieDerivative, rho: float, cfg: PsgldConfig, block_index: int, namespace: int = 0) -> BlockRun:
    """Run the ``block_size`` chains of one block and return their maximum final Vdot."""
    if cfg.eta is None or cfg.temperature is None or cfg.grad_clip == "auto":
        cfg = resolve_config(lie, rho, cfg)
    out = _run_blocks(lie, rho, cfg, [block_index], namespace, stop_on_violation=False)
    final = out["final_values"][0]
    i = int(np.argmax(out["best_values"][0]))
    return BlockRun(
        block_index=block_index,
        maximum=float(final.max()),
        final_values=final,
        final_states=out["final_states"][0],
        best_value=float(out["best_values"][0][i]),
        best_state=out["best_states"][0][i],
    )


def collect_block_maxima(
    lie: LieDerivative,
    rho: float,
    cfg: PsgldConfig,
    *,
    namespace: int = 0,
    threads: int = 1,
    stop_on_violation: bool = False,
    deadline: float | None = None,
) -> BlockMaximaSet:
    """Block maxima of final Vdot over ``cfg.n_blocks`` independent blocks.

    With ``stop_on_violation`` the run aborts as soon as any visited state
    has ``Vdot >= 0`` and that state is returned as ``violation``.
    ``deadline`` is a ``time.perf_counter()`` value after which
    :class:`BudgetExceededError` is raised.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    cfg = resolve_config(lie, rho, cfg)
    blocks = np.arange(cfg.n_blocks)
    per_chunk = max(1, CHUNK_CHAINS // cfg.block_size)
    chunks = [list(blocks[i : i + per_chunk]) for i in range(0, cfg.n_blocks, per_chunk)]
    # earliest step with a violation seen so far; later chunks need not go past it
    limit = [cfg.k_steps + 1]

    def work(chunk):
        return _run_blocks(lie, rho, cfg, chunk, namespace, stop_on_violation, deadline, limit)

    threads = max(1, min(int(threads), len(chunks)))
    if threads == 1:
        results = [work(ch) for ch in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))

    diagnostics = {
        "projection_failures": int(sum(r["projection_failures"] for r in results)),
        "reseeds": int(sum(r["reseeds"] for r in results)),
        "eta": cfg.eta,
        "temperature": cfg.temperature,
        "grad_clip": cfg.grad_clip,
    }
    violations = [r["violation"] for r in results if r["violation"] is not None]
    if violations:
        # earliest step, then largest value: the same pick for any schedule
        state, value, step = min(violations, key=lambda v: (v[2], -v[1]))
        diagnostics["steps"] = int(step)
        return BlockMaximaSet(
            values=np.array([]),
            rho=rho,
            seed=cfg.seed,
            config_hash=cfg.config_hash(),
            config=cfg.to_dict(),
            empirical_max=value,
            empirical_argmax=state,
            violation=state,
            violation_value=value,
            diagnostics=diagnostics,
        )

    best_values = np.concatenate([r["best_values"] for r in results])
    best_states = np.concatenate([r["best_states"] for r in results])
    flat = int(np.argmax(best_values))
    emp_max = float(best_values.ravel()[flat])
    emp_arg = best_states.reshape(-1, lie.dimension)[flat].copy()

    final = np.concatenate([r["final_values"] for r in results])
    diagnostics["mean_final_vdot"] = float(final.mean())
    diagnostics["steps"] = cfg.k_steps
    return BlockMaximaSet(
        values=final.max(axis=1),
        rho=rho,
        seed=cfg.seed,
        config_hash=cfg.config_hash(),
        config=cfg.to_dict(),
        empirical_max=emp_max,
        empirical_argmax=emp_arg,
        final_values=final,
        diagnostics=diagnostics,
    )
