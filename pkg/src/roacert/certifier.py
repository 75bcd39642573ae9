"""Statistical certification of one level set, and the search for the largest.

``certify_level`` samples block maxima of Vdot on ``{V = rho}``, fits a GEV
model, and certifies when the bootstrap upper bound on the model's right
endpoint is negative and the fit passes a KS check. ``binary_search_rho``
bisects between a certified inner level and a rejected outer one.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import OdeSystem
from .errors import HeavyTailError, NonCompactLevelSetError, SeedError
from .evt import (
    DEFAULT_RESAMPLE_FRACTION,
    BootstrapResult,
    GevFitResult,
    KsResult,
    bootstrap_upper_ci,
    endpoint,
    fit_gev_mle,
    ks_test,
)
from .lyapunov import GramCandidate, LieDerivative
from .sampler import PsgldConfig, _project_batch, collect_block_maxima

__all__ = [
    "Decision",
    "EvtConfig",
    "CertificationResult",
    "SearchResult",
    "certify_level",
    "binary_search_rho",
    "linearization_seed",
]

# relative spread under which block maxima count as constant
DEGENERATE_RTOL = 1e-12


class Decision(str, enum.Enum):
    CERTIFIED = "CERTIFIED"
    REJECTED = "REJECTED"
    FAIL_HEAVY_TAIL = "FAIL_HEAVY_TAIL"

    def __str__(self):
        return self.value


@dataclass
class EvtConfig:
    alpha: float = 0.01
    b_resamples: int = 1000
    ks_alpha: float = 0.05
    ks_mode: str = "asymptotic"
    min_blocks: int = 20
    resample_fraction: float = DEFAULT_RESAMPLE_FRACTION
    max_failure_rate: float = 0.2

    def __post_init__(self):
        if not 0 < self.alpha <= 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5], got {self.alpha}")
        if not 0 < self.ks_alpha < 1:
            raise ValueError("ks_alpha must lie in (0, 1)")
        if self.b_resamples < 1:
            raise ValueError("b_resamples must be positive")
        if self.ks_mode not in ("asymptotic", "parametric_bootstrap"):
            raise ValueError(f"unknown ks_mode {self.ks_mode!r}")


@dataclass
class CertificationResult:
    decision: Decision
    rho: float
    gamma_point: float = float("nan")
    ci_upper: float = float("nan")
    ks: KsResult | None = None
    gev: GevFitResult | None = None
    bootstrap: BootstrapResult | None = None
    counterexample: np.ndarray | None = None
    counterexample_value: float | None = None
    empirical_max: float = float("nan")
    block_maxima: np.ndarray | None = None
    reason: str = ""
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def certified(self) -> bool:
        return self.decision is Decision.CERTIFIED


@dataclass
class SearchResult:
    rho_star: float
    trace: list = field(default_factory=list)
    iterations: int = 0
    seed_result: CertificationResult | None = None
    best_result: CertificationResult | None = None


def _bootstrap_rng(seed: int, namespace: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(namespace), 0xB0075])
    return np.random.Generator(np.random.Philox(ss))


def certify_level(
    system: OdeSystem,
    candidate: GramCandidate,
    rho: float,
    psgld_cfg: PsgldConfig | None = None,
    evt_cfg: EvtConfig | None = None,
    *,
    namespace: int = 0,
    threads: int = 1,
    deadline: float | None = None,
) -> CertificationResult:
    """Decide whether ``max Vdot < 0`` on ``{V = rho}`` at confidence ``1 - alpha``.

    ``deadline`` (a ``time.perf_counter()`` value) bounds the sampling
    stage; :class:`~roacert.errors.BudgetExceededError` propagates.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    psgld_cfg = psgld_cfg or PsgldConfig()
    evt_cfg = evt_cfg or EvtConfig()
    t0 = time.perf_counter()
    lie = LieDerivative(candidate, system)
    res = CertificationResult(Decision.REJECTED, float(rho))

    def done(**kw):
        for k, v in kw.items():
            setattr(res, k, v)
        res.wall_time = time.perf_counter() - t0
        res.diagnostics.setdefault("phase_seconds", {})["total"] = res.wall_time
        return res

    try:
        bm = collect_block_maxima(
            lie, rho, psgld_cfg, namespace=namespace, threads=threads, stop_on_violation=True, deadline=deadline
        )
    except NonCompactLevelSetError as exc:
        return done(reason=f"level set is not compact: {exc}")
    t_sample = time.perf_counter() - t0
    res.diagnostics.update(bm.diagnostics)
    res.diagnostics["config_hash"] = bm.config_hash
    res.diagnostics["phase_seconds"] = {"sampling": t_sample}
    res.empirical_max = bm.empirical_max

    if bm.violation is not None:
        return done(
            counterexample=bm.violation,
            counterexample_value=bm.violation_value,
            reason="sampled a state with Vdot >= 0",
        )

    y = bm.values
    res.block_maxima = y
    spread = float(np.max(y) - np.min(y))
    if spread <= DEGENERATE_RTOL * max(1.0, float(np.max(np.abs(y)))):
        # constant Vdot on the level set: the sign decides directly
        top = float(np.max(y))
        decision = Decision.CERTIFIED if top < 0 else Decision.REJECTED
        res.diagnostics["degenerate"] = True
        return done(decision=decision, gamma_point=top, ci_upper=top, reason="block maxima are constant")
    res.diagnostics["degenerate"] = False

    try:
        fit = fit_gev_mle(y, min_samples=evt_cfg.min_blocks)
    except ValueError as exc:
        return done(reason=str(exc))
    res.gev = fit
    if fit.params.shape >= 0:
        return done(decision=Decision.FAIL_HEAVY_TAIL, reason="fitted shape is non-negative (heavy tail)")
    if not fit.converged:
        return done(reason="GEV fit did not converge")
    res.gamma_point = endpoint(fit.params)

    t1 = time.perf_counter()
    rng = _bootstrap_rng(psgld_cfg.seed, namespace)
    try:
        boot = bootstrap_upper_ci(
            y,
            evt_cfg.b_resamples,
            evt_cfg.alpha,
            rng,
            fit=fit,
            max_failure_rate=evt_cfg.max_failure_rate,
            resample_fraction=evt_cfg.resample_fraction,
        )
    except HeavyTailError as exc:
        return done(decision=Decision.FAIL_HEAVY_TAIL, reason=str(exc))
    res.bootstrap = boot
    res.ci_upper = boot.ci_upper
    res.ks = ks_test(y, fit.params, ks_alpha=evt_cfg.ks_alpha, mode=evt_cfg.ks_mode, rng=rng)
    res.diagnostics["phase_seconds"]["evt"] = time.perf_counter() - t1
    res.diagnostics["bootstrap_failure_rate"] = boot.failure_rate

    if boot.unreliable:
        return done(reason=f"bootstrap unreliable: {boot.failure_rate:.0%} of refits failed")
    if not res.ks.passed:
        return done(reason=f"KS test rejected the GEV fit (p = {res.ks.p_value:.3g})")
    if res.ci_upper >= 0:
        return done(reason="upper confidence bound on max Vdot is non-negative")
    return done(decision=Decision.CERTIFIED, reason="upper confidence bound is negative")


def binary_search_rho(
    system: OdeSystem,
    candidate: GramCandidate,
    rho_low: float,
    rho_high: float,
    rel_tol: float = 0.02,
    psgld_cfg: PsgldConfig | None = None,
    evt_cfg: EvtConfig | None = None,
    *,
    threads: int = 1,
    max_iter: int = 200,
    callback=None,
) -> SearchResult:
    """Bisect for the largest certifiable level.

    Iteration ``i`` runs the sampler under stream namespace ``i`` of the same
    master seed, so the whole trace is reproducible. Raises
    :class:`SeedError` when ``rho_low`` itself cannot be certified.
    """
    if not 0 < rho_low < rho_high:
        raise ValueError("need 0 < rho_low < rho_high")
    if not rel_tol > 0:
        raise ValueError("rel_tol must be positive")
    psgld_cfg = psgld_cfg or PsgldConfig()
    evt_cfg = evt_cfg or EvtConfig()
    first = certify_level(system, candidate, rho_low, psgld_cfg, evt_cfg, namespace=0, threads=threads)
    trace = [(float(rho_low), first.decision, first.wall_time)]
    if not first.certified:
        raise SeedError(f"rho_low = {rho_low} is not certified ({first.reason})")
    lo, hi = float(rho_low), float(rho_high)
    best = first
    i = 0
    while (hi - lo) / lo > rel_tol and i < max_iter:
        i += 1
        mid = 0.5 * (lo + hi)
        r = certify_level(system, candidate, mid, psgld_cfg, evt_cfg, namespace=i, threads=threads)
        trace.append((mid, r.decision, r.wall_time))
        if callback is not None:
            callback(i, r)
        if r.certified:
            lo, best = mid, r
        else:
            hi = mid
    return SearchResult(rho_star=lo, trace=trace, iterations=i, seed_result=first, best_result=best)


def _fibonacci_sphere(n_dim: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if n_dim == 1:
        return np.array([[1.0], [-1.0]])
    if n_dim == 2:
        phi = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.column_stack([np.cos(phi), np.sin(phi)])
    U = rng.standard_normal((count, n_dim))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def linearization_seed(
    system: OdeSystem,
    candidate: GramCandidate,
    *,
    n_points: int = 10_000,
    margin: float = 1e-3,
    start_fraction: float = 1e-4,
    max_doublings: int = 40,
    seed: int = 0,
) -> float:
    """Inner level set verified by a dense deterministic check.

    Starting at ``start_fraction * rho_scale`` (``rho_scale`` = mean of V on
    unit directions), ``rho`` doubles while every one of ``n_points`` states
    on ``{V = rho}`` has ``Vdot < -margin * rho``; the last passing value
    is halved and returned.
    """
    from .sampler import _ray_levels

    lie = LieDerivative(candidate, system)
    U = _fibonacci_sphere(system.dimension, n_points, seed)
    rho = start_fraction * candidate.radius_scale()
    last = None
    for _ in range(max_doublings):
        X = _ray_levels(candidate, U, rho, 1e-12)[:, None] * U
        X, _ = _project_batch(candidate, X, rho, 1e-12 * max(rho, 1.0), 50)
        if not np.max(lie._value(X)) < -margin * rho:
            break
        last = rho
        rho *= 2.0
    if last is None:
        raise SeedError("no level near the origin passes the dense decrease check")
    return last / 2.0
