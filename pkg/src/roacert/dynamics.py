"""Autonomous ODE systems ``dx/dt = f(x)`` with Jacobians.

Every evaluator accepts a single state of shape ``(N,)`` or a batch of
shape ``(B, N)``; batches are what the sampler uses on its hot path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .validation import check_finite, check_square, check_states

__all__ = [
    "OdeSystem",
    "LinearSystem",
    "HurwitzSpec",
    "eval_field",
    "make_reversed_vdp",
    "make_scalar_cubic",
    "make_linear",
    "make_dense_hurwitz",
    "finite_difference_jacobian",
    "system_from_config",
]

DEFAULT_EIGENVALUE_RANGE = (-2.0, -0.1)


def finite_difference_jacobian(field: Callable[[np.ndarray], np.ndarray], X: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of a batched field, shape (B, N, N)."""
    B, N = X.shape
    J = np.empty((B, N, N))
    h = 1e-6 * (1.0 + np.abs(X))
    for k in range(N):
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, k] += h[:, k]
        Xm[:, k] -= h[:, k]
        J[:, :, k] = (field(Xp) - field(Xm)) / (2.0 * h[:, k : k + 1])
    return J


class OdeSystem:
    """Vector field with Jacobian and vector-Jacobian product.

    Parameters
    ----------
    dimension : int
    field : callable
        Batched field ``(B, N) -> (B, N)``.
    jacobian : callable, optional
        Batched Jacobian ``(B, N) -> (B, N, N)``; central finite differences
        are used when omitted.
    name : str
    """

    def __init__(self, dimension: int, field, jacobian=None, *, name: str = "custom", config: dict | None = None):
        if int(dimension) < 1:
            raise ValueError("dimension must be positive")
        self.dimension = int(dimension)
        self._field = field
        self._jacobian = jacobian
        self.name = name
        self.config = dict(config or {"kind": name, "dimension": self.dimension})

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dimension={self.dimension})"

    def field(self, x):
        X, single = check_states(x, self.dimension)
        out = check_finite(self._batch_field(X), "vector field")
        return out[0] if single else out

    def jacobian(self, x):
        X, single = check_states(x, self.dimension)
        out = check_finite(self._batch_jacobian(X), "Jacobian")
        return out[0] if single else out

    # batched internals, no validation: used by the sampler
    def _batch_field(self, X):
        return self._field(X)

    def _batch_jacobian(self, X):
        if self._jacobian is None:
            return finite_difference_jacobian(self._field, X)
        return self._jacobian(X)

    def _batch_vjp(self, X, W):
        """Rows of ``J_f(x)^T w``."""
        return np.einsum("bij,bi->bj", self._batch_jacobian(X), W)


class LinearSystem(OdeSystem):
    """``dx/dt = M x``."""

    def __init__(self, matrix, *, name: str = "linear", config: dict | None = None):
        M = check_square(matrix, name="M")
        self.matrix = M
        super().__init__(M.shape[0], None, None, name=name, config=config)

    def _batch_field(self, X):
        return X @ self.matrix.T

    def _batch_jacobian(self, X):
        return np.broadcast_to(self.matrix, (X.shape[0],) + self.matrix.shape).copy()

    def _batch_vjp(self, X, W):
        return W @ self.matrix


def eval_field(system: OdeSystem, x):
    """``f(x)`` for one state or a batch."""
    return system.field(x)


def make_linear(matrix, *, name: str = "linear") -> LinearSystem:
    return LinearSystem(matrix, name=name)


def _vdp_field(X):
    x1, x2 = X[:, 0], X[:, 1]
    return np.column_stack([-x2, x1 + (x1 * x1 - 1.0) * x2])


def _vdp_jacobian(X):
    x1, x2 = X[:, 0], X[:, 1]
    J = np.zeros((X.shape[0], 2, 2))
    J[:, 0, 1] = -1.0
    J[:, 1, 0] = 1.0 + 2.0 * x1 * x2
    J[:, 1, 1] = x1 * x1 - 1.0
    return J


class _ReversedVanDerPol(OdeSystem):
    def _batch_vjp(self, X, W):
        x1, x2 = X[:, 0], X[:, 1]
        w1, w2 = W[:, 0], W[:, 1]
        return np.column_stack([w2 * (1.0 + 2.0 * x1 * x2), -w1 + w2 * (x1 * x1 - 1.0)])


def make_reversed_vdp() -> OdeSystem:
    """Time-reversed Van der Pol oscillator (mu = 1).

    ``x1' = -x2``, ``x2' = x1 + (x1^2 - 1) x2``: the origin is a stable
    focus and the unstable limit cycle is the boundary of its basin.
    """
    return _ReversedVanDerPol(2, _vdp_field, _vdp_jacobian, name="vdp_reversed")


def make_scalar_cubic() -> OdeSystem:
    """``x' = -x + x^3``; the basin of the origin is ``|x| < 1``."""
    return OdeSystem(
        1,
        lambda X: -X + X**3,
        lambda X: (-1.0 + 3.0 * X**2)[:, :, None],
        name="scalar_cubic",
    )


@dataclass(frozen=True)
class HurwitzSpec:
    dimension: int
    eigenvalue_range: tuple[float, float] = DEFAULT_EIGENVALUE_RANGE
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.eigenvalue_range
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not (lo <= hi < 0):
            raise ValueError(f"eigenvalue range must satisfy lo <= hi < 0, got {self.eigenvalue_range}")


def make_dense_hurwitz(spec: HurwitzSpec) -> LinearSystem:
    """Dense symmetric negative-definite ``M = U diag(lam) U^T``.

    ``U`` is the orthogonal QR factor of a seeded Gaussian matrix (column
    signs fixed so the factor is unique) and ``lam`` is drawn uniformly from
    ``spec.eigenvalue_range``.
    """
    n = spec.dimension
    lo, hi = spec.eigenvalue_range
    rng = np.random.default_rng(spec.seed)
    G = rng.standard_normal((n, n))
    U, R = np.linalg.qr(G)
    U = U * np.where(np.diag(R) < 0, -1.0, 1.0)
    lam = rng.uniform(lo, hi, size=n)
    M = (U * lam) @ U.T
    M = 0.5 * (M + M.T)
    config = {
        "kind": "dense_hurwitz",
        "dimension": n,
        "seed": int(spec.seed),
        "eigenvalue_range": [float(lo), float(hi)],
    }
    system = LinearSystem(M, name="dense_hurwitz", config=config)
    system.eigenvalues = np.sort(lam)
    return system


def system_from_config(cfg: dict) -> OdeSystem:
    """Build a system from ``{kind, dimension, seed, eigenvalue_range}``."""
    kind = cfg.get("kind")
    if kind == "vdp_reversed":
        return make_reversed_vdp()
    if kind == "scalar_cubic":
        return make_scalar_cubic()
    if kind == "dense_hurwitz":
        if "dimension" not in cfg:
            raise ConfigError("system.dimension is required for dense_hurwitz")
        rng_ = tuple(cfg.get("eigenvalue_range", DEFAULT_EIGENVALUE_RANGE))
        try:
            spec = HurwitzSpec(int(cfg["dimension"]), (float(rng_[0]), float(rng_[1])), int(cfg.get("seed", 0)))
        except ValueError as exc:
            raise ConfigError(f"system: {exc}") from exc
        return make_dense_hurwitz(spec)
    if kind == "linear":
        if "matrix" not in cfg:
            raise ConfigError("system.matrix is required for kind 'linear'")
        return LinearSystem(np.asarray(cfg["matrix"], dtype=float), config=dict(cfg))
    raise ConfigError(f"system.kind must be one of vdp_reversed, dense_hurwitz, scalar_cubic, linear; got {kind!r}")
