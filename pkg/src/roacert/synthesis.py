"""Offline fitting of the Gram matrix of a dictionary Lyapunov candidate.

``Q = L L^T + delta I`` with ``L`` lower triangular, trained by full-batch
gradient descent with Armijo backtracking on the hinge loss

    mean_i max(0, Vdot(x_i) + eps * V(x_i))

over points drawn uniformly from a ball. Both ``V`` and ``Vdot`` are linear
in ``Q`` (``V = z^T Q z``, ``Vdot = 2 w^T Q z`` with ``w = J_z f``), so the
loss gradient with respect to ``Q`` is a weighted sum of outer products.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator

from .dynamics import OdeSystem
from .errors import DimensionError
from .lyapunov import GramCandidate, PolyDictionary, make_poly_dictionary

__all__ = ["SynthesisConfig", "SynthesisResult", "synthesize", "GramSynthesizer"]


@dataclass
class SynthesisConfig:
    epsilon: float = 0.05
    n_train: int = 4096
    train_radius: float = 2.0
    learning_rate: float = 1e-2
    max_iters: int = 2000
    delta: float = 1e-3
    seed: int = 0
    loss_tol: float = 0.0
    exclude_radius: float = 1e-3

    def __post_init__(self):
        for name in ("epsilon", "train_radius", "learning_rate", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_train < 1 or self.max_iters < 0:
            raise ValueError("n_train must be >= 1 and max_iters >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthesisResult:
    candidate: GramCandidate
    loss: float
    converged: bool
    n_iter: int
    loss_history: np.ndarray


def _training_points(n: int, cfg: SynthesisConfig) -> np.ndarray:
    """Uniform in the ball of radius ``train_radius`` minus a small core."""
    rng = np.random.default_rng(cfg.seed)
    out = []
    need = cfg.n_train
    while need > 0:
        U = rng.standard_normal((need, n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        r = cfg.train_radius * rng.random(need) ** (1.0 / n)
        keep = r >= cfg.exclude_radius
        out.append(U[keep] * r[keep, None])
        need -= int(keep.sum())
    return np.concatenate(out)


def _lyapunov_start(system: OdeSystem, d: PolyDictionary) -> np.ndarray:
    """Linear block from the linearization's Lyapunov equation, identity elsewhere."""
    n, p = d.dimension, d.size
    A = system._batch_jacobian(np.zeros((1, n)))[0]
    Q0 = np.eye(p)
    if np.all(np.linalg.eigvals(A).real < 0):
        P = linalg.solve_continuous_lyapunov(A.T, -np.eye(n))
        Q0[:n, :n] = 0.5 * (P + P.T)
    Q0 /= np.trace(Q0) / p
    return np.linalg.cholesky(Q0)


def _loss_and_grad_q(Z, U, Q):
    h = np.einsum("bi,bi->b", Z, U @ Q)
    active = h > 0
    loss = float(np.sum(h[active])) / Z.shape[0]
    Za, Ua = Z[active], U[active]
    G = (Za.T @ Ua + Ua.T @ Za) / (2.0 * Z.shape[0])
    return loss, G


def synthesize(system: OdeSystem, dictionary: PolyDictionary, cfg: SynthesisConfig | None = None) -> SynthesisResult:
    """Fit ``Q`` so that ``Vdot + eps V <= 0`` on the training points.

    The returned candidate is the best iterate seen; ``converged`` reports
    whether its loss reached ``cfg.loss_tol``.
    """
    cfg = cfg or SynthesisConfig()
    if dictionary.dimension != system.dimension:
        raise DimensionError(
            f"dictionary is over R^{dictionary.dimension} but the system has dimension {system.dimension}"
        )
    p = dictionary.size
    X = _training_points(system.dimension, cfg)
    Z = dictionary.features(X)
    W = dictionary.jvp(X, system._batch_field(X))
    U = 2.0 * W + cfg.epsilon * Z
    eye = np.eye(p)
    tril = np.tril(np.ones((p, p), dtype=bool))

    def objective(L):
        loss, G = _loss_and_grad_q(Z, U, L @ L.T + cfg.delta * eye)
        return loss, np.where(tril, 2.0 * G @ L, 0.0)

    L = _lyapunov_start(system, dictionary)
    loss, grad = objective(L)
    history = [loss]
    lr = cfg.learning_rate
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if loss <= cfg.loss_tol:
            it -= 1
            break
        g2 = float(np.sum(grad * grad))
        if g2 == 0.0:
            break
        accepted = False
        while lr > 1e-14:
            L_new = L - lr * grad
            new_loss, new_grad = objective(L_new)
            if new_loss <= loss - 1e-4 * lr * g2:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        L, loss, grad = L_new, new_loss, new_grad
        history.append(loss)
        lr *= 1.5
    Q = L @ L.T + cfg.delta * eye
    cand = GramCandidate(dictionary, 0.5 * (Q + Q.T))
    return SynthesisResult(cand, loss, loss <= cfg.loss_tol, it, np.asarray(history))


class GramSynthesizer(BaseEstimator):
    """Estimator wrapper around :func:`synthesize`.

    ``fit`` takes an :class:`~roacert.dynamics.OdeSystem` in place of a data
    matrix; the training set is drawn internally.
    """

    def __init__(
        self,
        degree=None,
        epsilon=0.05,
        n_train=4096,
        train_radius=2.0,
        learning_rate=1e-2,
        max_iters=2000,
        delta=1e-3,
        seed=0,
    ):
        self.degree = degree
        self.epsilon = epsilon
        self.n_train = n_train
        self.train_radius = train_radius
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.delta = delta
        self.seed = seed

    def fit(self, system: OdeSystem, y=None):
        cfg = SynthesisConfig(
            epsilon=self.epsilon,
            n_train=self.n_train,
            train_radius=self.train_radius,
            learning_rate=self.learning_rate,
            max_iters=self.max_iters,
            delta=self.delta,
            seed=self.seed,
        )
        res = synthesize(system, make_poly_dictionary(system.dimension, self.degree), cfg)
        self.candidate_ = res.candidate
        self.gram_ = res.candidate.gram
        self.loss_ = res.loss
        self.converged_ = res.converged
        self.n_iter_ = res.n_iter
        self.loss_history_ = res.loss_history
        return self

    def transform(self, X):
        """Candidate values ``V(x)`` for each row of ``X``."""
        if not hasattr(self, "candidate_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("GramSynthesizer is not fitted yet")
        return self.candidate_.value(np.atleast_2d(X))
