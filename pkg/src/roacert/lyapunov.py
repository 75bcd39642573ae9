"""Dictionary-Gram Lyapunov candidates ``V(x) = z(x)^T Q z(x)``.

``z`` is a polynomial dictionary (degree 1 or 2, no constant term, so
``z(0) = 0``). The Lie derivative ``Vdot = grad V . f`` and its gradient
are evaluated without materializing dictionary Jacobians: products with
``J_z`` and the (constant) monomial Hessians are applied directly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dynamics import LinearSystem, OdeSystem
from .errors import DimensionError
from .validation import check_finite, check_square, check_states

__all__ = [
    "PolyDictionary",
    "GramCandidate",
    "LieDerivative",
    "make_poly_dictionary",
    "eval_v",
    "grad_v",
    "eval_vdot",
    "grad_vdot",
    "save_candidate",
    "load_candidate",
]


class PolyDictionary:
    """Monomials of total degree 1 (and 2) in ``n`` variables.

    Degree-2 monomials are ordered ``x_i x_j`` for ``i <= j``, row-major,
    after the ``n`` linear terms.
    """

    def __init__(self, n: int, degree: int):
        if degree not in (1, 2):
            raise ValueError(f"unsupported dictionary degree {degree}; use 1 or 2")
        if n < 1:
            raise ValueError("dimension must be positive")
        self.dimension = int(n)
        self.degree = int(degree)
        I, J = np.triu_indices(n)
        self._I, self._J = (I, J) if degree == 2 else (I[:0], J[:0])
        self._diag = self._I == self._J
        self.size = n + self._I.size

    def __repr__(self):
        return f"PolyDictionary(n={self.dimension}, degree={self.degree}, size={self.size})"

    def features(self, X):
        if self.degree == 1:
            return X
        return np.concatenate([X, X[:, self._I] * X[:, self._J]], axis=1)

    def jvp(self, X, V):
        """Rows of ``J_z(x) v``."""
        if self.degree == 1:
            return V
        quad = X[:, self._I] * V[:, self._J] + X[:, self._J] * V[:, self._I]
        return np.concatenate([V, quad], axis=1)

    def _sym(self, C):
        """Symmetric matrices sum_m c_m H_m for the quadratic part of ``C``."""
        n = self.dimension
        S = np.zeros((C.shape[0], n, n))
        cq = C[:, n:]
        S[:, self._I, self._J] = cq
        S[:, self._J, self._I] = cq
        S[:, self._I[self._diag], self._J[self._diag]] = 2.0 * cq[:, self._diag]
        return S

    def vjp(self, X, U):
        """Rows of ``J_z(x)^T u``."""
        if self.degree == 1:
            return U
        return U[:, : self.dimension] + np.einsum("bij,bj->bi", self._sym(U), X)

    def hess_contract(self, C, V):
        """Rows of ``sum_m c_m H_{z_m} v`` (the Hessians are constant)."""
        if self.degree == 1:
            return np.zeros_like(V)
        return np.einsum("bij,bj->bi", self._sym(C), V)

    def jacobian(self, x):
        """Explicit ``J_z``, shape (p, N) or (B, p, N). Mostly for tests."""
        X, single = check_states(x, self.dimension)
        eye = np.eye(self.dimension)
        J = np.stack([self.jvp(X, np.broadcast_to(e, X.shape)) for e in eye], axis=2)
        return J[0] if single else J

    def hessians(self) -> np.ndarray:
        """Constant Hessians of every feature, shape (p, N, N)."""
        p, n = self.size, self.dimension
        H = np.zeros((p, n, n))
        for m, (i, j) in enumerate(zip(self._I, self._J)):
            H[n + m, i, j] += 1.0
            H[n + m, j, i] += 1.0
        return H


def make_poly_dictionary(n: int, degree: int | None = None) -> PolyDictionary:
    """Polynomial dictionary; degree defaults to 2 below 50 dimensions, 1 otherwise."""
    if degree is None:
        degree = 1 if n >= 50 else 2
    return PolyDictionary(n, degree)


class GramCandidate:
    """``V(x) = z(x)^T Q z(x)`` with ``Q`` symmetric positive definite."""

    def __init__(self, dictionary: PolyDictionary, gram, *, check_pd: bool = True):
        Q = check_square(gram, name="Q")
        if Q.shape[0] != dictionary.size:
            raise DimensionError(f"Q is {Q.shape[0]}x{Q.shape[0]} but the dictionary has {dictionary.size} features")
        # z^T Q z only sees the symmetric part
        Q = 0.5 * (Q + Q.T)
        if check_pd and np.linalg.eigvalsh(Q)[0] <= 0:
            raise ValueError("Q must be positive definite")
        self.dictionary = dictionary
        self.gram = Q
        self.dimension = dictionary.dimension

    def __repr__(self):
        return f"GramCandidate({self.dictionary!r})"

    @classmethod
    def quadratic(cls, P) -> "GramCandidate":
        """``V(x) = x^T P x``."""
        P = check_square(P, name="P")
        return cls(PolyDictionary(P.shape[0], 1), P)

    @property
    def is_quadratic(self) -> bool:
        return self.dictionary.degree == 1

    # batched internals
    def _value(self, X):
        Z = self.dictionary.features(X)
        return np.einsum("bi,bi->b", Z, Z @ self.gram)

    def _value_grad(self, X):
        Z = self.dictionary.features(X)
        QZ = Z @ self.gram
        return np.einsum("bi,bi->b", Z, QZ), 2.0 * self.dictionary.vjp(X, QZ), QZ

    def value(self, x):
        X, single = check_states(x, self.dimension)
        v = self._value(X)
        return float(v[0]) if single else v

    def gradient(self, x):
        X, single = check_states(x, self.dimension)
        g = self._value_grad(X)[1]
        return g[0] if single else g

    def hvp(self, X, QZ, W):
        """Rows of ``H_V(x) w`` given ``QZ = Q z(x)``."""
        d = self.dictionary
        return 2.0 * d.vjp(X, d.jvp(X, W) @ self.gram) + 2.0 * d.hess_contract(QZ, W)

    def radius_scale(self) -> float:
        """Mean of V over unit directions, estimated on a fixed direction set."""
        rng = np.random.default_rng(12345)
        U = rng.standard_normal((512, self.dimension))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        return float(np.mean(self._value(U)))


class LieDerivative:
    """``Vdot(x) = grad V(x) . f(x)`` for a candidate/system pair."""

    def __init__(self, candidate: GramCandidate, system: OdeSystem):
        if candidate.dimension != system.dimension:
            raise DimensionError(
                f"candidate is over R^{candidate.dimension} but the system has dimension {system.dimension}"
            )
        self.candidate = candidate
        self.system = system
        self.dimension = system.dimension
        self._linear_form = None
        if candidate.is_quadratic and isinstance(system, LinearSystem):
            # Vdot = x^T (Q M + M^T Q) x
            Q, M = candidate.gram, system.matrix
            A = Q @ M
            self._linear_form = A + A.T

    def _value_and_grad(self, X):
        """``(Vdot, grad Vdot)`` for a batch."""
        if self._linear_form is not None:
            AX = X @ self._linear_form
            return np.einsum("bi,bi->b", X, AX), 2.0 * AX
        c = self.candidate
        _, gV, QZ = c._value_grad(X)
        F = self.system._batch_field(X)
        vdot = np.einsum("bi,bi->b", gV, F)
        grad = c.hvp(X, QZ, F) + self.system._batch_vjp(X, gV)
        return vdot, grad

    def _value(self, X):
        if self._linear_form is not None:
            return np.einsum("bi,bi->b", X, X @ self._linear_form)
        gV = self.candidate._value_grad(X)[1]
        return np.einsum("bi,bi->b", gV, self.system._batch_field(X))

    def value(self, x):
        X, single = check_states(x, self.dimension)
        v = check_finite(self._value(X), "Lie derivative")
        return float(v[0]) if single else v

    def gradient(self, x):
        X, single = check_states(x, self.dimension)
        g = check_finite(self._value_and_grad(X)[1], "Lie derivative gradient")
        return g[0] if single else g


def eval_v(candidate: GramCandidate, x):
    return candidate.value(x)


def grad_v(candidate: GramCandidate, x):
    return candidate.gradient(x)


def eval_vdot(lie: LieDerivative, x):
    return lie.value(x)


def grad_vdot(lie: LieDerivative, x):
    return lie.gradient(x)


def save_candidate(candidate: GramCandidate, path) -> None:
    """Write the dictionary descriptor and row-major Gram entries as JSON."""
    doc = {
        "format": "roacert-gram-candidate/1",
        "dimension": candidate.dictionary.dimension,
        "degree": candidate.dictionary.degree,
        "size": candidate.dictionary.size,
        "gram": [float(v) for v in candidate.gram.ravel()],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_candidate(path) -> GramCandidate:
    doc = json.loads(Path(path).read_text())
    d = PolyDictionary(int(doc["dimension"]), int(doc["degree"]))
    Q = np.asarray(doc["gram"], dtype=float)
    if Q.size != d.size * d.size:
        raise DimensionError(f"expected {d.size * d.size} Gram entries, found {Q.size}")
    return GramCandidate(d, Q.reshape(d.size, d.size))
