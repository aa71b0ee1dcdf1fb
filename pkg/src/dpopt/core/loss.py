"""Per-sample losses with declared Lipschitz and smoothness constants.

Every loss exposes scalar evaluation/gradient plus vectorized batch means.
Declared ``L0`` (Lipschitz) and ``L1`` (smoothness) bounds hold uniformly
over the loss's data domain; ``F0_hint`` upper-bounds the initial gap
F(0) - min F and feeds the optimizers' parameter derivations.
"""
from __future__ import annotations

import math

import numpy as np

from .data import Dataset


class LossSpec:
    """Base class for per-sample differentiable losses.

    Subclasses implement ``eval``/``grad`` for a single sample and the
    vectorized ``eval_mean``/``grad_mean`` over a batch. Gradients are
    closed-form throughout; there is no autodiff.
    """

    name = "loss"

    def __init__(self, dim: int, L0: float, L1: float,
                 F0_hint: float | None = None, convex: bool = False):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if L0 < 0 or L1 < 0:
            raise ValueError("L0 and L1 must be non-negative")
        self.dim = int(dim)
        self.L0 = float(L0)
        self.L1 = float(L1)
        self.F0_hint = None if F0_hint is None else float(F0_hint)
        self.convex = bool(convex)

    # single sample ------------------------------------------------------
    def eval(self, w: np.ndarray, x: np.ndarray, y: float | None = None) -> float:
        raise NotImplementedError

    def grad(self, w: np.ndarray, x: np.ndarray, y: float | None = None) -> np.ndarray:
        raise NotImplementedError

    # batch means --------------------------------------------------------
    def eval_mean(self, w: np.ndarray, X: np.ndarray, Y: np.ndarray | None = None,
                  weights: np.ndarray | None = None) -> float:
        vals = np.array([self.eval(w, X[i], None if Y is None else Y[i])
                         for i in range(X.shape[0])])
        if weights is None:
            return float(np.mean(vals))
        return float(np.dot(weights, vals))

    def grad_mean(self, w: np.ndarray, X: np.ndarray, Y: np.ndarray | None = None,
                  weights: np.ndarray | None = None) -> np.ndarray:
        grads = np.stack([self.grad(w, X[i], None if Y is None else Y[i])
                          for i in range(X.shape[0])])
        if weights is None:
            return grads.mean(axis=0)
        return weights @ grads

    # plumbing -----------------------------------------------------------
    def probe_sample(self, rng: np.random.Generator) -> tuple[np.ndarray, float | None]:
        """A random data point from the loss's domain, for gradient checks."""
        return rng.standard_normal(self.dim), None

    def validate_dataset(self, dataset: Dataset) -> None:
        if dataset.dim != self.dim:
            raise ValueError(f"dataset dim {dataset.dim} != loss dim {self.dim}")


class ZeroLoss(LossSpec):
    """Identically-zero loss; regularizers composed on top of it give pure
    proximal objectives, handy as a base case."""

    name = "zero"

    def __init__(self, dim: int):
        super().__init__(dim, 0.0, 0.0, F0_hint=0.0, convex=True)

    def eval(self, w, x, y=None):
        return 0.0

    def grad(self, w, x, y=None):
        return np.zeros(self.dim)

    def eval_mean(self, w, X, Y=None, weights=None):
        return 0.0

    def grad_mean(self, w, X, Y=None, weights=None):
        return np.zeros(self.dim)

    def probe_sample(self, rng):
        return np.zeros(self.dim), None


def erm_grad(loss: LossSpec, w: np.ndarray, S: Dataset) -> np.ndarray:
    """Exact empirical-risk gradient (1/n) sum_i grad(w, x_i); no noise."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (S.dim,):
        raise ValueError(f"w has shape {w.shape}, expected ({S.dim},)")
    loss.validate_dataset(S)
    return loss.grad_mean(w, S.X, S.y)


def erm_value(loss: LossSpec, w: np.ndarray, S: Dataset) -> float:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (S.dim,):
        raise ValueError(f"w has shape {w.shape}, expected ({S.dim},)")
    return loss.eval_mean(w, S.X, S.y)


# ---------------------------------------------------------------------------
# Huber mean-estimation loss: quadratic inside radius B = L0/L1, linear outside.
# ---------------------------------------------------------------------------

class HuberMeanLoss(LossSpec):
    """f(w; x) = (L1/2)||w-x||^2 when ||w-x|| <= B, else L0||w-x|| - L0^2/(2 L1).

    B = L0/L1; the two branches agree in value and gradient at the seam.
    Ties at ||w-x|| = B take the quadratic branch (value-irrelevant, fixed
    for determinism). The ERM minimizer of a dataset contained in a ball of
    radius B/4 is the dataset mean.
    """

    name = "huber_mean"

    def __init__(self, L0: float, L1: float, dim: int = 2):
        if L0 <= 0 or L1 <= 0:
            raise ValueError("L0 and L1 must be positive")
        super().__init__(dim, L0, L1, F0_hint=None, convex=True)
        self.B = L0 / L1

    def eval(self, w, x, y=None):
        r = np.asarray(w, dtype=np.float64) - np.asarray(x, dtype=np.float64)
        nr = float(np.linalg.norm(r))
        if nr <= self.B:
            return 0.5 * self.L1 * nr * nr
        return self.L0 * nr - self.L0 ** 2 / (2.0 * self.L1)

    def grad(self, w, x, y=None):
        r = np.asarray(w, dtype=np.float64) - np.asarray(x, dtype=np.float64)
        nr = float(np.linalg.norm(r))
        if nr <= self.B:
            return self.L1 * r
        return (self.L0 / nr) * r

    def eval_mean(self, w, X, Y=None, weights=None):
        R = w[None, :] - X
        nr = np.linalg.norm(R, axis=1)
        inside = nr <= self.B
        vals = np.where(inside, 0.5 * self.L1 * nr * nr,
                        self.L0 * nr - self.L0 ** 2 / (2.0 * self.L1))
        if weights is None:
            return float(np.mean(vals))
        return float(np.dot(weights, vals))

    def grad_mean(self, w, X, Y=None, weights=None):
        R = w[None, :] - X
        nr = np.linalg.norm(R, axis=1)
        scale = np.where(nr <= self.B, self.L1, self.L0 / np.maximum(nr, 1e-300))
        G = R * scale[:, None]
        if weights is None:
            return G.mean(axis=0)
        return weights @ G

    def probe_sample(self, rng):
        return rng.standard_normal(self.dim) * (self.B / 4.0), None


def huber_mean_loss(L0: float, L1: float, dim: int = 2) -> HuberMeanLoss:
    return HuberMeanLoss(L0, L1, dim)


# ---------------------------------------------------------------------------
# One-dimensional Huber-regularized loss with a two-point data distribution.
# ---------------------------------------------------------------------------

class Huber1DLoss(LossSpec):
    """f(w; x) = (L0/2) w x + (L1/2) D(w) on x in {-1, +1}.

    D(w) = w^2 for |w| <= L0/(2 L1), else (L0/L1)|w| - L0^2/(4 L1^2).
    Data are drawn x = +1 with probability (1 + v p)/2 and -1 otherwise,
    so the population gradient inside the quadratic branch is
    (L0/2) v p + L1 w.
    """

    name = "huber_1d"

    def __init__(self, L0: float, L1: float, p: float, v: int):
        if L0 <= 0 or L1 <= 0:
            raise ValueError("L0 and L1 must be positive")
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if v not in (-1, 1):
            raise ValueError("v must be -1 or +1")
        super().__init__(1, L0, L1, F0_hint=L0, convex=True)
        self.p = float(p)
        self.v = int(v)
        self.radius = L0 / (2.0 * L1)

    def _D(self, w: float) -> float:
        if abs(w) <= self.radius:
            return w * w
        return (self.L0 / self.L1) * abs(w) - self.L0 ** 2 / (4.0 * self.L1 ** 2)

    def _Dprime(self, w: float) -> float:
        if abs(w) <= self.radius:
            return 2.0 * w
        return (self.L0 / self.L1) * math.copysign(1.0, w)

    def eval(self, w, x, y=None):
        ws = float(np.asarray(w).reshape(()))
        xs = float(np.asarray(x).reshape(()))
        return 0.5 * self.L0 * ws * xs + 0.5 * self.L1 * self._D(ws)

    def grad(self, w, x, y=None):
        ws = float(np.asarray(w).reshape(()))
        xs = float(np.asarray(x).reshape(()))
        return np.array([0.5 * self.L0 * xs + 0.5 * self.L1 * self._Dprime(ws)])

    def eval_mean(self, w, X, Y=None, weights=None):
        ws = float(np.asarray(w).reshape(()))
        xbar = float(np.mean(X)) if weights is None else float(weights @ X[:, 0])
        return 0.5 * self.L0 * ws * xbar + 0.5 * self.L1 * self._D(ws)

    def grad_mean(self, w, X, Y=None, weights=None):
        ws = float(np.asarray(w).reshape(()))
        xbar = float(np.mean(X)) if weights is None else float(weights @ X[:, 0])
        return np.array([0.5 * self.L0 * xbar + 0.5 * self.L1 * self._Dprime(ws)])

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        """Draw n points: +1 w.p. (1 + v p)/2, -1 otherwise."""
        u = rng.random(n)
        x = np.where(u < (1.0 + self.v * self.p) / 2.0, 1.0, -1.0)
        return Dataset(x[:, None])

    def population_grad(self, w) -> np.ndarray:
        """Exact gradient of the population risk at w."""
        ws = float(np.asarray(w).reshape(()))
        return np.array([0.5 * self.L0 * self.v * self.p
                         + 0.5 * self.L1 * self._Dprime(ws)])

    def probe_sample(self, rng):
        return np.array([1.0 if rng.random() < 0.5 else -1.0]), None


def huber_1d_loss(L0: float, L1: float, p: float, v: int) -> Huber1DLoss:
    return Huber1DLoss(L0, L1, p, v)


# ---------------------------------------------------------------------------
# Generalized linear models: f(w; (x, y)) = phi_y(<w, x>).
# ---------------------------------------------------------------------------

class LinkFamily:
    """A scalar link z -> phi_y(z), acting on the residual z - y (y defaults
    to 0 when the dataset carries no labels)."""

    def __init__(self, name: str, value, slope, convex: bool):
        self.name = name
        self._value = value
        self._slope = slope
        self.convex = convex

    def value(self, z: np.ndarray, y: np.ndarray | None) -> np.ndarray:
        r = z if y is None else z - y
        return self._value(r)

    def slope(self, z: np.ndarray, y: np.ndarray | None) -> np.ndarray:
        r = z if y is None else z - y
        return self._slope(r)


def square_link() -> LinkFamily:
    """phi_y(z) = (z - y)^2 / 2; convex, 1-smooth, Lipschitz only on bounded z."""
    return LinkFamily("square", lambda r: 0.5 * r * r, lambda r: r, convex=True)


def _logcosh(r):
    a = np.abs(r)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def tanh_link() -> LinkFamily:
    """phi_y(z) = log cosh(z - y), so phi' = tanh; convex, 1-Lipschitz, 1-smooth."""
    return LinkFamily("tanh", _logcosh, np.tanh, convex=True)


# sup |phi'| = 3*sqrt(3)/8 at r = 1/sqrt(3); sup |phi''| = 2 at r = 0.
# Both are re-verified by numeric maximization in the test suite before use.
RATIONAL_L0 = 3.0 * math.sqrt(3.0) / 8.0
RATIONAL_L1 = 2.0


def rational_link() -> LinkFamily:
    """phi_y(z) = r^2 / (1 + r^2) with r = z - y; bounded, smooth, nonconvex."""
    def value(r):
        r2 = r * r
        return r2 / (1.0 + r2)

    def slope(r):
        d = 1.0 + r * r
        return 2.0 * r / (d * d)

    return LinkFamily("rational", value, slope, convex=False)


class GLMLoss(LossSpec):
    """GLM loss with gradient phi'_y(<w, x>) x.

    Declared constants are L0 = L0_phi * normX and L1 = L1_phi * normX^2,
    valid on the domain ||x|| <= normX (enforced at dataset-bind time).
    """

    name = "glm"

    def __init__(self, link: LinkFamily, L0_phi: float, L1_phi: float,
                 normX: float, dim: int, F0_hint: float | None = None):
        if normX <= 0:
            raise ValueError("normX must be positive")
        super().__init__(dim, L0_phi * normX, L1_phi * normX ** 2,
                         F0_hint=F0_hint, convex=link.convex)
        self.link = link
        self.L0_phi = float(L0_phi)
        self.L1_phi = float(L1_phi)
        self.normX = float(normX)

    def eval(self, w, x, y=None):
        z = float(np.dot(w, x))
        return float(self.link.value(np.float64(z), None if y is None else np.float64(y)))

    def grad(self, w, x, y=None):
        z = float(np.dot(w, x))
        s = float(self.link.slope(np.float64(z), None if y is None else np.float64(y)))
        return s * np.asarray(x, dtype=np.float64)

    def eval_mean(self, w, X, Y=None, weights=None):
        z = X @ w
        vals = self.link.value(z, Y)
        if weights is None:
            return float(np.mean(vals))
        return float(np.dot(weights, vals))

    def grad_mean(self, w, X, Y=None, weights=None):
        z = X @ w
        s = self.link.slope(z, Y)
        if weights is None:
            return (X.T @ s) / X.shape[0]
        return X.T @ (s * weights)

    def probe_sample(self, rng):
        z = rng.standard_normal(self.dim)
        x = 0.9 * self.normX * z / max(np.linalg.norm(z), 1e-12)
        return x, float(rng.standard_normal() * 0.5)

    def validate_dataset(self, dataset: Dataset) -> None:
        super().validate_dataset(dataset)
        worst = dataset.max_feature_norm()
        if worst > self.normX * (1.0 + 1e-12):
            raise ValueError(f"feature norm {worst} exceeds declared bound {self.normX}")


def glm_loss(link: LinkFamily, L0_phi: float, L1_phi: float, normX: float,
             dim: int, F0_hint: float | None = None) -> GLMLoss:
    return GLMLoss(link, L0_phi, L1_phi, normX, dim, F0_hint)


def synthetic_nonconvex_loss(d: int, normX: float = 1.0) -> GLMLoss:
    """Benchmark fixture: the bounded rational link composed with <w, x>.

    phi takes values in [0, 1), so F(0) - min F < 1 and F0_hint = 1 is a
    valid gap bound for any dataset. With unlabeled data the origin is a
    stationary point (phi'(0) = 0); labels shift the link argument and move
    the minimizer away from the origin.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    loss = GLMLoss(rational_link(), RATIONAL_L0, RATIONAL_L1, normX, d, F0_hint=1.0)
    loss.name = "synthetic_nonconvex"
    return loss
