"""Recursive regularization for convex population stationarity.

The outer loop repeatedly adds quadratic proximal terms (lambda_t/2)
||w - center_t||^2 with doubling lambda_t, solving each regularized problem
on a fresh disjoint data slice with a private strongly-convex solver
(projected noisy full-batch GD, or single-pass phased SGD with output
perturbation) over a ball whose radius grows by sqrt(2) per round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core.data import Dataset
from .core.gradcheck import convexity_spot_check
from .core.loss import LossSpec
from .privacy import NoiseLedger, PrivacyBudget, draw_gaussian
from .util import floori

KT_CAP = 10 ** 7  # desk-scale cap on inner step counts; capped rounds are flagged


class RegularizedLoss(LossSpec):
    """base(w; x) + sum_i (lambda_i/2) ||w - center_i||^2, per sample.

    Effective smoothness is base.L1 + sum(lambda_i); effective strong
    convexity is at least sum(lambda_i) when the base is convex. The
    regularizer is data-independent, so per-sample sensitivity (and hence
    noise calibration) keeps the base Lipschitz constant.
    """

    name = "regularized"

    def __init__(self, base: LossSpec, centers: list[np.ndarray], lambdas: list[float]):
        if len(centers) != len(lambdas):
            raise ValueError("centers and lambdas must have the same length")
        if any(l < 0 for l in lambdas):
            raise ValueError("lambdas must be non-negative")
        lam_total = float(sum(lambdas))
        super().__init__(base.dim, base.L0, base.L1 + lam_total,
                         F0_hint=base.F0_hint, convex=base.convex)
        self.base = base
        self.centers = [np.asarray(c, dtype=np.float64) for c in centers]
        self.lambdas = [float(l) for l in lambdas]
        self.strong_convexity = lam_total if base.convex else 0.0
        self._lam_total = lam_total
        self._offset = sum((l * c for l, c in zip(self.lambdas, self.centers)),
                           np.zeros(base.dim))
        self._const = 0.5 * sum(l * float(c @ c)
                                for l, c in zip(self.lambdas, self.centers))

    def _reg_value(self, w: np.ndarray) -> float:
        return float(0.5 * self._lam_total * (w @ w) - w @ self._offset + self._const)

    def _reg_grad(self, w: np.ndarray) -> np.ndarray:
        return self._lam_total * w - self._offset

    def eval(self, w, x, y=None):
        return self.base.eval(w, x, y) + self._reg_value(np.asarray(w, dtype=np.float64))

    def grad(self, w, x, y=None):
        return self.base.grad(w, x, y) + self._reg_grad(np.asarray(w, dtype=np.float64))

    def eval_mean(self, w, X, Y=None, weights=None):
        return self.base.eval_mean(w, X, Y, weights) + self._reg_value(w)

    def grad_mean(self, w, X, Y=None, weights=None):
        return self.base.grad_mean(w, X, Y, weights) + self._reg_grad(w)

    def probe_sample(self, rng):
        return self.base.probe_sample(rng)

    def validate_dataset(self, dataset):
        self.base.validate_dataset(dataset)


def regularize(base: LossSpec, centers: list[np.ndarray],
               lambdas: list[float]) -> LossSpec:
    """The recursively regularized loss; empty lists return the base as-is."""
    if len(centers) != len(lambdas):
        raise ValueError("centers and lambdas must have the same length")
    if not centers:
        return base
    return RegularizedLoss(base, centers, lambdas)


def selector_weighted_avg(iterates: list[np.ndarray], eta: float, lam: float) -> np.ndarray:
    """Geometric weighted average with weights (1 - eta lam)^(-k), k = 1..K.

    Weights are normalized by the largest weight before summing for
    numerical stability. Late iterates receive the most weight.
    """
    K = len(iterates)
    if K < 1:
        raise ValueError("need at least one iterate")
    r = eta * lam
    if r < 0 or r >= 1:
        raise ValueError(f"need 0 <= eta*lam < 1, got {r}")
    base = 1.0 - r
    acc = np.zeros_like(iterates[0])
    total = 0.0
    for k in range(1, K + 1):
        g = base ** (K - k)  # (1-r)^(-k) / (1-r)^(-K)
        acc = acc + g * iterates[k - 1]
        total += g
    return acc / total


def make_selector(lam: float):
    """Bind the strong-convexity weight; sub-routines supply their step size."""
    def selector(iterates: list[np.ndarray], eta: float) -> np.ndarray:
        return selector_weighted_avg(iterates, eta, lam)
    return selector


def project_ball(w: np.ndarray, R: float) -> np.ndarray:
    """Euclidean projection onto the centered ball of radius R."""
    if R < 0:
        raise ValueError("R must be non-negative")
    nw = float(np.linalg.norm(w))
    if nw <= R:
        return w
    return w * (R / nw)


def noisy_gd(S: Dataset, loss: LossSpec, R: float, T: int, eta: float,
             selector, sigma: float, rng: np.random.Generator,
             ledger: NoiseLedger | None = None, site: str = "gd-step") -> np.ndarray:
    """Projected noisy full-batch GD from 0; returns selector of all iterates.

    w_{t+1} = Proj_R(w_t - eta (grad F(w_t; S) + xi_t)), xi_t ~ N(0, sigma^2 I),
    for t = 1..T-1.
    """
    if getattr(loss, "strong_convexity", 0.0) <= 0.0:
        raise ValueError("noisy_gd requires a strongly convex (regularized) loss")
    w = np.zeros(S.dim)
    ws = [w]
    for _ in range(T - 1):
        xi = draw_gaussian(S.dim, sigma, rng, ledger, site)
        g = loss.grad_mean(w, S.X, S.y)
        w = project_ball(w - eta * (g + xi), R)
        ws.append(w)
    return selector(ws, eta)


def output_perturbed_sgd(w1: np.ndarray, S: Dataset, loss: LossSpec, R: float,
                         eta: float, sigma: float, selector,
                         rng: np.random.Generator,
                         ledger: NoiseLedger | None = None,
                         site: str = "opsgd-output") -> np.ndarray:
    """One in-order projected SGD pass, then a perturbed weighted average.

    w_{t+1} = Proj_R(w_t - eta grad f(w_t; x_t)) for t = 1..|S|-1; the output
    is selector({w_t}) + N(0, sigma^2 I).
    """
    if S.n < 1:
        raise ValueError("need at least one sample")
    w = np.asarray(w1, dtype=np.float64)
    ws = [w]
    for t in range(S.n - 1):
        g = loss.grad(w, S.X[t], None if S.y is None else S.y[t])
        w = project_ball(w - eta * g, R)
        ws.append(w)
    tilde = selector(ws, eta)
    xi = draw_gaussian(S.dim, sigma, rng, ledger, site)
    return tilde + xi


def phased_sgd(S: Dataset, loss: LossSpec, R: float, eta: float, sigma: float,
               selector, rng: np.random.Generator,
               ledger: NoiseLedger | None = None,
               site: str = "phased") -> np.ndarray:
    """ceil(log2 |S|) phases of OutputPerturbedSGD over disjoint slices.

    Phase k runs on the next floor(|S|/2^k) samples with step eta_k = eta/4^k
    and output noise sigma_k = eta_k * sigma, warm-starting at the previous
    phase's output. Exhausted slices end the schedule at the last complete
    phase.
    """
    n = S.n
    if n < 2:
        raise ValueError("need at least two samples")
    K = math.ceil(math.log2(n))
    w = np.zeros(S.dim)
    pos = 0
    for k in range(1, K + 1):
        size = n >> k
        if size < 1 or pos + size > n:
            break
        part = S.slice(pos, pos + size)
        pos += size
        eta_k = eta * 4.0 ** (-k)
        sigma_k = eta_k * sigma
        w = output_perturbed_sgd(w, part, loss, R, eta_k, sigma_k, selector,
                                 rng, ledger, site=f"{site}-k{k}")
    return w


@dataclass(frozen=True)
class RRParams:
    mode: str                 # "optimal" | "linear_time"
    n: int
    T: int
    lam: float
    R_bar: float
    slice_size: int
    lambdas: tuple[float, ...]   # lambda_t = 2^t lam, t = 0..T-1
    radii: tuple[float, ...]     # R_t = sqrt(2)^t R_bar
    K: tuple[int, ...]           # inner step counts, index 0 unused
    eta: tuple[float, ...]
    sigma: tuple[float, ...]
    kt_capped: tuple[bool, ...]

    def validate(self) -> None:
        if self.mode not in ("optimal", "linear_time"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        for t in range(1, self.T):
            if not math.isclose(self.lambdas[t], 2.0 * self.lambdas[t - 1]):
                raise ValueError("lambda_t must double")
            if not math.isclose(self.radii[t], math.sqrt(2.0) * self.radii[t - 1]):
                raise ValueError("R_t must grow by sqrt(2)")


def derive_rr_params(mode: str, n: int, d: int, L0: float, L1: float,
                     R_bar: float, budget: PrivacyBudget,
                     overrides: dict | None = None) -> RRParams:
    """Schedules of the two regimes.

    optimal:     lam = L0^2/(L1 R_bar) min(1/n, d/(n eps)^2), inner counts
                 K_t = max(((L1+lam_t)/lam_t) log((L1+lam_t)/lam_t),
                           n^2 eps^2 (L0^2 lam + L1^(3/2)) /
                           (T^2 lam d L0^2 log(1/delta)))
    linear_time: lam = max(L0^2/(L1 R_bar^2) min(1/n, d/(n eps)^2),
                           L1 log(n)/n), K_t = floor(n/T)

    Common: T = floor(log2(L1/lam)), lambda_t = 2^t lam, R_t = sqrt(2)^t R_bar,
    eta_t = log(K_t)/(lambda_t K_t), sigma_t = 8 L0 K_t sqrt(log(1/delta))/(m eps)
    with m the round's slice size. K_t is capped at 10^7 (flagged per round).
    """
    if min(L0, L1, R_bar) <= 0:
        raise ValueError("L0, L1, R_bar must be positive")
    eps, delta = budget.eps, budget.delta
    log1d = math.log(1.0 / delta)
    ov = dict(overrides or {})

    trade = min(1.0 / n, d / (n * eps) ** 2)
    if mode == "optimal":
        lam = L0 ** 2 / (L1 * R_bar) * trade
    elif mode == "linear_time":
        lam = max(L0 ** 2 / (L1 * R_bar ** 2) * trade, L1 * math.log(n) / n)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lam = float(ov.pop("lam", lam))
    if lam >= L1:
        raise ValueError(f"lam = {lam:.6g} >= L1 = {L1:.6g}: T would be 0; "
                         "increase n or R_bar")
    T = int(ov.pop("T", floori(math.log2(L1 / lam))))
    T = max(T, 1)
    m = n // T

    k_override = ov.pop("K_t", None)
    eta_override = ov.pop("eta_t", None)
    sigma_override = ov.pop("sigma_t", None)
    if ov:
        raise ValueError(f"unknown recursive-regularization overrides: {sorted(ov)}")

    lambdas, radii, Ks, etas, sigmas, capped = [], [], [], [], [], []
    for t in range(T):
        lam_t = 2.0 ** t * lam
        lambdas.append(lam_t)
        radii.append(math.sqrt(2.0) ** t * R_bar)
        if t == 0:
            Ks.append(0)
            etas.append(0.0)
            sigmas.append(0.0)
            capped.append(False)
            continue
        if k_override == "branch1":
            # convergence-driven branch alone: enough inner steps that
            # eta_t = log(K)/(lam_t K) sits below 1/(L1 + lam_t)
            ratio = (L1 + lam_t) / lam_t
            K_t = int(math.ceil(ratio * math.log(ratio)))
            was_capped = False
        elif k_override is not None:
            K_t = int(k_override)
            was_capped = False
        elif mode == "optimal":
            ratio = (L1 + lam_t) / lam_t
            K_raw = max(ratio * math.log(ratio),
                        (n * eps) ** 2 * (L0 ** 2 * lam + L1 ** 1.5)
                        / (T ** 2 * lam * d * L0 ** 2 * log1d))
            K_t = int(math.ceil(K_raw))
            was_capped = K_t > KT_CAP
            K_t = min(K_t, KT_CAP)
        else:
            K_t = m
            was_capped = False
        K_t = max(K_t, 2)
        eta_t = math.log(K_t) / (lam_t * K_t) if eta_override is None else float(eta_override)
        sigma_t = (8.0 * L0 * K_t * math.sqrt(log1d) / (m * eps)
                   if sigma_override is None else float(sigma_override))
        Ks.append(K_t)
        etas.append(eta_t)
        sigmas.append(sigma_t)
        capped.append(was_capped)

    params = RRParams(mode=mode, n=n, T=T, lam=lam, R_bar=R_bar, slice_size=m,
                      lambdas=tuple(lambdas), radii=tuple(radii), K=tuple(Ks),
                      eta=tuple(etas), sigma=tuple(sigmas), kt_capped=tuple(capped))
    params.validate()
    return params


@dataclass
class RRRunReport:
    w_out: np.ndarray
    rounds: list[dict]
    noise_ledger: NoiseLedger
    t1_edge: bool = False
    kt_capped: bool = False


def run_recursive_regularization(S: Dataset, loss: LossSpec, params: RRParams,
                                 subroutine: str,
                                 rng: np.random.Generator) -> RRRunReport:
    """T-1 outer rounds over disjoint front-to-back slices of size floor(n/T).

    Round t solves the round's regularized objective (centers 0, w1..w_{t-1})
    over the radius-R_t ball and appends its output as the next center; the
    last computed center is returned. T = 1 returns the origin, flagged.
    """
    if subroutine not in ("noisy_gd", "phased_sgd"):
        raise ValueError(f"unknown subroutine {subroutine!r}")
    if not loss.convex:
        raise ValueError("recursive regularization requires a convex base loss")
    convexity_spot_check(loss, probes=16, seed=0)
    loss.validate_dataset(S)

    ledger = NoiseLedger()
    if params.T == 1:
        return RRRunReport(w_out=np.zeros(S.dim), rounds=[], noise_ledger=ledger,
                           t1_edge=True)

    centers = [np.zeros(S.dim)]
    rounds = []
    pos = 0
    for t in range(1, params.T):
        reg = regularize(loss, centers, list(params.lambdas[:t]))
        part = S.slice(pos, pos + params.slice_size)
        pos += params.slice_size
        sel = make_selector(params.lambdas[t])
        if subroutine == "noisy_gd":
            w_t = noisy_gd(part, reg, params.radii[t], params.K[t], params.eta[t],
                           sel, params.sigma[t], rng, ledger, site=f"gd-t{t}")
        else:
            w_t = phased_sgd(part, reg, params.radii[t], params.eta[t],
                             params.sigma[t], sel, rng, ledger, site=f"phased-t{t}")
        centers.append(w_t)
        rounds.append({"t": t, "lambda_t": params.lambdas[t], "R_t": params.radii[t],
                       "K_t": params.K[t], "sigma_t": params.sigma[t],
                       "center_norm": float(np.linalg.norm(w_t))})
    return RRRunReport(w_out=centers[-1], rounds=rounds, noise_ledger=ledger,
                       kt_capped=any(params.kt_capped))
