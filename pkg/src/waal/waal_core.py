"""Adversarial training stage: loss assembly, scaling coefficients, epoch loop.

The classifier head descends the supervised loss, the feature trunk descends
supervised plus weighted critic separation, and the critic ascends separation
while its slope is kept in check (quotient penalty or weight clipping). The
labeled stream is resampled with replacement to mirror the unlabeled batch
size, which is what the bias coefficient corrects for.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import tensor_net as tn

if TYPE_CHECKING:  # structural use only; the pool type lives in al_runtime
    from .al_runtime import Pool

TRAINING_MODES = ("waal", "hdiv_ablation", "supervised_only")
LIPSCHITZ_MODES = ("quotient-penalty", "weight-clip")
COEFFICIENT_CONVENTIONS = ("gamma-squared", "gamma-linear")


@dataclass(frozen=True)
class HyperParams:
    """Tunables of the training and query stages."""

    lr: float = 0.01
    momentum: float = 0.5
    batch_size: int = 64
    mu: float = 0.01
    selection_coeff: float = 5.0
    mixture_coeff: float = 0.5
    lipschitz_mode: str = "quotient-penalty"
    lambda_lip: float = 10.0
    clip_value: float = 0.1
    epochs: int = 80
    patience: int = 10
    lr_decay: tuple[tuple[float, float], ...] = ((0.5, 0.1), (0.75, 0.1))
    coefficient_convention: str = "gamma-squared"
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.momentum < 0 or self.momentum >= 1:
            raise ValueError(f"HyperParams: bad lr/momentum ({self.lr}, {self.momentum})")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 0:
            raise ValueError("HyperParams: batch_size/epochs must be >= 1, patience >= 0")
        if self.mu < 0 or self.lambda_lip < 0 or self.clip_value <= 0:
            raise ValueError("HyperParams: mu/lambda_lip must be >= 0, clip_value > 0")
        if not (0.0 <= self.mixture_coeff <= 1.0):
            raise ValueError(f"HyperParams: mixture_coeff outside [0, 1]: {self.mixture_coeff}")
        if self.lipschitz_mode not in LIPSCHITZ_MODES:
            raise ValueError(f"HyperParams: unknown lipschitz_mode {self.lipschitz_mode!r}")
        if self.coefficient_convention not in COEFFICIENT_CONVENTIONS:
            raise ValueError(
                f"HyperParams: unknown coefficient_convention {self.coefficient_convention!r}")
        for frac, factor in self.lr_decay:
            if not (0.0 < frac < 1.0) or factor <= 0:
                raise ValueError(f"HyperParams: bad lr_decay entry ({frac}, {factor})")


def bias_coefficient(gamma: float, alpha: float, convention: str = "gamma-squared") -> float:
    """Correction weight on the labeled critic mean under resampling.

    gamma is the unlabeled/labeled size ratio, alpha the budget/labeled ratio.
    The default convention carries a 1/gamma^2 prefactor; "gamma-linear" uses
    1/gamma (both orders circulate; they agree only at gamma = 1).
    """
    if gamma <= 0:
        raise ValueError(f"bias_coefficient: gamma must be positive, got {gamma}")
    if not (0 <= alpha <= gamma):
        raise ValueError(f"bias_coefficient: alpha outside [0, gamma]: {alpha}")
    if convention not in COEFFICIENT_CONVENTIONS:
        raise ValueError(f"bias_coefficient: unknown convention {convention!r}")
    lead = 1.0 / gamma ** 2 if convention == "gamma-squared" else 1.0 / gamma
    return lead * (gamma - alpha) / (1.0 + alpha)


def mu_prime(mu: float, gamma: float) -> float:
    """Effective adversarial weight after moving to per-mean batch terms."""
    if gamma <= 0:
        raise ValueError(f"mu_prime: gamma must be positive, got {gamma}")
    return gamma * mu / (1.0 + gamma)


def coefficient_consistency(L: int, U: int, B: int) -> float:
    """Worst relative error of the two scaling identities tying mu to mu'.

    Checked at mu = 1: population-form weight differences against their
    resampled per-mean counterparts. Exact algebra, so the return should sit
    at float-roundoff level for any valid (L, U, B).
    """
    if L <= 0 or U <= 0 or B < 0:
        raise ValueError(f"coefficient_consistency: bad sizes L={L}, U={U}, B={B}")
    gamma, alpha = U / L, B / L
    mp = mu_prime(1.0, gamma)

    lhs1 = 1.0 / (L + B) - 1.0 / (L + U)
    rhs1 = mp * bias_coefficient(gamma, alpha, "gamma-linear") / L
    lhs2 = 1.0 / (L + U)
    rhs2 = mp / U
    errs = (abs(lhs1 - rhs1) / max(abs(lhs1), abs(rhs1), 1e-300),
            abs(lhs2 - rhs2) / max(abs(lhs2), abs(rhs2), 1e-300))
    return float(max(errs))


def prediction_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class, clamped."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    picked = probs[np.arange(probs.shape[0]), labels]
    return float(-np.log(np.clip(picked, tn.LOG_CLAMP, None)).mean())


def adversarial_value(g_unlabeled: np.ndarray, g_labeled: np.ndarray,
                      mu_prime_: float, c0: float) -> float:
    """Critic separation: mu' * (mean over unlabeled - c0 * mean over labeled)."""
    return float(mu_prime_ * (np.mean(g_unlabeled) - c0 * np.mean(g_labeled)))


def hdiv_adversarial_value(g_unlabeled: np.ndarray, g_labeled: np.ndarray,
                           mu: float) -> float:
    """Binary cross-entropy discriminator objective (per-mean, clamped logs)."""
    gu = np.clip(np.asarray(g_unlabeled, dtype=float), tn.LOG_CLAMP, None)
    gl = np.clip(1.0 - np.asarray(g_labeled, dtype=float), tn.LOG_CLAMP, None)
    return float(-mu * (np.log(gu).mean() + np.log(gl).mean()))


def _neg_group(g: tn.ParamGroup) -> tn.ParamGroup:
    return tn.ParamGroup([(-W, -b) for W, b in g.layers])


def _sub_group(a: tn.ParamGroup, b: tn.ParamGroup) -> tn.ParamGroup:
    return tn.ParamGroup([(Wa - Wb, ba - bb)
                          for (Wa, ba), (Wb, bb) in zip(a.layers, b.layers)])


def round_coefficients(n_labeled: int, n_unlabeled: int, budget: int, mu: float,
                       convention: str = "gamma-squared"):
    """(gamma, alpha, c0, mu') for the current pool counts and round budget."""
    if n_labeled <= 0 or n_unlabeled <= 0:
        raise ValueError("round_coefficients: need labeled and unlabeled samples")
    gamma = n_unlabeled / n_labeled
    alpha = min(budget / n_labeled, gamma)
    return gamma, alpha, bias_coefficient(gamma, alpha, convention), mu_prime(mu, gamma)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    n_batches: int
    prediction_loss: float
    adversarial_value: float
    penalty_value: float
    val_accuracy: float = float("nan")


@dataclass(frozen=True)
class FeatureScale:
    """Per-feature standardization fitted on the visible training pool.

    Raw pool features stay untouched (masks, CSV round-trips and the console
    display all read them); the scale is applied at the network boundary.
    """

    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


def fit_feature_scale(X: np.ndarray) -> FeatureScale:
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    return FeatureScale(mean=X.mean(axis=0), std=np.where(std > 1e-12, std, 1.0))


@dataclass
class TrainResult:
    params: tn.NetworkParams
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = float("-inf")
    scale: FeatureScale | None = None


def classification_accuracy(params: tn.NetworkParams, X: np.ndarray,
                            y: np.ndarray, scale: FeatureScale | None = None) -> float:
    if scale is not None:
        X = scale.apply(X)
    probs = tn.forward_classifier(params, X)
    return float(np.mean(probs.argmax(axis=1) == np.asarray(y)))


def train_epoch(pool: "Pool", params: tn.NetworkParams, opt_state: tn.OptimizerState,
                hp: HyperParams, shuffle_rng: np.random.Generator,
                resample_rng: np.random.Generator, mode: str = "waal",
                budget: int = 0, lr: float | None = None,
                scale: FeatureScale | None = None):
    """One pass over the unlabeled pool in mini-batches.

    Per batch: the unlabeled slice is matched with a labeled slice resampled
    with replacement, the classifier descends the supervised gradient, the
    trunk descends supervised plus weighted separation, and the critic ascends
    separation under its slope control. All gradients are evaluated at the
    batch-start snapshot, then applied in one momentum step. The two
    generators keep unlabeled shuffling and labeled resampling independently
    reproducible. `scale` standardizes inputs at the network boundary.

    Returns (params, opt_state, EpochStats).
    """
    if mode not in TRAINING_MODES:
        raise ValueError(f"train_epoch: unknown mode {mode!r}")
    labeled = np.asarray(pool.labeled_idx)
    unlabeled = np.asarray(pool.unlabeled_idx)
    if labeled.size < 1:
        raise ValueError("train_epoch: pool has no labeled samples")
    if unlabeled.size < hp.batch_size:
        raise ValueError(
            f"train_epoch: {unlabeled.size} unlabeled samples < batch_size {hp.batch_size}")

    X, y_known = pool.features, pool.labels
    step_lr = hp.lr if lr is None else lr
    S = hp.batch_size
    _, _, c0, mp = round_coefficients(labeled.size, unlabeled.size, budget, hp.mu,
                                      hp.coefficient_convention)

    perm = shuffle_rng.permutation(unlabeled)
    n_batches = perm.size // S
    loss_sum = adv_sum = pen_sum = 0.0

    for bi in range(n_batches):
        ub = perm[bi * S:(bi + 1) * S]
        lb = resample_rng.choice(labeled, size=S, replace=True)
        X_u, X_l, y_l = X[ub], X[lb], y_known[lb]
        if scale is not None:
            X_u, X_l = scale.apply(X_u), scale.apply(X_l)

        grads, loss = tn.grad_prediction(params, X_l, y_l)
        loss_sum += loss

        if mode == "waal":
            adv, adv_val = tn.grad_adversarial(params, X_l, X_u, mp, c0)
            grads.feature = tn._add_group(grads.feature, adv.feature)
            # critic ascends separation: descend its negation
            grads.critic = _neg_group(adv.critic)
            adv_sum += adv_val
        elif mode == "hdiv_ablation":
            hd, bce = tn.grad_hdiv_adversarial(params, X_l, X_u, hp.mu)
            grads.feature = _sub_group(grads.feature, hd.feature)
            grads.critic = hd.critic
            adv_sum += bce

        if mode != "supervised_only" and hp.lipschitz_mode == "quotient-penalty":
            pen, pen_val = tn.grad_lipschitz_penalty(params, X_l, X_u, hp.lambda_lip)
            grads.critic = tn._add_group(grads.critic, pen.critic)
            pen_sum += pen_val

        params, opt_state = tn.sgd_momentum_step(params, grads, opt_state,
                                                 step_lr, hp.momentum)
        if mode != "supervised_only" and hp.lipschitz_mode == "weight-clip":
            params = tn.clip_critic_weights(params, hp.clip_value)

    denom = max(n_batches, 1)
    stats = EpochStats(epoch=0, lr=step_lr, n_batches=n_batches,
                       prediction_loss=loss_sum / denom,
                       adversarial_value=adv_sum / denom,
                       penalty_value=pen_sum / denom)
    return params, opt_state, stats


def default_layer_spec(input_dim: int, n_classes: int) -> tn.LayerSpec:
    return tn.LayerSpec(feature=(input_dim, 64),
                        classifier=(64, 32, n_classes),
                        critic=(64, 32, 1))


def effective_lr(hp: HyperParams, epoch: int) -> float:
    """Step-decay schedule; epoch is 1-based."""
    lr = hp.lr
    for frac, factor in hp.lr_decay:
        if epoch > frac * hp.epochs:
            lr *= factor
    return lr


def train_from_scratch(pool: "Pool", hp: HyperParams, mode: str = "waal",
                       budget: int = 0,
                       layer_spec: tn.LayerSpec | None = None) -> TrainResult:
    """Fresh initialization, epoch loop with early stopping on validation accuracy.

    Keeps the best-validation snapshot (later epoch on ties); stops once the
    accuracy has failed to improve for more than `patience` epochs. Inputs are
    standardized by statistics of the visible training pool; the fitted scale
    rides along in the result for use at query and evaluation time. Fully
    deterministic given (pool, hp, mode, budget).
    """
    val_idx = np.asarray(pool.val_idx)
    if val_idx.size == 0:
        raise ValueError("train_from_scratch: pool has no validation split")
    if layer_spec is None:
        layer_spec = default_layer_spec(pool.features.shape[1], pool.n_classes)

    params = tn.init_params(layer_spec, hp.seed)
    opt_state = tn.OptimizerState.zeros(params)
    streams = np.random.SeedSequence(entropy=hp.seed, spawn_key=(202608,)).spawn(2)
    shuffle_rng = np.random.default_rng(streams[0])
    resample_rng = np.random.default_rng(streams[1])

    train_idx = np.concatenate([np.asarray(pool.labeled_idx),
                                np.asarray(pool.unlabeled_idx)])
    scale = fit_feature_scale(pool.features[train_idx])
    X_val, y_val = scale.apply(pool.features[val_idx]), pool.labels[val_idx]
    result = TrainResult(params=params.clone(), scale=scale)
    stale = 0
    for epoch in range(1, hp.epochs + 1):
        lr = effective_lr(hp, epoch)
        params, opt_state, stats = train_epoch(pool, params, opt_state, hp,
                                               shuffle_rng, resample_rng,
                                               mode=mode, budget=budget, lr=lr,
                                               scale=scale)
        stats.epoch = epoch
        stats.val_accuracy = classification_accuracy(params, X_val, y_val)
        result.history.append(stats)
        if stats.val_accuracy >= result.best_val_accuracy:
            # ties keep the later epoch: equal validation score, more epochs
            # of fitting on the labeled pool (validation can saturate early
            # when the labeled regions are easy)
            improved = stats.val_accuracy > result.best_val_accuracy
            result.best_val_accuracy = stats.val_accuracy
            result.best_epoch = epoch
            result.params = params.clone()
            stale = 0 if improved else stale + 1
        else:
            stale += 1
        if stale > hp.patience:
            break
    return result
