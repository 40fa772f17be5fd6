"""Query-stage scoring and batch selection.

The adversarial strategy ranks unlabeled points by an uncertainty upper bound
minus a weighted critic output (high critic = far from the labeled
distribution) and takes the smallest scores. Classic baselines live here too
so benchmark runs can swap strategies behind one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import tensor_net as tn

if TYPE_CHECKING:
    from .al_runtime import Pool
    from .waal_core import FeatureScale, HyperParams

BASELINE_KINDS = ("random", "least_confidence", "margin", "entropy",
                  "kcenter_greedy", "kmedian")
KMEDIAN_MAX_ITER = 100


@dataclass(frozen=True)
class QueryScore:
    index: int
    uncertainty: float
    diversity: float
    combined: float


def score_single_worst(p) -> float:
    """Negative log of the smallest class probability (clamped)."""
    p = np.asarray(p, dtype=float)
    return float(-np.log(max(p.min(), tn.LOG_CLAMP)))


def score_l1(p) -> float:
    """Sum of negative log probabilities over all classes (clamped)."""
    p = np.asarray(p, dtype=float)
    return float(-np.log(np.clip(p, tn.LOG_CLAMP, None)).sum())


def uncertainty(p, beta: float) -> float:
    """Convex mix: beta on the single-worst bound, 1-beta on the sum bound."""
    if not (0.0 <= beta <= 1.0):
        raise ValueError(f"uncertainty: beta outside [0, 1]: {beta}")
    return beta * score_single_worst(p) + (1.0 - beta) * score_l1(p)


def _uncertainty_rows(P: np.ndarray, beta: float) -> np.ndarray:
    clipped = np.clip(P, tn.LOG_CLAMP, None)
    sw = -np.log(clipped.min(axis=1))
    l1 = -np.log(clipped).sum(axis=1)
    return beta * sw + (1.0 - beta) * l1


def score_unlabeled(pool: "Pool", params: tn.NetworkParams, hp: "HyperParams",
                    scale: "FeatureScale | None" = None) -> list[QueryScore]:
    """Uncertainty, critic diversity, and combined score for every unlabeled point.

    `scale` must be the standardization the network was trained under.
    Returned in ascending pool-index order.
    """
    idx = np.sort(np.asarray(pool.unlabeled_idx))
    if idx.size == 0:
        return []
    X = pool.features[idx]
    if scale is not None:
        X = scale.apply(X)
    P = tn.forward_classifier(params, X)
    g = tn.forward_critic(params, X)
    u = _uncertainty_rows(P, hp.mixture_coeff)
    c = u - hp.selection_coeff * g
    return [QueryScore(index=int(i), uncertainty=float(ui), diversity=float(gi),
                       combined=float(ci))
            for i, ui, gi, ci in zip(idx, u, g, c)]


def select_from_scores(scores: list[QueryScore], budget: int) -> list[int]:
    """Budget smallest combined scores, ties by ascending index, best first."""
    if budget > len(scores):
        raise ValueError(f"budget {budget} exceeds {len(scores)} unlabeled samples")
    ranked = sorted(scores, key=lambda s: (s.combined, s.index))
    return [s.index for s in ranked[:budget]]


def waal_query(pool: "Pool", params: tn.NetworkParams, hp: "HyperParams",
               budget: int, scale: "FeatureScale | None" = None) -> list[int]:
    return select_from_scores(score_unlabeled(pool, params, hp, scale), budget)


def _rank_smallest(values: np.ndarray, indices: np.ndarray, budget: int) -> list[int]:
    order = np.lexsort((indices, values))
    return [int(i) for i in indices[order][:budget]]


def _rank_probability_baseline(kind: str, P: np.ndarray,
                               indices: np.ndarray, budget: int) -> list[int]:
    if kind == "least_confidence":
        values = P.max(axis=1)
    elif kind == "margin":
        top2 = -np.partition(-P, 1, axis=1)[:, :2]
        values = top2[:, 0] - top2[:, 1]
    elif kind == "entropy":
        logs = np.log(np.clip(P, tn.LOG_CLAMP, None))
        values = (P * logs).sum(axis=1)  # negated entropy: smallest = most uncertain
    else:
        raise ValueError(f"unknown probability baseline {kind!r}")
    return _rank_smallest(values, indices, budget)


def _kcenter_greedy(features: np.ndarray, labeled_idx: np.ndarray,
                    unlabeled_idx: np.ndarray, budget: int) -> list[int]:
    """Farthest-first traversal starting from the labeled set as centers."""
    if labeled_idx.size == 0:
        raise ValueError("kcenter_greedy: needs a non-empty labeled set as seed")
    cand = np.sort(unlabeled_idx)
    X = features[cand]
    centers = features[labeled_idx]
    # running min-distance to the current center set
    dists = np.sqrt(((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
    picked: list[int] = []
    taken = np.zeros(cand.size, dtype=bool)
    for _ in range(budget):
        masked = np.where(taken, -np.inf, dists)
        pos = int(masked.argmax())  # argmax takes the first max: ascending index
        picked.append(int(cand[pos]))
        taken[pos] = True
        new_d = np.sqrt(((X - X[pos]) ** 2).sum(axis=1))
        dists = np.minimum(dists, new_d)
    return picked


def _kmedian(features: np.ndarray, unlabeled_idx: np.ndarray, budget: int,
             rng: np.random.Generator) -> list[int]:
    """Lloyd-style K-median over the unlabeled points; returns the medoids.

    Seeding: one random point, then farthest-first. Updates swap each medoid
    for the cluster member with the least summed distance, until stable or the
    iteration cap.
    """
    cand = np.sort(unlabeled_idx)
    X = features[cand]
    n = cand.size
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))

    medoids = [int(rng.integers(n))]
    dists = D[medoids[0]].copy()
    while len(medoids) < budget:
        masked = dists.copy()
        masked[medoids] = -np.inf
        nxt = int(masked.argmax())
        medoids.append(nxt)
        dists = np.minimum(dists, D[nxt])

    for _ in range(KMEDIAN_MAX_ITER):
        assign = D[medoids].argmin(axis=0)  # first min: earliest medoid wins ties
        new_medoids = list(medoids)
        for ci in range(budget):
            members = np.flatnonzero(assign == ci)
            if members.size == 0:  # duplicate medoid points can strand a cluster
                continue
            costs = D[np.ix_(members, members)].sum(axis=1)
            new_medoids[ci] = int(members[costs.argmin()])
        if new_medoids == medoids:
            break
        medoids = new_medoids
    return [int(cand[m]) for m in medoids]


def baseline_query(kind: str, pool: "Pool", params: tn.NetworkParams | None,
                   budget: int, seed: int,
                   scale: "FeatureScale | None" = None) -> list[int]:
    """One of the classic strategies; deterministic given (pool, params, seed).

    Geometric baselines (kcenter_greedy, kmedian) work on raw features; the
    probability baselines see the same standardized inputs the network was
    trained under.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"baseline_query: unknown kind {kind!r}")
    unlabeled = np.sort(np.asarray(pool.unlabeled_idx))
    if budget > unlabeled.size:
        raise ValueError(f"budget {budget} exceeds {unlabeled.size} unlabeled samples")
    rng = np.random.default_rng(seed)

    if kind == "random":
        return [int(i) for i in rng.choice(unlabeled, size=budget, replace=False)]
    if kind == "kcenter_greedy":
        return _kcenter_greedy(pool.features, np.asarray(pool.labeled_idx),
                               unlabeled, budget)
    if kind == "kmedian":
        return _kmedian(pool.features, unlabeled, budget, rng)

    X = pool.features[unlabeled]
    if scale is not None:
        X = scale.apply(X)
    P = tn.forward_classifier(params, X)
    return _rank_probability_baseline(kind, P, unlabeled, budget)
