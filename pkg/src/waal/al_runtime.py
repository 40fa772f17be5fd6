"""Outer interaction loop: pools, datasets, oracles, metrics.

A Pool owns the feature matrix and four disjoint index sets. Each round
retrains from scratch, evaluates on the held-out test split, queries a batch,
asks the oracle, and moves the batch from unlabeled to labeled. Metrics
records serialize to JSON Lines with canonical key order so identical
(config, oracle responses) give byte-identical logs; wall-clock timings stay
in memory only, since they would break that guarantee.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import query_engine as qe
from . import waal_core as wc

DATASET_KINDS = ("four_intervals", "blobs", "csv")
STRATEGY_KINDS = ("waal",) + qe.BASELINE_KINDS
# metrics keys whose values are wall-clock measurements, excluded from logs
TIMING_KEYS = ("train_seconds", "query_seconds")


# ---------------------------------------------------------------- pool type

@dataclass
class Pool:
    """Feature matrix plus disjoint labeled/unlabeled/val/test index sets.

    `labels` holds the labels known to the learner (-1 = unknown);
    `true_labels` is the generator's ground truth backing simulated oracles.
    `meta` carries dataset provenance such as the interval layout.
    """

    features: np.ndarray
    labels: np.ndarray
    true_labels: np.ndarray | None
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    n_classes: int
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        n = self.features.shape[0]
        sets = [np.asarray(s) for s in (self.labeled_idx, self.unlabeled_idx,
                                        self.val_idx, self.test_idx)]
        names = ("labeled", "unlabeled", "val", "test")
        seen: set[int] = set()
        for name, s in zip(names, sets):
            if s.size and (s.min() < 0 or s.max() >= n):
                raise ValueError(f"Pool: {name} index out of range")
            as_set = set(int(i) for i in s)
            if len(as_set) != s.size:
                raise ValueError(f"Pool: duplicate indices in {name} set")
            if seen & as_set:
                raise ValueError(f"Pool: {name} set overlaps another index set")
            seen |= as_set
        if self.labels.shape != (n,):
            raise ValueError("Pool: labels must be one per sample")
        for name, s in zip(("labeled", "val", "test"), (sets[0], sets[2], sets[3])):
            if s.size and (self.labels[s] < 0).any():
                raise ValueError(f"Pool: {name} indices must have known labels")
        known = self.labels[self.labels >= 0]
        if known.size and known.max() >= self.n_classes:
            raise ValueError("Pool: label value outside 0..n_classes-1")

    def mark_labeled(self, indices, new_labels) -> None:
        """Record oracle answers and move the batch into the labeled set."""
        indices = np.asarray(indices, dtype=int)
        new_labels = np.asarray(new_labels, dtype=int)
        unl = set(int(i) for i in self.unlabeled_idx)
        for i in indices:
            if int(i) not in unl:
                raise ValueError(f"mark_labeled: index {int(i)} is not unlabeled")
        if ((new_labels < 0) | (new_labels >= self.n_classes)).any():
            raise ValueError("mark_labeled: label outside 0..n_classes-1")
        self.labels[indices] = new_labels
        self.labeled_idx = np.sort(np.concatenate([self.labeled_idx, indices]))
        keep = ~np.isin(self.unlabeled_idx, indices)
        self.unlabeled_idx = self.unlabeled_idx[keep]


# ------------------------------------------------------------- data sources

@dataclass(frozen=True)
class FourIntervalSpec:
    """Alternating-label interval layout for the sampling-bias scenario.

    The mass layout pins two reference errors: the best single threshold
    (between intervals 1 and 2) misses `opt_risk` of the mass, and the
    locally-stable boundary between intervals 3 and 4 misses `subopt_risk`.
    """

    bounds: tuple = ((0.0, 3.0), (3.2, 3.7), (4.5, 6.5), (7.0, 10.0))
    labels: tuple = (0, 1, 0, 1)
    masses: tuple = (0.45, 0.10, 0.05, 0.40)
    opt_risk: float = 0.05
    subopt_risk: float = 0.10

    def __post_init__(self):
        if len(self.bounds) != 4 or len(self.labels) != 4 or len(self.masses) != 4:
            raise ValueError("FourIntervalSpec: exactly four intervals required")
        prev_hi = -np.inf
        for lo, hi in self.bounds:
            if not (lo < hi) or lo <= prev_hi:
                raise ValueError("FourIntervalSpec: intervals must be disjoint and increasing")
            prev_hi = hi
        if sorted(set(self.labels)) != [0, 1] or self.labels[0] == self.labels[1]:
            raise ValueError("FourIntervalSpec: labels must alternate between 0 and 1")
        for a, b in zip(self.labels, self.labels[1:]):
            if a == b:
                raise ValueError("FourIntervalSpec: labels must alternate between 0 and 1")
        if any(m <= 0 for m in self.masses) or abs(sum(self.masses) - 1.0) > 1e-9:
            raise ValueError("FourIntervalSpec: masses must be positive and sum to 1")
        if abs(self.best_threshold_risk() - self.opt_risk) > 1e-9:
            raise ValueError("FourIntervalSpec: opt_risk does not match the mass layout")
        if abs(self.threshold_risks()[3] - self.subopt_risk) > 1e-9:
            raise ValueError("FourIntervalSpec: subopt_risk does not match the mass layout")
        c_first = sum(self.bounds[0]) / 2.0
        c_last = sum(self.bounds[3]) / 2.0
        mid = (c_first + c_last) / 2.0
        lo3, hi3 = self.bounds[2]
        if not (lo3 <= mid <= hi3):
            raise ValueError("FourIntervalSpec: midpoint of the extreme-interval "
                             "centers must fall inside the third interval")

    def threshold_risks(self) -> list[float]:
        """Risk of predicting labels[0] left / labels[3] right of each cut.

        Cut positions 0..4 sit before interval i; position 0 predicts
        everything as the right class, position 4 everything as the left.
        """
        risks = []
        for cut in range(5):
            r = sum(m for j, m in enumerate(self.masses)
                    if (j < cut and self.labels[j] != self.labels[0])
                    or (j >= cut and self.labels[j] != self.labels[3]))
            risks.append(r)
        return risks

    def best_threshold_risk(self) -> float:
        return min(self.threshold_risks())


def _stratified_counts(n: int, weights, floor_one: bool = True) -> np.ndarray:
    """Largest-remainder apportionment of n among weights, each part >= 1."""
    weights = np.asarray(weights, dtype=float)
    if floor_one and n < weights.size:
        raise ValueError(f"cannot give {weights.size} groups at least one of {n}")
    target = n * weights / weights.sum()
    counts = np.floor(target).astype(int)
    rema = target - counts
    for pos in np.argsort(-rema)[: n - counts.sum()]:
        counts[pos] += 1
    if floor_one:
        while (counts == 0).any():
            counts[int(np.argmax(counts == 0))] += 1
            counts[int(np.argmax(counts))] -= 1
    return counts


def gen_four_intervals(spec: FourIntervalSpec | None = None, n: int = 2000,
                       seed: int = 0) -> Pool:
    """Seeded 1-D pool over four alternating-label intervals.

    Per-interval counts follow the mass layout exactly (largest remainder,
    at least one point each), so empirical masses match the configured ones
    up to rounding even at small n.
    """
    spec = spec or FourIntervalSpec()
    if n < 4:
        raise ValueError("gen_four_intervals: need n >= 4")
    counts = _stratified_counts(n, spec.masses)
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for (lo, hi), lab, cnt in zip(spec.bounds, spec.labels, counts):
        xs.append(rng.uniform(lo, hi, size=cnt))
        ys.append(np.full(cnt, lab, dtype=int))
    X = np.concatenate(xs)[:, None]
    y = np.concatenate(ys)
    order = rng.permutation(n)
    X, y = X[order], y[order]
    return Pool(features=X, labels=np.full(n, -1, dtype=int), true_labels=y,
                labeled_idx=np.array([], dtype=int),
                unlabeled_idx=np.arange(n),
                val_idx=np.array([], dtype=int), test_idx=np.array([], dtype=int),
                n_classes=2,
                meta={"kind": "four_intervals",
                      "bounds": [list(b) for b in spec.bounds],
                      "labels": list(spec.labels),
                      "masses": list(spec.masses),
                      "opt_risk": spec.opt_risk,
                      "subopt_risk": spec.subopt_risk})


def gen_blobs(k: int, per_class: int, d: int, spread: float, seed: int) -> Pool:
    """Gaussian blobs on a radius-2 ring (line when d = 1)."""
    if k < 2 or per_class < 1 or d < 1 or spread <= 0:
        raise ValueError("gen_blobs: need k >= 2, per_class >= 1, d >= 1, spread > 0")
    rng = np.random.default_rng(seed)
    centers = np.zeros((k, d))
    if d == 1:
        centers[:, 0] = np.linspace(-2.0, 2.0, k)
    else:
        angles = 2.0 * np.pi * np.arange(k) / k
        centers[:, 0] = 2.0 * np.cos(angles)
        centers[:, 1] = 2.0 * np.sin(angles)
    n = k * per_class
    y = np.repeat(np.arange(k), per_class)
    X = centers[y] + rng.normal(scale=spread, size=(n, d))
    order = rng.permutation(n)
    X, y = X[order], y[order]
    return Pool(features=X, labels=np.full(n, -1, dtype=int), true_labels=y,
                labeled_idx=np.array([], dtype=int), unlabeled_idx=np.arange(n),
                val_idx=np.array([], dtype=int), test_idx=np.array([], dtype=int),
                n_classes=k, meta={"kind": "blobs"})


class DatasetFormatError(ValueError):
    """CSV did not match the expected header/row layout."""


def load_csv_dataset(path: str) -> Pool:
    """Read `f0..f{d-1},label` rows; every class 0..K-1 must appear."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        d = len(header) - 1
        if d < 1 or header != [f"f{i}" for i in range(d)] + ["label"]:
            raise DatasetFormatError(f"{path}: header must be f0..f{{d-1}},label")
        feats, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise DatasetFormatError(f"{path}:{line_no}: expected {d + 1} cells, "
                                         f"got {len(row)}")
            try:
                feats.append([float(c) for c in row[:d]])
            except ValueError:
                raise DatasetFormatError(f"{path}:{line_no}: non-numeric feature") from None
            try:
                lab = int(row[d])
            except ValueError:
                raise DatasetFormatError(f"{path}:{line_no}: non-integer label") from None
            if lab < 0:
                raise DatasetFormatError(f"{path}:{line_no}: negative label")
            labels.append(lab)
    if not feats:
        raise DatasetFormatError(f"{path}: no data rows")
    y = np.asarray(labels, dtype=int)
    k = int(y.max()) + 1
    missing = sorted(set(range(k)) - set(int(v) for v in y))
    if missing:
        raise DatasetFormatError(f"{path}: labels skip class(es) {missing}; "
                                 f"expected every class in 0..{k - 1}")
    X = np.asarray(feats, dtype=float)
    n = X.shape[0]
    return Pool(features=X, labels=np.full(n, -1, dtype=int), true_labels=y,
                labeled_idx=np.array([], dtype=int), unlabeled_idx=np.arange(n),
                val_idx=np.array([], dtype=int), test_idx=np.array([], dtype=int),
                n_classes=k, meta={"kind": "csv", "path": path})


def write_csv_dataset(pool: Pool, path: str) -> None:
    """Inverse of load_csv_dataset; floats via repr for exact round-trips."""
    import csv

    y = pool.true_labels if pool.true_labels is not None else pool.labels
    if (np.asarray(y) < 0).any():
        raise ValueError("write_csv_dataset: pool has samples with unknown labels")
    d = pool.features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(d)] + ["label"])
        for row, lab in zip(pool.features, y):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


# ------------------------------------------------------------------- splits

def split_initial(pool: Pool, n_init: int, val_frac: float, test_frac: float,
                  seed: int, init_mask: np.ndarray | None = None) -> Pool:
    """Carve seeded val/test splits and a stratified initial labeled set.

    `init_mask` restricts which samples may enter the initial labeled set
    (the sampling-bias scenario seeds only the extreme intervals). The mask
    also covers the validation subset: the biased learner holds no labels
    outside the mask, so validating on them would leak the very region the
    scenario hides. The test split stays unrestricted; it measures true risk
    and never steers training. Initial labels are stratified over the true
    classes present among candidates.
    """
    if pool.true_labels is None:
        raise ValueError("split_initial: pool has no ground-truth labels to split on")
    n = pool.features.shape[0]
    n_val, n_test = int(round(val_frac * n)), int(round(test_frac * n))
    if n_init < 1 or val_frac < 0 or test_frac < 0:
        raise ValueError("split_initial: n_init >= 1 and non-negative fractions required")
    if n_init + n_val + n_test > n:
        raise ValueError(f"split_initial: n_init={n_init} + val={n_val} + "
                         f"test={n_test} exceeds {n} samples")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_idx = np.sort(perm[:n_test])

    if init_mask is not None:
        init_mask = np.asarray(init_mask, dtype=bool)
        rest = perm[n_test:]
        masked = rest[init_mask[rest]]
        if masked.size < n_val + n_init:
            raise ValueError(f"split_initial: only {masked.size} masked samples for "
                             f"val={n_val} plus an initial set of {n_init}")
        val_idx = np.sort(masked[:n_val])
        train = np.sort(rest[~np.isin(rest, val_idx)])
        candidates = np.sort(masked[n_val:])
    else:
        val_idx = np.sort(perm[n_test:n_test + n_val])
        train = np.sort(perm[n_test + n_val:])
        candidates = train
    y_cand = pool.true_labels[candidates]
    classes = np.unique(y_cand)
    if candidates.size < n_init:
        raise ValueError(f"split_initial: only {candidates.size} candidates for "
                         f"an initial set of {n_init}")
    if n_init < classes.size:
        raise ValueError(f"split_initial: n_init={n_init} cannot cover "
                         f"{classes.size} candidate classes")
    counts = _stratified_counts(n_init, np.array([(y_cand == c).sum() for c in classes]))
    chosen = []
    for c, cnt in zip(classes, counts):
        members = candidates[y_cand == c]
        if cnt > members.size:
            raise ValueError(f"split_initial: class {int(c)} has {members.size} "
                             f"candidates, needs {cnt}")
        chosen.append(rng.choice(members, size=cnt, replace=False))
    labeled = np.sort(np.concatenate(chosen))
    unlabeled = train[~np.isin(train, labeled)]

    labels = np.full(n, -1, dtype=int)
    for s in (labeled, val_idx, test_idx):
        labels[s] = pool.true_labels[s]
    out = Pool(features=pool.features, labels=labels, true_labels=pool.true_labels,
               labeled_idx=labeled, unlabeled_idx=unlabeled,
               val_idx=val_idx, test_idx=test_idx,
               n_classes=pool.n_classes, meta=dict(pool.meta))
    out.validate()
    return out


# ------------------------------------------------------------------ oracles

class OracleContractError(RuntimeError):
    """Asked to label an index that is not currently unlabeled."""


class LabelConflictError(RuntimeError):
    """A pending item was resubmitted with a different label."""


class LabelSubmissionError(RuntimeError):
    """Submission referenced an unknown item or an out-of-range label."""


class OracleTimeout(RuntimeError):
    """Interactive labeling did not finish in time; state is kept for resume."""

    def __init__(self, pending: list[int], received: dict[int, int]):
        super().__init__(f"timed out with {len(pending)} of "
                         f"{len(pending) + len(received)} labels missing")
        self.pending = pending
        self.received = received


class SimulatedOracle:
    """Answers queries from the pool's ground truth immediately."""

    def __init__(self):
        self._pool: Pool | None = None

    def bind(self, pool: Pool) -> None:
        if pool.true_labels is None:
            raise ValueError("SimulatedOracle: pool has no ground-truth labels")
        self._pool = pool

    def label(self, indices, metadata=None) -> np.ndarray:
        if self._pool is None:
            raise RuntimeError("SimulatedOracle: not bound to a pool")
        indices = np.asarray(indices, dtype=int)
        unl = set(int(i) for i in self._pool.unlabeled_idx)
        for i in indices:
            if int(i) not in unl:
                raise OracleContractError(f"index {int(i)} is not unlabeled")
        return self._pool.true_labels[indices].copy()


class InteractiveOracle:
    """Blocks the experiment until a human submits every label in the batch.

    submit() may arrive in any order and in any grouping; identical
    resubmissions are idempotent, conflicting ones rejected. A timeout
    raises but keeps the batch state, so label() can be called again with
    the same indices to resume waiting.
    """

    def __init__(self, timeout: float | None = None):
        self.timeout = timeout
        self._cond = threading.Condition()
        self._batch: list[int] = []
        self._received: dict[int, int] = {}
        self._metadata: list[qe.QueryScore] | None = None
        self._pool: Pool | None = None
        self._active = False

    def bind(self, pool: Pool) -> None:
        self._pool = pool

    # -- experiment side

    def label(self, indices, metadata=None) -> np.ndarray:
        indices = [int(i) for i in indices]
        with self._cond:
            if not (self._active and self._batch == indices):
                self._batch = indices
                self._received = {}
                self._metadata = metadata
                self._active = True
                self._cond.notify_all()
            ok = self._cond.wait_for(lambda: len(self._received) == len(self._batch),
                                     timeout=self.timeout)
            if not ok:
                pending = [i for i in self._batch if i not in self._received]
                raise OracleTimeout(pending, dict(self._received))
            labels = np.array([self._received[i] for i in self._batch], dtype=int)
            self._active = False
            return labels

    # -- console side

    def submit(self, labels: dict[int, int]) -> None:
        if self._pool is None:
            raise RuntimeError("InteractiveOracle: not bound to a pool")
        with self._cond:
            if not self._active:
                raise LabelSubmissionError("no batch is awaiting labels")
            batch = set(self._batch)
            for i, lab in labels.items():
                i, lab = int(i), int(lab)
                if i not in batch:
                    raise LabelSubmissionError(f"item {i} is not in the pending batch")
                if not (0 <= lab < self._pool.n_classes):
                    raise LabelSubmissionError(
                        f"label {lab} outside 0..{self._pool.n_classes - 1}")
                if i in self._received and self._received[i] != lab:
                    raise LabelConflictError(
                        f"item {i} already labeled {self._received[i]}")
            for i, lab in labels.items():
                self._received[int(i)] = int(lab)
            self._cond.notify_all()

    def pending_view(self) -> dict | None:
        """Snapshot for the console: batch order, metadata, received labels."""
        with self._cond:
            if not self._active:
                return None
            return {"batch": list(self._batch),
                    "metadata": list(self._metadata) if self._metadata else None,
                    "received": dict(self._received)}

    @property
    def pool(self) -> Pool | None:
        return self._pool


# -------------------------------------------------------------- experiment

@dataclass
class RoundRecord:
    round: int
    labeled_count: int
    test_accuracy: float
    query_indices: list[int]
    uncertainty: list[float]
    diversity: list[float]
    train_seconds: float
    query_seconds: float

    def to_json_dict(self, include_timings: bool = True) -> dict:
        out = {"round": self.round,
               "labeled_count": self.labeled_count,
               "test_accuracy": self.test_accuracy,
               "query_indices": list(self.query_indices),
               "uncertainty": list(self.uncertainty),
               "diversity": list(self.diversity)}
        if include_timings:
            out["train_seconds"] = self.train_seconds
            out["query_seconds"] = self.query_seconds
        return out


def metrics_line(record: RoundRecord) -> str:
    """Canonical JSON for one round; timings excluded to keep logs reproducible."""
    return json.dumps(record.to_json_dict(include_timings=False), sort_keys=True)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    n_init: int = 20
    rounds: int = 5
    budget: int = 10
    strategy: str = "waal"
    mode: str = "waal"
    hyperparams: wc.HyperParams = field(default_factory=wc.HyperParams)
    seed: int = 0
    val_frac: float = 0.15
    test_frac: float = 0.25
    init_bias: str | None = None

    def __post_init__(self):
        if self.n_init < 1 or self.rounds < 1 or self.budget < 1:
            raise ValueError("ExperimentConfig: n_init, rounds, budget must be >= 1")
        if self.strategy not in STRATEGY_KINDS:
            raise ValueError(f"ExperimentConfig: unknown strategy {self.strategy!r}")
        if self.mode not in wc.TRAINING_MODES:
            raise ValueError(f"ExperimentConfig: unknown mode {self.mode!r}")
        if not isinstance(self.dataset, dict) or "kind" not in self.dataset:
            raise ValueError("ExperimentConfig: dataset must be a dict with a 'kind'")
        if self.dataset["kind"] not in DATASET_KINDS:
            raise ValueError(f"ExperimentConfig: unknown dataset kind "
                             f"{self.dataset['kind']!r}")
        if self.init_bias not in (None, "extremes"):
            raise ValueError(f"ExperimentConfig: unknown init_bias {self.init_bias!r}")


class ExperimentPaused(RuntimeError):
    """Interactive labeling timed out mid-round; completed records are kept."""

    def __init__(self, records: list[RoundRecord], cause: OracleTimeout):
        super().__init__(str(cause))
        self.records = records
        self.cause = cause


def parse_config_dict(raw: dict):
    """Experiment config JSON body -> (per-seed configs, out_path, oracle_timeout).

    Raises ValueError naming the offending field.
    """
    if not isinstance(raw, dict):
        raise ValueError("config: top level must be an object")
    known = {"dataset", "n_init", "rounds", "budget", "strategy", "mode",
             "hyperparams", "seeds", "out_path", "val_frac", "test_frac",
             "init_bias", "oracle_timeout"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"config field(s) not recognized: {unknown}")

    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or \
            not all(isinstance(s, int) for s in seeds):
        raise ValueError("config field 'seeds' must be a non-empty list of integers")
    hp_raw = raw.get("hyperparams", {})
    if not isinstance(hp_raw, dict):
        raise ValueError("config field 'hyperparams' must be an object")
    if "lr_decay" in hp_raw:
        hp_raw = dict(hp_raw)
        hp_raw["lr_decay"] = tuple(tuple(e) for e in hp_raw["lr_decay"])
    try:
        hp = wc.HyperParams(**hp_raw)
    except TypeError as exc:
        raise ValueError(f"config field 'hyperparams': {exc}") from None

    base = {k: raw[k] for k in ("dataset", "n_init", "rounds", "budget", "strategy",
                                "mode", "val_frac", "test_frac", "init_bias")
            if k in raw}
    if "dataset" not in base:
        raise ValueError("config field 'dataset' is required")
    try:
        configs = [ExperimentConfig(hyperparams=hp, seed=int(s), **base)
                   for s in seeds]
    except TypeError as exc:
        raise ValueError(f"config: {exc}") from None
    timeout = raw.get("oracle_timeout")
    if timeout is not None and not (isinstance(timeout, (int, float))
                                    and not isinstance(timeout, bool) and timeout > 0):
        raise ValueError("config field 'oracle_timeout' must be a positive number")
    return configs, raw.get("out_path"), timeout


def build_dataset(spec: dict, seed: int) -> Pool:
    kind = spec.get("kind")
    if kind == "four_intervals":
        fields = {k: spec[k] for k in ("bounds", "labels", "masses",
                                       "opt_risk", "subopt_risk") if k in spec}
        if "bounds" in fields:
            fields["bounds"] = tuple(tuple(b) for b in fields["bounds"])
        for tup in ("labels", "masses"):
            if tup in fields:
                fields[tup] = tuple(fields[tup])
        ispec = FourIntervalSpec(**fields) if fields else None
        return gen_four_intervals(ispec, n=int(spec.get("n", 2000)), seed=seed)
    if kind == "blobs":
        return gen_blobs(k=int(spec.get("k", 2)), per_class=int(spec.get("per_class", 200)),
                         d=int(spec.get("d", 2)), spread=float(spec.get("spread", 0.5)),
                         seed=seed)
    if kind == "csv":
        if "path" not in spec:
            raise ValueError("build_dataset: csv dataset needs a 'path'")
        return load_csv_dataset(spec["path"])
    raise ValueError(f"build_dataset: unknown kind {kind!r}")


def _extremes_mask(pool: Pool) -> np.ndarray:
    """True where the sample lies in the first or last configured interval."""
    bounds = pool.meta.get("bounds")
    if bounds is None:
        raise ValueError("init_bias='extremes' needs an interval dataset")
    x = pool.features[:, 0]
    (lo1, hi1), (lo4, hi4) = bounds[0], bounds[3]
    return ((x >= lo1) & (x <= hi1)) | ((x >= lo4) & (x <= hi4))


def prepare_pool(config: ExperimentConfig) -> Pool:
    """Dataset + splits + initial labeled set for one seeded experiment."""
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(41,))
    data_seed, split_seed = [int(s.generate_state(1)[0]) for s in ss.spawn(2)]
    pool = build_dataset(config.dataset, data_seed)
    mask = _extremes_mask(pool) if config.init_bias == "extremes" else None
    return split_initial(pool, config.n_init, config.val_frac, config.test_frac,
                         split_seed, init_mask=mask)


def run_experiment(config: ExperimentConfig, oracle, on_record=None,
                   on_event=None) -> list[RoundRecord]:
    """Train / evaluate / query / label loop over the configured rounds.

    Stops early when the unlabeled pool empties; the final round's batch is
    capped to what remains. `on_record` fires after each completed round
    (metrics persistence); `on_event` receives coarse phase transitions for
    progress displays.
    """
    def emit(name: str, **payload):
        if on_event is not None:
            on_event(name, payload)

    pool = prepare_pool(config)
    if hasattr(oracle, "bind"):
        oracle.bind(pool)
    hp = replace(config.hyperparams, seed=config.seed)
    strategy_seeds = np.random.SeedSequence(
        entropy=config.seed, spawn_key=(43,)).generate_state(config.rounds)

    records: list[RoundRecord] = []
    for rnd in range(1, config.rounds + 1):
        if pool.unlabeled_idx.size == 0:
            break
        budget = int(min(config.budget, pool.unlabeled_idx.size))
        emit("train_start", round=rnd, rounds=config.rounds,
             labeled=int(pool.labeled_idx.size))
        t0 = time.perf_counter()
        result = wc.train_from_scratch(pool, hp, mode=config.mode, budget=budget)
        train_seconds = time.perf_counter() - t0
        test_acc = wc.classification_accuracy(
            result.params, pool.features[pool.test_idx], pool.labels[pool.test_idx],
            scale=result.scale)
        emit("train_end", round=rnd, test_accuracy=test_acc,
             best_epoch=result.best_epoch)

        t1 = time.perf_counter()
        if config.strategy == "waal":
            chosen = qe.waal_query(pool, result.params, hp, budget, scale=result.scale)
        else:
            chosen = qe.baseline_query(config.strategy, pool, result.params,
                                       budget, int(strategy_seeds[rnd - 1]),
                                       scale=result.scale)
        query_seconds = time.perf_counter() - t1

        by_index = {s.index: s for s in qe.score_unlabeled(pool, result.params, hp,
                                                           scale=result.scale)}
        scores = [by_index[i] for i in chosen]
        emit("await_labels", round=rnd, indices=list(chosen))
        try:
            labels = oracle.label(chosen, metadata=scores)
        except OracleTimeout as exc:
            raise ExperimentPaused(records, exc) from exc
        pool.mark_labeled(chosen, labels)

        record = RoundRecord(round=rnd, labeled_count=int(pool.labeled_idx.size),
                             test_accuracy=float(test_acc),
                             query_indices=[int(i) for i in chosen],
                             uncertainty=[s.uncertainty for s in scores],
                             diversity=[s.diversity for s in scores],
                             train_seconds=train_seconds,
                             query_seconds=query_seconds)
        records.append(record)
        if on_record is not None:
            on_record(record)
        emit("round_done", round=rnd, labeled=int(pool.labeled_idx.size))
    emit("experiment_done", rounds_run=len(records))
    return records
