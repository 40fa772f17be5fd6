"""Pools, datasets, splits, oracles, and the round loop."""

import json
import threading
import time

import numpy as np
import pytest

from waal import al_runtime as rt
from waal import waal_core as wc


class TestFourIntervalSpec:
    def test_default_threshold_risks(self):
        spec = rt.FourIntervalSpec()
        assert spec.threshold_risks() == pytest.approx([0.5, 0.05, 0.15, 0.10, 0.5])
        assert spec.best_threshold_risk() == pytest.approx(0.05)
        assert spec.opt_risk == 0.05 and spec.subopt_risk == 0.10

    def test_rejects_overlapping_intervals(self):
        with pytest.raises(ValueError, match="disjoint"):
            rt.FourIntervalSpec(bounds=((0, 3), (2.5, 3.7), (4.5, 6.5), (7, 10)))

    def test_rejects_non_alternating_labels(self):
        with pytest.raises(ValueError, match="alternate"):
            rt.FourIntervalSpec(labels=(0, 0, 1, 1))

    def test_rejects_bad_masses(self):
        with pytest.raises(ValueError, match="masses"):
            rt.FourIntervalSpec(masses=(0.5, 0.2, 0.2, 0.2))

    def test_rejects_inconsistent_risks(self):
        with pytest.raises(ValueError, match="opt_risk"):
            rt.FourIntervalSpec(opt_risk=0.2)
        with pytest.raises(ValueError, match="subopt_risk"):
            rt.FourIntervalSpec(subopt_risk=0.2)

    def test_rejects_midpoint_outside_third_interval(self):
        with pytest.raises(ValueError, match="midpoint"):
            rt.FourIntervalSpec(bounds=((0, 3), (3.2, 3.7), (4.5, 6.5), (20, 26)))


class TestGenerators:
    def test_four_intervals_counts_are_exact(self):
        pool = rt.gen_four_intervals(n=2000, seed=1)
        spec = rt.FourIntervalSpec()
        x = pool.features[:, 0]
        for (lo, hi), lab, mass in zip(spec.bounds, spec.labels, spec.masses):
            inside = (x >= lo) & (x <= hi)
            assert inside.sum() == round(2000 * mass)
            assert (pool.true_labels[inside] == lab).all()
            assert abs(inside.mean() - mass) <= 0.03
        assert set(pool.true_labels) == {0, 1}

    def test_four_intervals_one_point_per_interval_at_n4(self):
        pool = rt.gen_four_intervals(n=4, seed=0)
        x = pool.features[:, 0]
        for lo, hi in rt.FourIntervalSpec().bounds:
            assert ((x >= lo) & (x <= hi)).sum() == 1

    def test_four_intervals_seeded(self):
        a = rt.gen_four_intervals(n=100, seed=9)
        b = rt.gen_four_intervals(n=100, seed=9)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.true_labels, b.true_labels)
        c = rt.gen_four_intervals(n=100, seed=10)
        assert not np.array_equal(a.features, c.features)

    def test_four_intervals_needs_four_points(self):
        with pytest.raises(ValueError, match="n >= 4"):
            rt.gen_four_intervals(n=3, seed=0)

    def test_blobs_shape_and_determinism(self):
        pool = rt.gen_blobs(2, 50, 2, 0.5, 7)
        assert pool.features.shape == (100, 2)
        assert pool.n_classes == 2
        assert np.bincount(pool.true_labels).tolist() == [50, 50]
        again = rt.gen_blobs(2, 50, 2, 0.5, 7)
        assert np.array_equal(pool.features, again.features)

    def test_blobs_rejects_bad_args(self):
        with pytest.raises(ValueError):
            rt.gen_blobs(1, 50, 2, 0.5, 7)
        with pytest.raises(ValueError):
            rt.gen_blobs(2, 50, 2, 0.0, 7)


class TestCsvIO:
    def test_round_trip_exact(self, tmp_path):
        pool = rt.gen_blobs(3, 10, 4, 0.7, 2)
        path = str(tmp_path / "blobs.csv")
        rt.write_csv_dataset(pool, path)
        back = rt.load_csv_dataset(path)
        assert np.array_equal(back.features, pool.features)
        assert np.array_equal(back.true_labels, pool.true_labels)
        assert back.n_classes == 3

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x0,x1,label\n1,2,0\n")
        with pytest.raises(rt.DatasetFormatError, match="header"):
            rt.load_csv_dataset(str(p))

    def test_non_numeric_cell_names_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("f0,label\n1.0,0\noops,1\n")
        with pytest.raises(rt.DatasetFormatError, match=":3"):
            rt.load_csv_dataset(str(p))

    def test_wrong_cell_count_names_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("f0,f1,label\n1.0,2.0,0\n1.0,1\n")
        with pytest.raises(rt.DatasetFormatError, match=":3"):
            rt.load_csv_dataset(str(p))

    def test_negative_label_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("f0,label\n1.0,-1\n")
        with pytest.raises(rt.DatasetFormatError, match="negative"):
            rt.load_csv_dataset(str(p))

    def test_label_gap_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("f0,label\n1.0,0\n2.0,2\n")
        with pytest.raises(rt.DatasetFormatError, match="skip"):
            rt.load_csv_dataset(str(p))

    def test_empty_and_headerless(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(rt.DatasetFormatError, match="empty"):
            rt.load_csv_dataset(str(p))
        p.write_text("f0,label\n")
        with pytest.raises(rt.DatasetFormatError, match="no data"):
            rt.load_csv_dataset(str(p))


class TestSplitInitial:
    def test_sizes_and_disjointness(self):
        pool = rt.gen_blobs(2, 100, 2, 0.5, 3)
        split = rt.split_initial(pool, n_init=10, val_frac=0.15, test_frac=0.25, seed=5)
        split.validate()
        assert split.test_idx.size == 50
        assert split.val_idx.size == 30
        assert split.labeled_idx.size == 10
        assert split.unlabeled_idx.size == 200 - 50 - 30 - 10

    def test_labels_known_only_where_expected(self):
        pool = rt.gen_blobs(2, 50, 2, 0.5, 3)
        split = rt.split_initial(pool, 8, 0.1, 0.2, seed=1)
        for s in (split.labeled_idx, split.val_idx, split.test_idx):
            assert (split.labels[s] >= 0).all()
            assert np.array_equal(split.labels[s], split.true_labels[s])
        assert (split.labels[split.unlabeled_idx] == -1).all()

    def test_stratified_covers_every_class(self):
        pool = rt.gen_blobs(4, 30, 2, 0.4, 11)
        split = rt.split_initial(pool, n_init=8, val_frac=0.1, test_frac=0.2, seed=2)
        assert set(split.true_labels[split.labeled_idx]) == {0, 1, 2, 3}

    def test_seeded_reproducibility(self):
        pool = rt.gen_blobs(2, 60, 2, 0.5, 3)
        a = rt.split_initial(pool, 10, 0.15, 0.25, seed=7)
        b = rt.split_initial(pool, 10, 0.15, 0.25, seed=7)
        assert np.array_equal(a.labeled_idx, b.labeled_idx)
        assert np.array_equal(a.test_idx, b.test_idx)

    def test_infeasible_sizes_rejected(self):
        pool = rt.gen_blobs(2, 10, 2, 0.5, 3)
        with pytest.raises(ValueError, match="exceeds"):
            rt.split_initial(pool, n_init=15, val_frac=0.3, test_frac=0.3, seed=0)

    def test_init_mask_restricts_candidates(self):
        pool = rt.gen_four_intervals(n=400, seed=3)
        mask = rt._extremes_mask(pool)
        split = rt.split_initial(pool, 12, 0.1, 0.2, seed=4, init_mask=mask)
        assert mask[split.labeled_idx].all()
        assert set(split.true_labels[split.labeled_idx]) == {0, 1}
        # val is biased along with the initial labels; test stays unrestricted
        assert mask[split.val_idx].all()
        assert not mask[split.test_idx].all()
        assert not mask[split.unlabeled_idx].all()

    def test_mask_too_small_rejected(self):
        pool = rt.gen_blobs(2, 20, 2, 0.5, 3)
        mask = np.zeros(40, dtype=bool)
        mask[:3] = True
        with pytest.raises(ValueError, match="masked"):
            rt.split_initial(pool, 10, 0.1, 0.1, seed=0, init_mask=mask)


class TestPoolMutation:
    def test_mark_labeled_moves_indices(self):
        pool = rt.gen_blobs(2, 20, 2, 0.5, 1)
        split = rt.split_initial(pool, 4, 0.1, 0.2, seed=0)
        batch = split.unlabeled_idx[:3].tolist()
        before = split.labeled_idx.size
        split.mark_labeled(batch, [0, 1, 0])
        split.validate()
        assert split.labeled_idx.size == before + 3
        assert not np.isin(batch, split.unlabeled_idx).any()
        assert (split.labels[batch] == [0, 1, 0]).all()

    def test_mark_labeled_rejects_non_unlabeled(self):
        pool = rt.gen_blobs(2, 20, 2, 0.5, 1)
        split = rt.split_initial(pool, 4, 0.1, 0.2, seed=0)
        taken = int(split.labeled_idx[0])
        with pytest.raises(ValueError, match="not unlabeled"):
            split.mark_labeled([taken], [0])

    def test_mark_labeled_rejects_bad_label(self):
        pool = rt.gen_blobs(2, 20, 2, 0.5, 1)
        split = rt.split_initial(pool, 4, 0.1, 0.2, seed=0)
        with pytest.raises(ValueError, match="label"):
            split.mark_labeled([int(split.unlabeled_idx[0])], [5])

    def test_validate_catches_overlap(self):
        pool = rt.gen_blobs(2, 20, 2, 0.5, 1)
        split = rt.split_initial(pool, 4, 0.1, 0.2, seed=0)
        split.unlabeled_idx = np.concatenate([split.unlabeled_idx, split.labeled_idx[:1]])
        with pytest.raises(ValueError, match="overlap"):
            split.validate()


class TestOracles:
    def test_simulated_returns_ground_truth(self):
        pool = rt.gen_blobs(2, 20, 2, 0.5, 1)
        split = rt.split_initial(pool, 4, 0.1, 0.2, seed=0)
        oracle = rt.SimulatedOracle()
        oracle.bind(split)
        batch = split.unlabeled_idx[:4]
        got = oracle.label(batch)
        assert np.array_equal(got, split.true_labels[batch])

    def test_simulated_rejects_labeled_index(self):
        pool = rt.gen_blobs(2, 20, 2, 0.5, 1)
        split = rt.split_initial(pool, 4, 0.1, 0.2, seed=0)
        oracle = rt.SimulatedOracle()
        oracle.bind(split)
        with pytest.raises(rt.OracleContractError):
            oracle.label([int(split.labeled_idx[0])])

    def interactive_pair(self):
        pool = rt.gen_blobs(2, 20, 2, 0.5, 1)
        split = rt.split_initial(pool, 4, 0.1, 0.2, seed=0)
        oracle = rt.InteractiveOracle(timeout=5.0)
        oracle.bind(split)
        return split, oracle

    def run_label(self, oracle, indices, out):
        def worker():
            out["labels"] = oracle.label(indices)
        t = threading.Thread(target=worker)
        t.start()
        return t

    def wait_active(self, oracle):
        for _ in range(200):
            if oracle.pending_view() is not None:
                return
            time.sleep(0.005)
        raise AssertionError("oracle never became active")

    def test_out_of_order_partial_submission(self):
        _, oracle = self.interactive_pair()
        out = {}
        t = self.run_label(oracle, [7, 3, 9], out)
        self.wait_active(oracle)
        oracle.submit({9: 1})
        assert t.is_alive()  # still waiting on 7 and 3
        oracle.submit({3: 0, 7: 1})
        t.join(timeout=5)
        assert not t.is_alive()
        assert out["labels"].tolist() == [1, 0, 1]  # reassembled in batch order

    def test_idempotent_resubmit_and_conflict(self):
        _, oracle = self.interactive_pair()
        out = {}
        t = self.run_label(oracle, [5, 6], out)
        self.wait_active(oracle)
        oracle.submit({5: 1})
        oracle.submit({5: 1})  # identical: accepted
        with pytest.raises(rt.LabelConflictError):
            oracle.submit({5: 0})
        oracle.submit({6: 0})
        t.join(timeout=5)
        assert out["labels"].tolist() == [1, 0]

    def test_submission_validation(self):
        _, oracle = self.interactive_pair()
        out = {}
        t = self.run_label(oracle, [5, 6], out)
        self.wait_active(oracle)
        with pytest.raises(rt.LabelSubmissionError, match="pending"):
            oracle.submit({99: 0})
        with pytest.raises(rt.LabelSubmissionError, match="label"):
            oracle.submit({5: 7})
        oracle.submit({5: 0, 6: 0})
        t.join(timeout=5)

    def test_submit_without_batch_rejected(self):
        _, oracle = self.interactive_pair()
        with pytest.raises(rt.LabelSubmissionError, match="no batch"):
            oracle.submit({1: 0})

    def test_timeout_then_resume(self):
        split, _ = self.interactive_pair()
        oracle = rt.InteractiveOracle(timeout=0.05)
        oracle.bind(split)
        with pytest.raises(rt.OracleTimeout) as exc:
            oracle.label([4, 8])
        assert exc.value.pending == [4, 8] and exc.value.received == {}
        # posting the labels lets a repeated call return immediately
        oracle.submit({4: 1, 8: 0})
        got = oracle.label([4, 8])
        assert got.tolist() == [1, 0]


def quick_config(**over):
    base = dict(dataset={"kind": "blobs", "k": 2, "per_class": 50, "d": 2,
                         "spread": 0.5},
                n_init=6, rounds=3, budget=5, strategy="random",
                mode="supervised_only",
                hyperparams=wc.HyperParams(batch_size=8, epochs=2, patience=5),
                seed=0)
    base.update(over)
    return rt.ExperimentConfig(**base)


class TestRunExperiment:
    def test_round_records_and_counts(self):
        config = quick_config()
        records = rt.run_experiment(config, rt.SimulatedOracle())
        assert [r.round for r in records] == [1, 2, 3]
        assert [r.labeled_count for r in records] == [11, 16, 21]
        for r in records:
            assert 0.0 <= r.test_accuracy <= 1.0
            assert len(r.query_indices) == 5
            assert len(r.uncertainty) == 5 and len(r.diversity) == 5
            assert r.train_seconds >= 0 and r.query_seconds >= 0

    def test_queries_disjoint_and_never_initial(self):
        config = quick_config(strategy="waal", mode="waal")
        initial = set(rt.prepare_pool(config).labeled_idx.tolist())
        records = rt.run_experiment(config, rt.SimulatedOracle())
        seen = set()
        for r in records:
            batch = set(r.query_indices)
            assert not (batch & seen) and not (batch & initial)
            seen |= batch

    def test_metrics_lines_byte_identical_across_runs(self):
        config = quick_config(strategy="waal", mode="waal")
        lines_a = [rt.metrics_line(r) for r in rt.run_experiment(config, rt.SimulatedOracle())]
        lines_b = [rt.metrics_line(r) for r in rt.run_experiment(config, rt.SimulatedOracle())]
        assert lines_a == lines_b
        keys = set(json.loads(lines_a[0]).keys())
        assert keys == {"round", "labeled_count", "test_accuracy",
                        "query_indices", "uncertainty", "diversity"}

    def test_pool_exhaustion_caps_last_batch(self):
        config = quick_config(dataset={"kind": "blobs", "k": 2, "per_class": 20,
                                       "spread": 0.5, "d": 2},
                              n_init=4, rounds=8, budget=8,
                              hyperparams=wc.HyperParams(batch_size=4, epochs=1))
        records = rt.run_experiment(config, rt.SimulatedOracle())
        # train pool 24, initial 4: batches 8, 8, 4 then exhausted
        assert [len(r.query_indices) for r in records] == [8, 8, 4]
        assert records[-1].labeled_count == 24

    def test_on_record_and_on_event_fire(self):
        config = quick_config(rounds=2)
        got_records, events = [], []
        rt.run_experiment(config, rt.SimulatedOracle(),
                          on_record=got_records.append,
                          on_event=lambda name, payload: events.append(name))
        assert len(got_records) == 2
        for name in ("train_start", "train_end", "await_labels",
                     "round_done", "experiment_done"):
            assert name in events

    def test_interactive_timeout_pauses_experiment(self):
        config = quick_config(rounds=2)
        oracle = rt.InteractiveOracle(timeout=0.05)
        with pytest.raises(rt.ExperimentPaused) as exc:
            rt.run_experiment(config, oracle)
        assert exc.value.records == []
        assert len(exc.value.cause.pending) == 5

    def test_config_validation(self):
        with pytest.raises(ValueError, match="strategy"):
            quick_config(strategy="dbal")
        with pytest.raises(ValueError, match="mode"):
            quick_config(mode="gan")
        with pytest.raises(ValueError, match="rounds"):
            quick_config(rounds=0)
        with pytest.raises(ValueError, match="kind"):
            quick_config(dataset={"kind": "images"})
        with pytest.raises(ValueError, match="init_bias"):
            quick_config(init_bias="corners")

    def test_build_dataset_csv_requires_path(self):
        with pytest.raises(ValueError, match="path"):
            rt.build_dataset({"kind": "csv"}, seed=0)

    def test_hdiv_mode_runs(self):
        config = quick_config(mode="hdiv_ablation", strategy="waal", rounds=1)
        records = rt.run_experiment(config, rt.SimulatedOracle())
        assert len(records) == 1

    def test_adversarial_first_round_beats_random_on_blobs(self):
        """Mean accuracy after the first queried batch, 5 seeds, ≥ random.

        records[1] is the model trained once round 1's batch is in; the
        round-1 record itself predates any query so both arms tie there.
        """
        def mean_round1(strategy, mode, sel):
            accs = []
            for seed in range(5):
                config = quick_config(
                    dataset={"kind": "blobs", "k": 2, "per_class": 200, "d": 2,
                             "spread": 2.5},
                    n_init=40, rounds=3, budget=60, strategy=strategy, mode=mode,
                    hyperparams=wc.HyperParams(batch_size=32, epochs=60,
                                               patience=60, lr=0.01, mu=0.1,
                                               selection_coeff=sel,
                                               coefficient_convention="gamma-linear"),
                    seed=seed, val_frac=0.15, test_frac=0.25)
                records = rt.run_experiment(config, rt.SimulatedOracle())
                accs.append(records[1].test_accuracy)
            return sum(accs) / len(accs)

        adversarial = mean_round1("waal", "waal", 5.0)
        random_arm = mean_round1("random", "supervised_only", 0.0)
        assert adversarial >= random_arm
