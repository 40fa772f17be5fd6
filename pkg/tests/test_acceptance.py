"""Acceptance checks for the primary library.

One test per acceptance item, each enforcing its stated numeric tolerance and
wall-clock budget, then printing a one-line summary (visible under -s):

    pytest tests/test_acceptance.py -v -s

The browser console has its own suite under frontend/ and is not needed here;
everything below exercises the Python package alone.
"""

from __future__ import annotations

import itertools
import json
import time
from pathlib import Path

import numpy as np

from waal import al_runtime as rt
from waal import cli
from waal import divergence_lab as dl
from waal import query_engine as qe
from waal import tensor_net as tn
from waal import waal_core as wc

DIGITS_CSV = Path(__file__).parent / "data" / "digits8x8.csv"
AB_PAIRS = ((2.0, 1.0), (3.0, 1.0), (5.0, 2.0))
SEEDS = (0, 1, 2, 3, 4)


def stamp(name: str, elapsed: float, detail: str):
    print(f"\n[acceptance] {name}: PASS in {elapsed:.2f}s ({detail})")


def test_a1_threshold_risk_identity():
    t0 = time.perf_counter()
    worst = 0.0
    for a, b in AB_PAIRS:
        d1 = dl.make_d1(a)
        target = b / (a + b)
        for make, span in ((dl.make_d2, dl.d2_x0_range(a, b)),
                           (dl.make_d3, dl.d3_x0_range(a, b))):
            for x0 in np.linspace(*span, 101):
                eps = dl.threshold_risk(d1, make(a, b, x0))[0]
                worst = max(worst, abs(eps - target))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-9
    assert elapsed < 1.0
    stamp("risk identity b/(a+b)", elapsed, f"max deviation {worst:.2e}")


def test_a2_diversity_ordering_with_mc_crosscheck():
    t0 = time.perf_counter()
    margins, worst_mc = [], 0.0
    for a, b in AB_PAIRS:
        rep = dl.diversity_ordering_report(a, b, grid=101, mc_n=20000, mc_seed=7)
        assert rep["ordering_holds"]
        assert min(rep["w1_d3"]) > max(rep["w1_d2"])
        assert rep["worst_mc_deviation"] <= 0.02
        margins.append(min(rep["w1_d3"]) - max(rep["w1_d2"]))
        worst_mc = max(worst_mc, rep["worst_mc_deviation"])
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    stamp("diversity ordering", elapsed,
          f"min margin {min(margins):.4f}, worst MC dev {worst_mc:.4f}")


def test_a3_bias_coefficient_value_and_consistency():
    t0 = time.perf_counter()
    got = wc.bias_coefficient(9.0, 1.0)
    assert abs(got - 4.0 / 81.0) <= 1e-15
    assert abs(got - 0.05) <= 5e-3
    rng = np.random.default_rng(20240818)
    worst = 0.0
    for _ in range(100):
        L = int(rng.integers(1, 500))
        U = int(rng.integers(1, 5000))
        B = int(rng.integers(0, U + 1))
        worst = max(worst, wc.coefficient_consistency(L, U, B))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-12
    stamp("bias coefficient", elapsed,
          f"c0(9,1)={got:.6f}, worst consistency {worst:.2e}")


def test_a4_finite_difference_gradients():
    t0 = time.perf_counter()
    worst = tn.gradcheck_report(n_configs=20)
    elapsed = time.perf_counter() - t0
    assert set(worst) >= {"prediction", "adversarial", "hdiv", "lipschitz_penalty"}
    for name, err in worst.items():
        assert err <= 1e-4, f"{name} finite-difference error {err}"
    assert elapsed < 10.0
    stamp("gradient fidelity", elapsed,
          f"worst relative error {max(worst.values()):.2e}")


def test_a5_exact_transport_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240816)
    worst = 0.0
    for i in range(50):
        d = (1, 2, 3)[i % 3]
        n = int(rng.integers(1, 8))
        X = rng.normal(size=(n, d))
        Y = rng.normal(size=(n, d))
        exact = dl.w1_exact_small(X, Y)
        worst = max(worst, abs(exact - dl.w1_brute_force(X, Y)))
        if d == 1:
            worst = max(worst,
                        abs(exact - dl.w1_empirical_sorted(X[:, 0], Y[:, 0])))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-12
    assert elapsed < 5.0
    stamp("exact transport oracle", elapsed, f"max deviation {worst:.2e}")


def simplex_grid(k: int, steps: int) -> list[list[float]]:
    rows = []
    for combo in itertools.combinations(range(steps + k - 1), k - 1):
        cuts = (-1,) + combo + (steps + k - 1,)
        rows.append([(hi - lo - 1) / steps for lo, hi in zip(cuts, cuts[1:])])
    return rows


def test_a6_uncertainty_bound_rankings():
    t0 = time.perf_counter()
    for k in (2, 3, 4):
        rows = simplex_grid(k, 100)
        rows.append([1.0 / k] * k)
        P = np.asarray(rows)
        scores = -np.log(np.clip(P, 1e-12, None)).sum(axis=1)
        best = P[int(scores.argmin())]
        assert np.allclose(best, np.full(k, 1.0 / k))
    assert qe.score_single_worst([0.4, 0.6]) < qe.score_single_worst([0.3, 0.7])
    elapsed = time.perf_counter() - t0
    stamp("uncertainty bound rankings", elapsed,
          "argmin uniform for K=2,3,4; [0.4,0.6] ranks first")


def _interval_risks(mode: str, hp: wc.HyperParams) -> list[float]:
    risks = []
    for seed in SEEDS:
        config = rt.ExperimentConfig(
            dataset={"kind": "four_intervals", "n": 6000},
            n_init=20, rounds=6, budget=10, strategy="waal", mode=mode,
            hyperparams=hp, seed=seed, val_frac=0.1, test_frac=0.5,
            init_bias="extremes")
        records = rt.run_experiment(config, rt.SimulatedOracle())
        risks.append(1.0 - records[-1].test_accuracy)
    return risks


def test_a7_biased_start_trap_and_escape():
    """Pure uncertainty stays trapped near the sub-optimal risk; the
    adversarial mixture escapes, each on at least 4 of 5 seeds."""
    t0 = time.perf_counter()
    uncertainty_only = _interval_risks(
        "supervised_only",
        wc.HyperParams(batch_size=64, epochs=60, patience=60, lr=0.01,
                       mu=0.01, selection_coeff=0.0))
    adversarial = _interval_risks(
        "waal",
        wc.HyperParams(batch_size=64, epochs=60, patience=60, lr=0.01,
                       mu=0.3, selection_coeff=10.0,
                       coefficient_convention="gamma-linear"))
    elapsed = time.perf_counter() - t0
    opt_risk = 0.05
    assert sum(r >= 1.8 * opt_risk for r in uncertainty_only) >= 4, uncertainty_only
    assert sum(r <= 1.2 * opt_risk for r in adversarial) >= 4, adversarial
    assert elapsed < 120.0
    stamp("biased-start trap and escape", elapsed,
          f"uncertainty risks {[round(r, 3) for r in uncertainty_only]}, "
          f"adversarial risks {[round(r, 3) for r in adversarial]}")


def _first_round_accuracies(dataset: dict, strategy: str, mode: str,
                            n_init: int, budget: int,
                            hp: wc.HyperParams) -> tuple[list[float], float]:
    accs, slowest = [], 0.0
    for seed in SEEDS:
        config = rt.ExperimentConfig(
            dataset=dataset, n_init=n_init, rounds=2, budget=budget,
            strategy=strategy, mode=mode, hyperparams=hp, seed=seed,
            val_frac=0.15, test_frac=0.25)
        t0 = time.perf_counter()
        records = rt.run_experiment(config, rt.SimulatedOracle())
        slowest = max(slowest, time.perf_counter() - t0)
        accs.append(records[-1].test_accuracy)
    return accs, slowest


def test_a8_desk_benchmark_direction():
    """Mean accuracy after the first queried batch, adversarial vs random."""
    cases = [
        ("blobs",
         {"kind": "blobs", "k": 2, "per_class": 200, "d": 2, "spread": 2.5},
         40, 60,
         wc.HyperParams(batch_size=32, epochs=60, patience=60, lr=0.01,
                        mu=0.1, selection_coeff=5.0,
                        coefficient_convention="gamma-linear")),
        ("digits",
         {"kind": "csv", "path": str(DIGITS_CSV)},
         200, 60,
         wc.HyperParams(batch_size=64, epochs=120, patience=120, lr=0.01,
                        mu=0.1, selection_coeff=30.0, mixture_coeff=0.0,
                        coefficient_convention="gamma-linear")),
    ]
    for name, dataset, n_init, budget, hp in cases:
        t0 = time.perf_counter()
        adv, slow_a = _first_round_accuracies(dataset, "waal", "waal",
                                              n_init, budget, hp)
        rnd, slow_r = _first_round_accuracies(dataset, "random", "supervised_only",
                                              n_init, budget, hp)
        elapsed = time.perf_counter() - t0
        adv_mean, rnd_mean = np.mean(adv), np.mean(rnd)
        assert adv_mean >= rnd_mean, (name, adv, rnd)
        assert max(slow_a, slow_r) < 180.0
        stamp(f"desk benchmark ({name})", elapsed,
              f"adversarial mean {adv_mean:.4f} >= random mean {rnd_mean:.4f}")


def test_a9_cli_run_byte_identical(tmp_path):
    config = {
        "dataset": {"kind": "blobs", "k": 2, "per_class": 50, "d": 2,
                    "spread": 0.8},
        "n_init": 6, "rounds": 3, "budget": 5,
        "strategy": "waal", "mode": "waal",
        "hyperparams": {"batch_size": 8, "epochs": 4, "patience": 4},
        "seeds": [0, 1],
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    t0 = time.perf_counter()
    outputs = []
    for name in ("first.jsonl", "second.jsonl"):
        out = tmp_path / name
        code = cli.main(["run", "--config", str(cfg_path),
                         "--oracle", "simulated", "--out", str(out)])
        assert code == 0
        outputs.append(out.read_bytes())
    elapsed = time.perf_counter() - t0
    assert outputs[0] == outputs[1]
    assert outputs[0].count(b"\n") == 6  # rounds x seeds
    stamp("deterministic metrics logs", elapsed,
          f"{len(outputs[0])} bytes identical across runs")
