"""Metrics parsing, table/CSV/chart outputs."""

import json

import pytest

from waal import reporting as rp


def write_log(path, runs):
    """runs: list of lists of (round, labeled, acc)."""
    with open(path, "w") as fh:
        for run in runs:
            for rnd, labeled, acc in run:
                fh.write(json.dumps({"round": rnd, "labeled_count": labeled,
                                     "test_accuracy": acc,
                                     "query_indices": [1, 2],
                                     "uncertainty": [0.5, 0.6],
                                     "diversity": [0.1, 0.2]}) + "\n")


class TestLoadMetrics:
    def test_single_run(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_log(p, [[(1, 12, 0.5), (2, 14, 0.6), (3, 16, 0.7)]])
        segments = rp.load_metrics(str(p))
        assert len(segments) == 1 and len(segments[0]) == 3

    def test_round_reset_splits_runs(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_log(p, [[(1, 12, 0.5), (2, 14, 0.6)],
                      [(1, 12, 0.4), (2, 14, 0.8)]])
        segments = rp.load_metrics(str(p))
        assert [len(s) for s in segments] == [2, 2]
        assert segments[1][0]["test_accuracy"] == 0.4

    def test_malformed_json_names_line(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_log(p, [[(1, 12, 0.5)]])
        with open(p, "a") as fh:
            fh.write("{broken\n")
        with pytest.raises(rp.MetricsFormatError, match="line 2"):
            rp.load_metrics(str(p))

    def test_missing_key_names_line(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"round": 1, "labeled_count": 5}\n')
        with pytest.raises(rp.MetricsFormatError, match="line 1.*missing"):
            rp.load_metrics(str(p))

    def test_accuracy_out_of_range(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_log(p, [[(1, 12, 1.5)]])
        with pytest.raises(rp.MetricsFormatError, match="test_accuracy"):
            rp.load_metrics(str(p))

    def test_empty_file(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text("")
        with pytest.raises(rp.MetricsFormatError, match="no records"):
            rp.load_metrics(str(p))


class TestOutputs:
    def test_table_has_one_row_per_round(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_log(p, [[(r, 10 + 2 * r, 0.5 + 0.05 * r) for r in range(1, 6)]])
        table = rp.accuracy_table(rp.load_metrics(str(p)))
        lines = table.splitlines()
        assert len(lines) == 6  # header + 5 rounds
        assert lines[0].startswith("round\tlabeled_count")
        assert lines[1].split("\t")[:3] == ["1", "12", "1"]

    def test_table_aggregates_seeds(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_log(p, [[(1, 12, 0.4)], [(1, 12, 0.6)]])
        lines = rp.accuracy_table(rp.load_metrics(str(p))).splitlines()
        cols = lines[1].split("\t")
        assert cols[2] == "2" and cols[3] == "0.5000"
        assert cols[4] == "0.4000" and cols[5] == "0.6000"

    def test_csv_and_chart_written(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_log(p, [[(1, 12, 0.4), (2, 14, 0.5)], [(1, 12, 0.6), (2, 14, 0.7)]])
        segments = rp.load_metrics(str(p))
        csv_path = tmp_path / "out.csv"
        svg_path = tmp_path / "out.svg"
        rp.write_accuracy_csv(segments, str(csv_path))
        rp.write_accuracy_chart(segments, str(svg_path))
        rows = csv_path.read_text().splitlines()
        assert rows[0] == "round,labeled_count,accuracy_run1,accuracy_run2,mean_accuracy"
        assert rows[1] == "1,12,0.400000,0.600000,0.500000"
        svg = svg_path.read_text()
        assert svg.lstrip().startswith("<?xml") and "<svg" in svg
