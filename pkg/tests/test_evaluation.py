import csv
import random

import numpy as np
import pytest

from stylevc.errors import InvalidInputError
from stylevc.evaluation import (
    NO_PREFERENCE,
    PreferenceVote,
    aggregate_preferences,
    compute_per,
    corpus_per,
    f0_similarity,
    plot_f0_overlay,
    write_per_rows,
)
from stylevc.features import F0Contour

from helpers import oracle_f0_similarity, oracle_per_counts


class TestComputePer:
    def test_identical_sequences(self):
        r = compute_per(["a", "b", "c"], ["a", "b", "c"])
        assert (r.sub_count, r.del_count, r.ins_count) == (0, 0, 0)
        assert r.per == 0.0

    def test_single_deletion(self):
        r = compute_per(["a", "c"], ["a", "b", "c"])
        assert (r.sub_count, r.del_count, r.ins_count) == (0, 1, 0)
        assert abs(r.per - 100.0 / 3.0) < 1e-9

    def test_decomposition_identity_like_published_rows(self):
        # rates add up to the total within display rounding, e.g. 4.4+0.8+0.4=5.6
        r = compute_per(list("abxdefghij" * 25) + ["q", "q"],
                        list("abcdefghij" * 25))
        assert abs(r.per - (r.sub_rate + r.del_rate + r.ins_rate)) < 1e-9
        display = round(r.sub_rate, 1) + round(r.del_rate, 1) + round(r.ins_rate, 1)
        assert abs(display - round(r.per, 1)) < 0.15

    def test_empty_ref_rejected(self):
        with pytest.raises(InvalidInputError):
            compute_per(["a"], [])

    def test_empty_hyp_all_deletions(self):
        r = compute_per([], ["a", "b"])
        assert (r.sub_count, r.del_count, r.ins_count) == (0, 2, 0)
        assert r.per == 100.0

    def test_matches_oracle_on_random_pairs(self):
        rng = random.Random(1234)
        for _ in range(200):
            alphabet = rng.randint(2, 10)
            ref = [rng.randrange(alphabet) for _ in range(rng.randint(1, 12))]
            hyp = [rng.randrange(alphabet) for _ in range(rng.randint(0, 12))]
            mine = compute_per(hyp, ref)
            subs, dels, inss = oracle_per_counts(hyp, ref)
            assert (mine.sub_count, mine.del_count, mine.ins_count) == (subs, dels, inss), (
                hyp, ref
            )

    def test_cost_symmetric_counts_swap(self):
        rng = random.Random(5)
        for _ in range(50):
            a = [rng.randrange(4) for _ in range(rng.randint(1, 10))]
            b = [rng.randrange(4) for _ in range(rng.randint(1, 10))]
            fwd = compute_per(a, b)
            rev = compute_per(b, a)
            cost_fwd = fwd.sub_count + fwd.del_count + fwd.ins_count
            cost_rev = rev.sub_count + rev.del_count + rev.ins_count
            assert cost_fwd == cost_rev
            assert fwd.del_count == rev.ins_count
            assert fwd.ins_count == rev.del_count


class TestCorpusPer:
    def test_pooled_not_averaged(self):
        hyp = {"u1": ["x"] + ["a"] * 9, "u2": ["a"] * 10}
        ref = {"u1": ["a"] * 10, "u2": ["a"] * 10}
        r = corpus_per(hyp, ref)
        assert r.per == 5.0

    def test_single_utterance_equals_compute_per(self):
        hyp = {"u": list("abca")}
        ref = {"u": list("abba")}
        assert corpus_per(hyp, ref) == compute_per(hyp["u"], ref["u"])

    def test_counts_sum_over_utterances(self):
        rng = random.Random(9)
        hyp, ref = {}, {}
        for i in range(6):
            ref[f"u{i}"] = [rng.randrange(5) for _ in range(rng.randint(1, 8))]
            hyp[f"u{i}"] = [rng.randrange(5) for _ in range(rng.randint(0, 8))]
        pooled = corpus_per(hyp, ref)
        parts = [compute_per(hyp[u], ref[u]) for u in ref]
        assert pooled.sub_count == sum(p.sub_count for p in parts)
        assert pooled.del_count == sum(p.del_count for p in parts)
        assert pooled.ins_count == sum(p.ins_count for p in parts)
        assert pooled.ref_len == sum(p.ref_len for p in parts)

    def test_id_mismatch_lists_missing(self):
        with pytest.raises(InvalidInputError, match="u2"):
            corpus_per({"u1": ["a"]}, {"u1": ["a"], "u2": ["b"]})

    def test_per_rows_csv(self, tmp_path):
        rows = {"u1": compute_per(["a"], ["a", "b"])}
        write_per_rows(tmp_path / "per.csv", rows)
        with open(tmp_path / "per.csv") as f:
            parsed = list(csv.DictReader(f))
        assert parsed[0]["id"] == "u1"
        assert parsed[0]["ref_len"] == "2"


class TestF0Similarity:
    def c(self, values):
        values = np.asarray(values, dtype=float)
        return F0Contour(values, np.ones(len(values), bool), 12.5)

    def test_identical_contours(self):
        a = self.c([100, 120, 140, 130])
        out = f0_similarity(a, a)
        assert out["rmse_hz"] == 0.0
        assert abs(out["correlation"] - 1.0) < 1e-12

    def test_constant_offset(self):
        a = self.c([100, 120, 140, 130])
        b = self.c([110, 130, 150, 140])
        out = f0_similarity(a, b)
        assert abs(out["rmse_hz"] - 10.0) < 1e-9
        assert abs(out["correlation"] - 1.0) < 1e-12

    def test_matches_independent_implementation(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            a = self.c(100 + 50 * rng.random(int(rng.integers(2, 40))))
            b = self.c(100 + 50 * rng.random(int(rng.integers(2, 40))))
            out = f0_similarity(a, b)
            rmse, corr = oracle_f0_similarity(a.values, b.values)
            assert abs(out["rmse_hz"] - rmse) < 1e-6
            assert abs(out["correlation"] - corr) < 1e-6

    def test_uninterpolated_rejected(self):
        bad = F0Contour(np.array([100.0, 0.0]), np.array([True, False]), 12.5)
        with pytest.raises(InvalidInputError):
            f0_similarity(bad, bad)

    def test_too_short_rejected(self):
        short = self.c([100.0])
        with pytest.raises(InvalidInputError):
            f0_similarity(short, short)


class TestPlotF0Overlay:
    def contour(self, n, seed=0):
        rng = np.random.default_rng(seed)
        return F0Contour(100 + 40 * rng.random(n), np.ones(n, bool), 12.5)

    def test_svg_and_csv_emitted(self, tmp_path):
        out = plot_f0_overlay([("src", self.contour(30))], tmp_path / "f0.svg")
        assert out.exists()
        assert out.read_text().lstrip().startswith("<?xml")
        csv_path = out.with_suffix(".csv")
        with open(csv_path) as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 30

    def test_different_lengths_keep_own_time_axes(self, tmp_path):
        contours = [("a", self.contour(20, 1)), ("b", self.contour(35, 2))]
        out = plot_f0_overlay(contours, tmp_path / "f0.svg")
        with open(out.with_suffix(".csv")) as f:
            rows = list(csv.DictReader(f))
        by_name = {}
        for row in rows:
            by_name.setdefault(row["name"], []).append(row)
        assert len(by_name["a"]) == 20
        assert len(by_name["b"]) == 35
        assert float(by_name["a"][-1]["time_s"]) == pytest.approx(19 * 0.0125)

    def test_csv_round_trips_values(self, tmp_path):
        contour = self.contour(25, 3)
        out = plot_f0_overlay({"x": contour}, tmp_path / "f0.svg")
        with open(out.with_suffix(".csv")) as f:
            rows = list(csv.DictReader(f))
        values = np.array([float(r["f0_hz"]) for r in rows])
        assert np.max(np.abs(values - contour.values)) < 1e-4

    def test_uninterpolated_rejected(self, tmp_path):
        bad = F0Contour(np.array([100.0, 0.0]), np.array([True, False]), 12.5)
        with pytest.raises(InvalidInputError):
            plot_f0_overlay([("bad", bad)], tmp_path / "f0.svg")


class TestAggregatePreferences:
    def test_basic_tally(self):
        votes = (
            [PreferenceVote("t", "proposed")] * 6
            + [PreferenceVote("t", "baseline")] * 3
            + [PreferenceVote("t", NO_PREFERENCE)]
        )
        summary = aggregate_preferences(votes)
        assert summary.percentages["proposed"] == 60.0
        assert summary.percentages["baseline"] == 30.0
        assert summary.percentages[NO_PREFERENCE] == 10.0
        assert abs(sum(summary.percentages.values()) - 100.0) < 0.1

    def test_all_np(self):
        summary = aggregate_preferences([PreferenceVote("t", NO_PREFERENCE)] * 4)
        assert summary.percentages[NO_PREFERENCE] == 100.0

    def test_mixed_tests_rejected(self):
        with pytest.raises(InvalidInputError):
            aggregate_preferences(
                [PreferenceVote("t1", "x"), PreferenceVote("t2", "x")]
            )

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            aggregate_preferences([])
