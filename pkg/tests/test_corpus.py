import pytest

from stylevc.corpus import (
    AlignmentTable,
    PhonemeInventory,
    UtteranceRecord,
    load_alignments,
    load_manifest,
    reconcile_durations,
    save_manifest,
    split_records,
)
from stylevc.errors import AlignmentError, CorpusValidationError


@pytest.fixture
def inventory():
    return PhonemeInventory(("a", "b", "c"))


def write_manifest(tmp_path, lines):
    path = tmp_path / "manifest.tsv"
    path.write_text("".join(line + "\n" for line in lines))
    return path


class TestInventory:
    def test_index_layout(self, inventory):
        assert inventory.size == 7
        assert inventory.blank_id == 3
        assert inventory.sos_id == 4
        assert inventory.eos_id == 5
        assert inventory.pad_id == 6

    def test_encode_decode_round_trip(self, inventory):
        tokens = inventory.encode(("a", "c", "b", "a"))
        assert tokens == (0, 2, 1, 0)
        assert inventory.decode(tokens) == ("a", "c", "b", "a")

    def test_unknown_symbol_named_in_error(self, inventory):
        with pytest.raises(CorpusValidationError, match="zz"):
            inventory.encode(("a", "zz"))

    def test_duplicate_symbols_rejected(self):
        with pytest.raises(CorpusValidationError):
            PhonemeInventory(("a", "a"))

    def test_specials_must_not_collide(self):
        with pytest.raises(CorpusValidationError):
            PhonemeInventory(("a", "<blk>"))

    def test_save_load_and_hash_stability(self, inventory, tmp_path):
        inventory.save(tmp_path / "inv.txt")
        loaded = PhonemeInventory.load(tmp_path / "inv.txt")
        assert loaded == inventory
        assert loaded.content_hash() == inventory.content_hash()
        other = PhonemeInventory(("a", "b", "d"))
        assert other.content_hash() != inventory.content_hash()


class TestLoadManifest:
    def test_empty_file_gives_empty_list(self, tmp_path, inventory):
        path = write_manifest(tmp_path, [])
        assert load_manifest(path, inventory) == []

    def test_single_record(self, tmp_path, inventory):
        path = write_manifest(tmp_path, ["u1\t/tmp/u1.wav\tspk0\ta b c"])
        records = load_manifest(path, inventory)
        assert records == [UtteranceRecord("u1", "/tmp/u1.wav", "spk0", ("a", "b", "c"))]

    def test_unknown_symbol_error_names_id_and_symbol(self, tmp_path, inventory):
        path = write_manifest(tmp_path, ["u1\tx.wav\tspk0\ta zz"])
        with pytest.raises(CorpusValidationError) as err:
            load_manifest(path, inventory)
        assert "u1" in str(err.value) and "zz" in str(err.value)

    def test_duplicate_id_rejected(self, tmp_path, inventory):
        path = write_manifest(tmp_path, ["u1\tx.wav\ts\ta", "u1\ty.wav\ts\tb"])
        with pytest.raises(CorpusValidationError, match="duplicate"):
            load_manifest(path, inventory)

    def test_save_round_trip(self, tmp_path, inventory):
        records = [
            UtteranceRecord("u1", "x.wav", "s0", ("a", "b")),
            UtteranceRecord("u2", "y.wav", "s1", ("c",)),
        ]
        save_manifest(tmp_path / "m.tsv", records)
        assert load_manifest(tmp_path / "m.tsv", inventory) == records


class TestLoadAlignments:
    def make_records(self):
        return [UtteranceRecord("u1", "x.wav", "s", ("a", "b", "c"))]

    def write(self, tmp_path, text):
        path = tmp_path / "ali.txt"
        path.write_text(text)
        return path

    def test_exact_sum_accepted(self, tmp_path, inventory):
        path = self.write(tmp_path, "u1 2 3 5\n")
        table = load_alignments(path, self.make_records(), {"u1": 10})
        assert table["u1"] == [2, 3, 5]

    def test_final_phoneme_absorbs_small_mismatch(self, tmp_path):
        path = self.write(tmp_path, "u1 2 3 5\n")
        table = load_alignments(path, self.make_records(), {"u1": 11})
        assert table["u1"] == [2, 3, 6]
        table = load_alignments(path, self.make_records(), {"u1": 8})
        assert table["u1"] == [2, 3, 3]

    def test_mismatch_beyond_tolerance_rejected(self, tmp_path):
        path = self.write(tmp_path, "u1 2 3 5\n")
        with pytest.raises(AlignmentError):
            load_alignments(path, self.make_records(), {"u1": 14})

    def test_wrong_duration_count_rejected(self, tmp_path):
        path = self.write(tmp_path, "u1 2 3\n")
        with pytest.raises(AlignmentError, match="3 phonemes"):
            load_alignments(path, self.make_records(), {"u1": 10})

    def test_unknown_id_rejected(self, tmp_path):
        path = self.write(tmp_path, "nope 2 3 5\n")
        with pytest.raises(AlignmentError, match="nope"):
            load_alignments(path, self.make_records(), {"u1": 10})

    def test_zero_duration_clamped_with_compensation(self, tmp_path):
        path = self.write(tmp_path, "u1 0 4 6\n")
        table = load_alignments(path, self.make_records(), {"u1": 10})
        assert table["u1"] == [1, 4, 5]
        assert sum(table["u1"]) == 10

    def test_invariant_sum_equals_frames(self, tmp_path):
        path = self.write(tmp_path, "u1 3 3 3\n")
        for frames in (8, 9, 10, 11):
            table = load_alignments(path, self.make_records(), {"u1": frames})
            durs = table["u1"]
            assert sum(durs) == frames
            assert all(d >= 1 for d in durs)

    def test_table_save_round_trip(self, tmp_path, inventory):
        table = AlignmentTable({"u1": [2, 3, 5]})
        table.save(tmp_path / "out.txt")
        back = load_alignments(tmp_path / "out.txt", self.make_records(), {"u1": 10})
        assert back["u1"] == [2, 3, 5]


class TestReconcile:
    def test_negative_rejected(self):
        with pytest.raises(AlignmentError):
            reconcile_durations([-1, 5], 4)

    def test_unrepairable_zero_rejected(self):
        with pytest.raises(AlignmentError):
            reconcile_durations([0, 1], 2)


class TestSplits:
    def make_records(self, n=20):
        return [UtteranceRecord(f"u{i}", f"{i}.wav", "s", ("a",)) for i in range(n)]

    def test_deterministic_under_seed(self):
        records = self.make_records()
        a = split_records(records, seed=7)
        b = split_records(records, seed=7)
        assert a == b
        c = split_records(records, seed=8)
        assert a != c

    def test_disjoint_and_complete(self):
        records = self.make_records(37)
        train, val, test = split_records(records, (0.7, 0.2, 0.1), seed=1)
        ids = [r.id for part in (train, val, test) for r in part]
        assert len(ids) == len(set(ids)) == 37
