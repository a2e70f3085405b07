"""Binary and CSV table serialization round-trips and error contracts."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from ddlab.ingest import (
    MAGIC,
    VERSION,
    CorruptFileError,
    CsvSchema,
    DataError,
    FormatError,
    IngestError,
    read_any,
    read_csv,
    read_table,
    write_csv,
    write_table,
)
from ddlab.ood_scores import ClassifierHead, ModelOutputs


def _random_table(rng, n, q, with_labels=True, with_logits=True, C=3):
    features = rng.standard_normal((n, q))
    labels = rng.integers(0, C, size=n) if with_labels else None
    logits = rng.standard_normal((n, C)) if with_logits else None
    return ModelOutputs(features=features, labels=labels, logits=logits)


def _random_head(rng, q, C=3):
    return ClassifierHead(W=rng.standard_normal((C, q)), b=rng.standard_normal(C))


class TestBinaryRoundTrip:
    def test_minimal_single_cell_table(self, tmp_path):
        path = tmp_path / "one.ddft"
        write_table(ModelOutputs(features=np.array([[0.0]])), path)
        out, head = read_table(path)
        assert out.features.shape == (1, 1)
        assert out.features[0, 0] == 0.0
        assert out.labels is None and out.logits is None and head is None

    def test_full_table_is_bitwise_identical(self, tmp_path):
        rng = np.random.default_rng(50)
        table = _random_table(rng, 100, 8)
        head = _random_head(rng, 8)
        table = ModelOutputs(
            features=table.features, labels=table.labels, logits=head.logits(table.features)
        )
        path = tmp_path / "full.ddft"
        write_table(table, path, head=head)
        out, got_head = read_table(path)
        np.testing.assert_array_equal(out.features, table.features)
        np.testing.assert_array_equal(out.labels, table.labels)
        np.testing.assert_array_equal(out.logits, table.logits)
        np.testing.assert_array_equal(got_head.W, head.W)
        np.testing.assert_array_equal(got_head.b, head.b)

    def test_random_shapes_and_block_combinations(self, tmp_path):
        rng = np.random.default_rng(51)
        for i in range(25):
            n = int(rng.integers(1, 40))
            q = int(rng.integers(1, 20))
            with_labels = bool(rng.integers(0, 2))
            with_logits = bool(rng.integers(0, 2))
            table = _random_table(rng, n, q, with_labels, with_logits)
            path = tmp_path / f"t{i}.ddft"
            write_table(table, path)
            out, _ = read_table(path)
            np.testing.assert_array_equal(out.features, table.features)
            if with_labels:
                np.testing.assert_array_equal(out.labels, table.labels)
            else:
                assert out.labels is None
            if with_logits:
                np.testing.assert_array_equal(out.logits, table.logits)
            else:
                assert out.logits is None

    def test_denormals_and_extremes_survive(self, tmp_path):
        tiny = np.array([[5e-324, -5e-324, 1.7976931348623157e308, -0.0]])
        path = tmp_path / "extreme.ddft"
        write_table(ModelOutputs(features=tiny), path)
        out, _ = read_table(path)
        np.testing.assert_array_equal(out.features, tiny)
        # -0.0 must keep its sign bit
        assert np.signbit(out.features[0, 3])

    def test_round_trip_through_read_any(self, tmp_path):
        rng = np.random.default_rng(52)
        table = _random_table(rng, 12, 4)
        path = tmp_path / "any.ddft"
        write_table(table, path)
        out, _ = read_any(path)
        np.testing.assert_array_equal(out.features, table.features)


class TestBinaryErrors:
    def _write_valid(self, tmp_path, name="valid.ddft"):
        rng = np.random.default_rng(53)
        table = _random_table(rng, 6, 3)
        path = tmp_path / name
        write_table(table, path)
        return path

    def test_bad_magic_is_a_format_error(self, tmp_path):
        path = tmp_path / "bad.ddft"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(FormatError, match="magic"):
            read_table(path)

    def test_unsupported_version(self, tmp_path):
        valid = self._write_valid(tmp_path)
        raw = bytearray(valid.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        bad = tmp_path / "v99.ddft"
        bad.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            read_table(bad)

    def test_unknown_flag_bits(self, tmp_path):
        valid = self._write_valid(tmp_path)
        raw = bytearray(valid.read_bytes())
        raw[24] |= 0b1000
        bad = tmp_path / "flags.ddft"
        bad.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="flag"):
            read_table(bad)

    def test_truncated_header(self, tmp_path):
        bad = tmp_path / "short.ddft"
        bad.write_bytes(MAGIC + struct.pack("<I", VERSION) + b"\x00" * 5)
        with pytest.raises(FormatError, match="header"):
            read_table(bad)

    def test_truncation_names_the_first_missing_block(self, tmp_path):
        """Cutting the payload mid-block reports that block by name."""
        rng = np.random.default_rng(54)
        table = _random_table(rng, 5, 4)
        head = _random_head(rng, 4)
        table = ModelOutputs(
            features=table.features, labels=table.labels, logits=head.logits(table.features)
        )
        path = tmp_path / "whole.ddft"
        write_table(table, path, head=head)
        raw = path.read_bytes()
        header = 4 + 4 + 16 + 1 + 4
        feat_bytes = 5 * 4 * 8
        label_bytes = 5 * 4
        logit_bytes = 5 * 3 * 8
        cases = [
            (header + feat_bytes - 8, "features"),
            (header + feat_bytes + label_bytes - 2, "labels"),
            (header + feat_bytes + label_bytes + logit_bytes - 8, "logits"),
            (len(raw) - 8 * 4 - 1, "head weights"),
            (len(raw) - 1, "head bias"),
        ]
        for cut, block in cases:
            clipped = tmp_path / f"cut_{block.replace(' ', '_')}.ddft"
            clipped.write_bytes(raw[:cut])
            with pytest.raises(CorruptFileError, match=block):
                read_table(clipped)

    def test_trailing_bytes_are_rejected(self, tmp_path):
        valid = self._write_valid(tmp_path)
        padded = tmp_path / "padded.ddft"
        padded.write_bytes(valid.read_bytes() + b"\x00\x00")
        with pytest.raises(CorruptFileError, match="trailing"):
            read_table(padded)

    def test_label_outside_the_class_range(self, tmp_path):
        """A stored label >= C is a data error naming the offending row."""
        features = np.zeros((2, 1))
        logits = np.zeros((2, 2))
        table = ModelOutputs(features=features, labels=np.array([0, 1]), logits=logits)
        path = tmp_path / "labels.ddft"
        write_table(table, path)
        raw = bytearray(path.read_bytes())
        header = 4 + 4 + 16 + 1 + 4
        label_offset = header + 2 * 1 * 8
        raw[label_offset + 4 : label_offset + 8] = struct.pack("<I", 7)
        bad = tmp_path / "badlabel.ddft"
        bad.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="row 1"):
            read_table(bad)

    def test_non_finite_feature_is_a_data_error_with_its_position(self, tmp_path):
        features = np.zeros((3, 2))
        path = tmp_path / "nan.ddft"
        write_table(ModelOutputs(features=features), path)
        raw = bytearray(path.read_bytes())
        header = 4 + 4 + 16 + 1
        cell = header + (2 * 2 + 1) * 8  # row 2, column 1
        raw[cell : cell + 8] = struct.pack("<d", float("nan"))
        bad = tmp_path / "nan2.ddft"
        bad.write_bytes(bytes(raw))
        with pytest.raises(DataError, match=r"\(2, 1\)"):
            read_table(bad)

    def test_zero_row_table_is_rejected(self, tmp_path):
        bad = tmp_path / "empty.ddft"
        bad.write_bytes(
            MAGIC + struct.pack("<I", VERSION) + struct.pack("<QQ", 0, 3) + b"\x00"
        )
        with pytest.raises(DataError, match="empty"):
            read_table(bad)

    def test_error_hierarchy(self):
        assert issubclass(FormatError, IngestError)
        assert issubclass(CorruptFileError, IngestError)
        assert issubclass(DataError, IngestError)

    def test_write_rejects_inconsistent_head(self, tmp_path):
        rng = np.random.default_rng(55)
        table = _random_table(rng, 4, 3)
        head = _random_head(rng, 3)
        with pytest.raises(ValueError):
            write_table(table, tmp_path / "x.ddft", head=head)


class TestCsv:
    def test_two_by_two_fixture(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("f0,f1\n1.5,2.5\n-1.0,0.25\n")
        out = read_csv(path)
        np.testing.assert_array_equal(out.features, [[1.5, 2.5], [-1.0, 0.25]])
        assert out.labels is None and out.logits is None

    def test_round_trip_preserves_every_bit(self, tmp_path):
        rng = np.random.default_rng(56)
        table = _random_table(rng, 50, 6)
        path = tmp_path / "rt.csv"
        write_csv(table, path)
        out = read_csv(path)
        np.testing.assert_array_equal(out.features, table.features)
        np.testing.assert_array_equal(out.labels, table.labels)
        np.testing.assert_array_equal(out.logits, table.logits)

    def test_csv_matches_binary_through_read_any(self, tmp_path):
        rng = np.random.default_rng(57)
        table = _random_table(rng, 20, 3)
        csv_path = tmp_path / "t.csv"
        bin_path = tmp_path / "t.ddft"
        write_csv(table, csv_path)
        write_table(table, bin_path)
        from_csv, _ = read_any(csv_path)
        from_bin, _ = read_any(bin_path)
        np.testing.assert_array_equal(from_csv.features, from_bin.features)
        np.testing.assert_array_equal(from_csv.logits, from_bin.logits)

    def test_header_only_file_is_an_empty_table(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("f0,f1,label\n")
        with pytest.raises(DataError, match="header only"):
            read_csv(path)

    def test_missing_header_and_unrecognized_columns(self, tmp_path):
        blank = tmp_path / "blank.csv"
        blank.write_text("")
        with pytest.raises(FormatError, match="header"):
            read_csv(blank)
        weird = tmp_path / "weird.csv"
        weird.write_text("f0,score\n1.0,2.0\n")
        with pytest.raises(FormatError, match="score"):
            read_csv(weird)
        nofeat = tmp_path / "nofeat.csv"
        nofeat.write_text("label\n1\n")
        with pytest.raises(FormatError, match="feature columns"):
            read_csv(nofeat)

    def test_ragged_row_reports_its_line_number(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("f0,f1\n1.0,2.0\n3.0\n")
        with pytest.raises(FormatError, match="line 3"):
            read_csv(path)

    def test_unparsable_value_reports_its_line_number(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("f0\n1.0\nbanana\n")
        with pytest.raises(FormatError, match="line 3"):
            read_csv(path)

    def test_non_finite_value_is_a_data_error(self, tmp_path):
        path = tmp_path / "inf.csv"
        path.write_text("f0\ninf\n")
        with pytest.raises(DataError):
            read_csv(path)

    def test_negative_label_is_a_data_error(self, tmp_path):
        path = tmp_path / "neg.csv"
        path.write_text("f0,label\n1.0,-1\n")
        with pytest.raises(DataError, match="negative label"):
            read_csv(path)

    def test_schema_validation(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("f0,f1,label\n1.0,2.0,0\n")
        read_csv(path, schema=CsvSchema(q=2, has_labels=True, num_classes=0))
        with pytest.raises(FormatError, match="does not match"):
            read_csv(path, schema=CsvSchema(q=3, has_labels=True, num_classes=0))

    def test_logit_columns_parse(self, tmp_path):
        path = tmp_path / "logits.csv"
        path.write_text("f0,label,l0,l1\n0.5,1,2.0,-1.0\n0.25,0,0.0,3.5\n")
        out = read_csv(path)
        np.testing.assert_array_equal(out.logits, [[2.0, -1.0], [0.0, 3.5]])
        np.testing.assert_array_equal(out.labels, [1, 0])
