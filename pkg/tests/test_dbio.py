import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from marginalpriv import dbio
from marginalpriv.core import Database
from marginalpriv.errors import DimensionError, FormatError


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30).flatmap(lambda n: st.integers(1, 30).flatmap(lambda d: arrays(np.bool_, (n, d)))))
@pytest.mark.parametrize("fmt", ["binary", "text"])
def test_round_trip(tmp_path_factory, fmt, bits):
    path = tmp_path_factory.mktemp("db") / f"x.{fmt}"
    db = Database.from_bits(bits)
    dbio.save_database(db, path, fmt)
    back = dbio.load_database(path)
    assert back == db
    assert np.array_equal(back.column_counts(), bits.sum(axis=0))


def test_binary_layout_is_row_major_lsb_first(tmp_path):
    db = Database.from_signs([[1, -1, 1], [1, 1, -1], [-1, -1, 1]])
    path = tmp_path / "x.db"
    dbio.write_binary(db, path)
    raw = path.read_bytes()
    assert raw[:8] == dbio.MAGIC
    assert int.from_bytes(raw[8:16], "little") == 3 and int.from_bytes(raw[16:24], "little") == 3
    # Stream 1 0 1 1 1 0 0 0 | 1 -> bytes 0b00011101, 0b00000001
    assert raw[24:] == bytes([0b00011101, 0b00000001])


def test_large_round_trip_crosses_chunks(tmp_path):
    db = Database.random(dbio._CHUNK_ROWS + 13, 11, np.random.default_rng(0))
    path = tmp_path / "big.db"
    dbio.write_binary(db, path)
    assert dbio.read_binary(path) == db


def test_expected_shape_mismatch(tmp_path):
    path = tmp_path / "x.db"
    dbio.write_binary(Database.constant(4, 5), path)
    assert dbio.read_binary(path, expected_shape=(4, 5)).shape == (4, 5)
    with pytest.raises(DimensionError):
        dbio.read_binary(path, expected_shape=(4, 6))
    with pytest.raises(DimensionError):
        dbio.read_binary(path, expected_shape=(3, None))


def test_truncated_and_corrupt_files(tmp_path):
    path = tmp_path / "x.db"
    dbio.write_binary(Database.constant(4, 5), path)
    raw = path.read_bytes()
    (tmp_path / "short.db").write_bytes(raw[:-1])
    with pytest.raises(DimensionError):
        dbio.read_binary(tmp_path / "short.db")
    (tmp_path / "magic.db").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(FormatError):
        dbio.read_binary(tmp_path / "magic.db")
    # 20 bits used of 24: set a padding bit.
    (tmp_path / "pad.db").write_bytes(raw[:-1] + bytes([raw[-1] | 0x80]))
    with pytest.raises(FormatError):
        dbio.read_binary(tmp_path / "pad.db")
    (tmp_path / "hdr.db").write_bytes(raw[:10])
    with pytest.raises(FormatError):
        dbio.read_binary(tmp_path / "hdr.db")


def test_text_rejects_ragged_and_bad_chars(tmp_path):
    (tmp_path / "ragged.txt").write_text("++-\n+-\n")
    with pytest.raises(DimensionError):
        dbio.read_text(tmp_path / "ragged.txt")
    (tmp_path / "bad.txt").write_text("+x-\n")
    with pytest.raises(FormatError):
        dbio.read_text(tmp_path / "bad.txt")


def test_sidecar_round_trip(tmp_path):
    rec = {"users": "10", "delta": "0.05", "biases": "0.1,0.2"}
    dbio.write_sidecar(rec, tmp_path / "s")
    assert dbio.read_sidecar(tmp_path / "s") == rec
    (tmp_path / "bad").write_text("novalue\n")
    with pytest.raises(FormatError):
        dbio.read_sidecar(tmp_path / "bad")
