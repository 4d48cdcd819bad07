import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptfrec.wire import (DIR_HINT, DIR_UPLOAD, CommLedger, WireError,
                         decode_payload, encode_payload, payload_nbytes)


def test_empty_payload_is_header_only():
    blob = encode_payload(DIR_UPLOAD, 7, [], [])
    assert len(blob) == 16
    direction, user, items, scores = decode_payload(blob)
    assert direction == DIR_UPLOAD
    assert user == 7
    assert len(items) == 0 and len(scores) == 0


def test_hundred_triples_is_1216_bytes():
    items = np.arange(100)
    scores = np.linspace(0.01, 0.99, 100)
    blob = encode_payload(DIR_HINT, 3, items, scores)
    assert len(blob) == 16 + 12 * 100 == 1216
    assert payload_nbytes(100) == 1216


@settings(max_examples=200, deadline=None)
@given(
    direction=st.sampled_from([DIR_UPLOAD, DIR_HINT]),
    user=st.integers(0, 2**32 - 1),
    triples=st.lists(st.tuples(st.integers(0, 2**32 - 1),
                               st.floats(0.0, 1.0, allow_nan=False)), max_size=64),
)
def test_round_trip_identity(direction, user, triples):
    items = np.array([t[0] for t in triples], dtype=np.int64)
    scores = np.array([t[1] for t in triples], dtype=np.float64)
    got_dir, got_user, got_items, got_scores = decode_payload(
        encode_payload(direction, user, items, scores))
    assert got_dir == direction
    assert got_user == user
    assert np.array_equal(got_items, items)
    assert np.array_equal(got_scores, scores)  # bit-exact floats


def test_decode_rejects_bad_magic():
    blob = bytearray(encode_payload(DIR_UPLOAD, 0, [1], [0.5]))
    blob[0:4] = b"XXXX"
    with pytest.raises(WireError, match="magic"):
        decode_payload(bytes(blob))


def test_decode_rejects_bad_version():
    blob = bytearray(encode_payload(DIR_UPLOAD, 0, [1], [0.5]))
    blob[4] = 99
    with pytest.raises(WireError, match="version"):
        decode_payload(bytes(blob))


def test_decode_rejects_truncation():
    blob = encode_payload(DIR_UPLOAD, 0, [1, 2, 3], [0.5, 0.6, 0.7])
    with pytest.raises(WireError):
        decode_payload(blob[:20])
    with pytest.raises(WireError):
        decode_payload(blob + b"\x00")
    with pytest.raises(WireError):
        decode_payload(b"")


def test_wire_carries_only_score_triples():
    # decoding any well-formed message yields (item, score) pairs and nothing
    # else: the format has no field that could carry a parameter tensor
    blob = encode_payload(DIR_UPLOAD, 1, [4, 5], [0.25, 0.75])
    decoded = decode_payload(blob)
    assert len(decoded) == 4
    _, _, items, scores = decoded
    assert items.ndim == 1 and scores.ndim == 1
    assert len(blob) == payload_nbytes(len(items))


def test_ledger_rows_and_means():
    ledger = CommLedger()
    ledger.add_uplink(0, 1, 100)
    ledger.add_downlink(0, 1, 40)
    ledger.add_uplink(0, 2, 60)
    assert ledger.rows() == [(0, 1, 100, 40), (0, 2, 60, 0)]
    assert ledger.uplink(0, 1) == 100
    assert ledger.downlink(0, 2) == 0
    assert ledger.uplink(5, 9) == 0  # non-participants read as zero
    assert ledger.total_bytes() == 200
    assert ledger.mean_bytes_per_client_round() == 100.0


def test_ledger_csv(tmp_path):
    ledger = CommLedger()
    ledger.add_uplink(0, 0, 16)
    ledger.add_downlink(0, 0, 28)
    path = tmp_path / "ledger.csv"
    ledger.to_csv(str(path))
    assert path.read_text().splitlines() == [
        "round,user,uplink_bytes,downlink_bytes",
        "0,0,16,28",
    ]
