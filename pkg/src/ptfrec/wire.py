"""Bit-exact wire format for prediction payloads, plus the byte ledger.

Every message is a header followed by (item id, score) triples:

    magic     4s  b"PTFP"
    version   u16
    direction u8   0 = client upload, 1 = server hint
    pad       u8
    user      u32
    count     u32
    then count * (item u32, score f64), little-endian.

16 bytes of header + 12 bytes per triple. The format carries prediction
scores only; there is no message type that could transport model parameters.
"""

from __future__ import annotations

import csv
import struct
from collections import defaultdict

import numpy as np

MAGIC = b"PTFP"
VERSION = 1
DIR_UPLOAD = 0
DIR_HINT = 1

_HEADER = struct.Struct("<4sHBBII")
_TRIPLE_DTYPE = np.dtype([("item", "<u4"), ("score", "<f8")])
assert _TRIPLE_DTYPE.itemsize == 12


class WireError(ValueError):
    """Bad magic/version or truncated payload bytes."""


def payload_nbytes(count: int) -> int:
    return _HEADER.size + _TRIPLE_DTYPE.itemsize * count


def encode_payload(direction: int, user: int, items, scores) -> bytes:
    items = np.asarray(items, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if items.shape != scores.shape:
        raise WireError("items and scores must have equal length")
    if direction not in (DIR_UPLOAD, DIR_HINT):
        raise WireError(f"bad direction {direction}")
    triples = np.empty(len(items), dtype=_TRIPLE_DTYPE)
    triples["item"] = items
    triples["score"] = scores
    header = _HEADER.pack(MAGIC, VERSION, direction, 0, user, len(items))
    return header + triples.tobytes()


def decode_payload(buf: bytes):
    """Returns (direction, user, items, scores); raises WireError on anything
    that is not a well-formed message."""
    if len(buf) < _HEADER.size:
        raise WireError("truncated header")
    magic, version, direction, _, user, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise WireError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WireError(f"unsupported version {version}")
    if direction not in (DIR_UPLOAD, DIR_HINT):
        raise WireError(f"bad direction {direction}")
    expected = payload_nbytes(count)
    if len(buf) != expected:
        raise WireError(f"expected {expected} bytes for {count} triples, got {len(buf)}")
    triples = np.frombuffer(buf, dtype=_TRIPLE_DTYPE, count=count, offset=_HEADER.size)
    return direction, user, triples["item"].astype(np.int64), triples["score"].copy()


class CommLedger:
    """Exact per-round, per-client uplink/downlink byte counts."""

    def __init__(self):
        self._up: dict[tuple[int, int], int] = defaultdict(int)
        self._down: dict[tuple[int, int], int] = defaultdict(int)

    def add_uplink(self, round_no: int, user: int, nbytes: int):
        self._up[(round_no, user)] += nbytes

    def add_downlink(self, round_no: int, user: int, nbytes: int):
        self._down[(round_no, user)] += nbytes

    def rows(self):
        """Sorted (round, user, uplink_bytes, downlink_bytes) tuples."""
        keys = sorted(set(self._up) | set(self._down))
        return [(r, u, self._up.get((r, u), 0), self._down.get((r, u), 0))
                for r, u in keys]

    def uplink(self, round_no: int, user: int) -> int:
        return self._up.get((round_no, user), 0)

    def downlink(self, round_no: int, user: int) -> int:
        return self._down.get((round_no, user), 0)

    def total_bytes(self) -> int:
        return sum(self._up.values()) + sum(self._down.values())

    def mean_bytes_per_client_round(self) -> float:
        """Mean of uplink+downlink over all (round, client) ledger entries."""
        rows = self.rows()
        if not rows:
            return 0.0
        return sum(up + down for _, _, up, down in rows) / len(rows)

    def to_csv(self, path: str):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["round", "user", "uplink_bytes", "downlink_bytes"])
            writer.writerows(self.rows())
