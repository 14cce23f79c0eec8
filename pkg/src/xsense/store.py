"""Binary storage for contextual embedding records (``.cemb`` files).

Layout (all little-endian):

* header: magic ``CEMB``, version u32, dim u32, count u64, then language and
  encoder tag as u16-length-prefixed UTF-8 (empty strings give a 24-byte
  header).
* per record: record_id u64, sentence_id u64, token_index u32, layer i8,
  surface and lemma as u16-length-prefixed UTF-8 (lemma length 0xFFFF means
  absent), vector as dim f32 values.

Vectors live on disk as f32; all downstream linear algebra promotes to f64.
Stores are immutable after load and safe to share across workers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    MalformedHeader,
    NonFinite,
    TruncatedFile,
    UnknownId,
)

MAGIC = b"CEMB"
VERSION = 1

#: header bytes when language and encoder_tag are empty
HEADER_BASE = 4 + 4 + 4 + 8 + 2 + 2
#: per-record bytes besides the vector and the two string payloads
RECORD_FIXED = 8 + 8 + 4 + 1 + 2 + 2

_NO_LEMMA = 0xFFFF


@dataclass(frozen=True)
class EmbeddingRecord:
    record_id: int
    sentence_id: int
    token_index: int
    surface: str
    lemma: Optional[str]
    layer: int
    vector: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.record_id == other.record_id
            and self.sentence_id == other.sentence_id
            and self.token_index == other.token_index
            and self.surface == other.surface
            and self.lemma == other.lemma
            and self.layer == other.layer
            and np.array_equal(self.vector, other.vector)
        )


class EmbeddingStore:
    """Ordered collection of embedding records with one shared dimension.

    Data is kept columnar: metadata arrays plus one (count, dim) f32 matrix.
    """

    def __init__(
        self,
        dim: int,
        record_ids: Sequence[int],
        sentence_ids: Sequence[int],
        token_indices: Sequence[int],
        surfaces: Sequence[str],
        lemmas: Sequence[Optional[str]],
        layer: int,
        vectors: np.ndarray,
        language: str = "",
        encoder_tag: str = "",
    ):
        self.dim = int(dim)
        self.record_ids = np.asarray(record_ids, dtype=np.uint64)
        self.sentence_ids = np.asarray(sentence_ids, dtype=np.uint64)
        self.token_indices = np.asarray(token_indices, dtype=np.uint32)
        self.surfaces = list(surfaces)
        self.lemmas = list(lemmas)
        self.layer = int(layer)
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32).reshape(
            len(self.record_ids), self.dim
        )
        self.language = language
        self.encoder_tag = encoder_tag
        self._id_to_row = None
        self.validate()

    # -- construction -----------------------------------------------------

    @classmethod
    def from_records(
        cls, dim, records: Sequence[EmbeddingRecord], language="", encoder_tag=""
    ) -> "EmbeddingStore":
        recs = list(records)
        layer = recs[0].layer if recs else -1
        vectors = (
            np.stack([r.vector for r in recs]).astype(np.float32)
            if recs
            else np.zeros((0, dim), dtype=np.float32)
        )
        return cls(
            dim=dim,
            record_ids=[r.record_id for r in recs],
            sentence_ids=[r.sentence_id for r in recs],
            token_indices=[r.token_index for r in recs],
            surfaces=[r.surface for r in recs],
            lemmas=[r.lemma for r in recs],
            layer=layer,
            vectors=vectors,
            language=language,
            encoder_tag=encoder_tag,
        )

    # -- basic protocol ----------------------------------------------------

    @property
    def count(self) -> int:
        return len(self.record_ids)

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.language == other.language
            and self.encoder_tag == other.encoder_tag
            # layer lives on records, so empty stores cannot disagree on it
            and (self.count == 0 or self.layer == other.layer)
            and np.array_equal(self.record_ids, other.record_ids)
            and np.array_equal(self.sentence_ids, other.sentence_ids)
            and np.array_equal(self.token_indices, other.token_indices)
            and self.surfaces == other.surfaces
            and self.lemmas == other.lemmas
            and np.array_equal(self.vectors, other.vectors)
        )

    def record(self, row: int) -> EmbeddingRecord:
        return EmbeddingRecord(
            record_id=int(self.record_ids[row]),
            sentence_id=int(self.sentence_ids[row]),
            token_index=int(self.token_indices[row]),
            surface=self.surfaces[row],
            lemma=self.lemmas[row],
            layer=self.layer,
            vector=self.vectors[row],
        )

    def iter_records(self) -> Iterator[EmbeddingRecord]:
        for row in range(self.count):
            yield self.record(row)

    def matrix(self) -> np.ndarray:
        """Vectors as a (count, dim) float64 matrix for numerical work."""
        return self.vectors.astype(np.float64)

    # -- lookups -----------------------------------------------------------

    def row_of(self, record_id: int) -> int:
        if self._id_to_row is None:
            self._id_to_row = {int(r): i for i, r in enumerate(self.record_ids)}
        try:
            return self._id_to_row[int(record_id)]
        except KeyError:
            raise UnknownId(f"record id {record_id} not in store") from None

    def position_index(self) -> dict:
        """Map (sentence_id, token_index) -> record_id."""
        return {
            (int(s), int(t)): int(r)
            for s, t, r in zip(self.sentence_ids, self.token_indices, self.record_ids)
        }

    def subset(self, ids: Sequence[int]) -> "EmbeddingStore":
        """New store holding `ids` in the given order; dim unchanged."""
        rows = [self.row_of(i) for i in ids]
        return EmbeddingStore(
            dim=self.dim,
            record_ids=self.record_ids[rows],
            sentence_ids=self.sentence_ids[rows],
            token_indices=self.token_indices[rows],
            surfaces=[self.surfaces[r] for r in rows],
            lemmas=[self.lemmas[r] for r in rows],
            layer=self.layer,
            vectors=self.vectors[rows] if rows else np.zeros((0, self.dim), np.float32),
            language=self.language,
            encoder_tag=self.encoder_tag,
        )

    # -- invariants ----------------------------------------------------------

    def validate(self):
        n = self.count
        if not (
            len(self.sentence_ids)
            == len(self.token_indices)
            == len(self.surfaces)
            == len(self.lemmas)
            == self.vectors.shape[0]
            == n
        ):
            raise DimensionMismatch("column lengths disagree")
        if self.vectors.shape[1] != self.dim:
            raise DimensionMismatch(
                f"vectors have dim {self.vectors.shape[1]}, store says {self.dim}"
            )
        if n and len(np.unique(self.record_ids)) != n:
            raise ValueError("duplicate record ids in store")
        if not np.all(np.isfinite(self.vectors)):
            raise NonFinite("store contains NaN/Inf vectors")


# -- serialization -----------------------------------------------------------


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) >= _NO_LEMMA:
        raise ValueError("string field longer than 65534 bytes")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise TruncatedFile(
                f"{self.path}: needed {self.off + n} bytes, file has {len(self.buf)}"
            )
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def take_str(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    def take_opt_str(self) -> Optional[str]:
        (n,) = self.unpack("<H")
        if n == _NO_LEMMA:
            return None
        return self.take(n).decode("utf-8")


def write_store(store: EmbeddingStore, path) -> None:
    """Serialize `store` to `path`; byte output is a pure function of the store."""
    store.validate()
    parts = [
        MAGIC,
        struct.pack("<IIQ", VERSION, store.dim, store.count),
        _pack_str(store.language),
        _pack_str(store.encoder_tag),
    ]
    for row in range(store.count):
        parts.append(
            struct.pack(
                "<QQIb",
                int(store.record_ids[row]),
                int(store.sentence_ids[row]),
                int(store.token_indices[row]),
                store.layer,
            )
        )
        parts.append(_pack_str(store.surfaces[row]))
        lemma = store.lemmas[row]
        if lemma is None:
            parts.append(struct.pack("<H", _NO_LEMMA))
        else:
            parts.append(_pack_str(lemma))
        parts.append(store.vectors[row].astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_store(path, expected_dim: Optional[int] = None) -> EmbeddingStore:
    """Load a ``.cemb`` file.

    Raises MalformedHeader on bad magic/version, TruncatedFile when the file
    is shorter than the header promises, DimensionMismatch when `expected_dim`
    is given and disagrees, NonFinite on NaN/Inf vectors.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf, path)
    if len(buf) < 4 or r.take(4) != MAGIC:
        raise MalformedHeader(f"{path}: not a CEMB file")
    version, dim, count = r.unpack("<IIQ")
    if version != VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    language = r.take_str()
    encoder_tag = r.take_str()
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatch(f"{path}: store dim {dim}, expected {expected_dim}")

    record_ids = np.empty(count, dtype=np.uint64)
    sentence_ids = np.empty(count, dtype=np.uint64)
    token_indices = np.empty(count, dtype=np.uint32)
    surfaces = []
    lemmas = []
    vectors = np.empty((count, dim), dtype=np.float32)
    layer = -1
    for row in range(count):
        rid, sid, tix, lay = r.unpack("<QQIb")
        if row == 0:
            layer = lay
        elif lay != layer:
            raise MalformedHeader(f"{path}: layer changes within store")
        record_ids[row] = rid
        sentence_ids[row] = sid
        token_indices[row] = tix
        surfaces.append(r.take_str())
        lemmas.append(r.take_opt_str())
        vectors[row] = np.frombuffer(r.take(4 * dim), dtype="<f4")
    return EmbeddingStore(
        dim=dim,
        record_ids=record_ids,
        sentence_ids=sentence_ids,
        token_indices=token_indices,
        surfaces=surfaces,
        lemmas=lemmas,
        layer=layer,
        vectors=vectors,
        language=language,
        encoder_tag=encoder_tag,
    )


def inspect_lines(store: EmbeddingStore, n: int = 5) -> Iterator[str]:
    """Header plus the first `n` records as JSON lines (CLI `store inspect`)."""
    yield json.dumps(
        {
            "dim": store.dim,
            "count": store.count,
            "layer": store.layer,
            "language": store.language,
            "encoder_tag": store.encoder_tag,
        }
    )
    for row in range(min(n, store.count)):
        rec = store.record(row)
        yield json.dumps(
            {
                "record_id": rec.record_id,
                "sentence_id": rec.sentence_id,
                "token_index": rec.token_index,
                "surface": rec.surface,
                "lemma": rec.lemma,
                "vector_head": [round(float(v), 6) for v in rec.vector[:4]],
            },
            ensure_ascii=False,
        )
