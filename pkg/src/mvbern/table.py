"""Sparse active-outcome count tables under a Dirichlet prior.

Only footprints that were actually observed are stored.  Every sum over the
full sample space splits into a data part (a sum over the ``m`` stored keys)
and a prior part (``delta`` times the number of admissible outcomes matching
the query), so nothing of size ``2**k`` is ever allocated.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .schema import PRIOR_SPACES, Footprint, SchemaError, SchemaViolation, VariableSchema

log = logging.getLogger(__name__)

MAGIC = b"MVBTABLE"
FORMAT_VERSION = 1


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PriorConfig:
    """Total prior concentration ``nu`` spread evenly over the sample space.

    ``space="true"`` uses the admissible-outcome count of the schema;
    ``space="naive2k"`` reproduces the literal ``2**k`` sample space.
    ``nu`` may be a :class:`fractions.Fraction` for exact arithmetic.
    """

    nu: Real = 0.5
    space: str = "true"

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"prior concentration nu must be positive, got {self.nu}")
        if self.space not in PRIOR_SPACES:
            raise ValueError(f"prior space must be one of {PRIOR_SPACES}, got {self.space!r}")

    def sample_space(self, schema: VariableSchema) -> int:
        return schema.admissible_count(self.space)

    def per_outcome_mass(self, schema: VariableSchema) -> Real:
        return _scale(self.nu, 1, self.sample_space(schema))

    def mass_of(self, n_outcomes: int, schema: VariableSchema) -> Real:
        """Prior mass carried by ``n_outcomes`` admissible outcomes."""
        return _scale(self.nu, n_outcomes, self.sample_space(schema))


def _scale(nu: Real, num: int, den: int) -> Real:
    if isinstance(nu, Fraction):
        return nu * Fraction(num, den)
    return float(nu) * (num / den)


class EventMass(NamedTuple):
    """Posterior Dirichlet mass of an event split into data and prior parts."""

    count: int
    prior: Real

    @property
    def total(self) -> Real:
        return self.count + self.prior

    @property
    def empty(self) -> bool:
        return self.count == 0 and self.prior == 0


@dataclass(frozen=True, eq=False)
class ActiveOutcomeTable:
    """Immutable sorted map footprint code -> count, plus the prior.

    ``keys`` are strictly increasing ``uint64`` codes, ``counts`` the matching
    positive ``int64`` tallies.
    """

    schema: VariableSchema
    keys: np.ndarray
    counts: np.ndarray
    prior: PriorConfig = field(default_factory=PriorConfig)
    rejected: tuple[int, ...] = ()

    def __post_init__(self):
        self.keys.setflags(write=False)
        self.counts.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def m(self) -> int:
        return len(self.keys)

    @property
    def alpha0(self) -> Real:
        return self.n + self.prior.nu

    @property
    def sample_space(self) -> int:
        return self.prior.sample_space(self.schema)

    def __len__(self) -> int:
        return self.m

    def items(self):
        k = self.schema.k
        for code, count in zip(self.keys.tolist(), self.counts.tolist()):
            yield Footprint(code, k), count

    def count(self, footprint: Footprint | int) -> int:
        code = footprint.code if isinstance(footprint, Footprint) else int(footprint)
        pos = np.searchsorted(self.keys, np.uint64(code))
        if pos < self.m and int(self.keys[pos]) == code:
            return int(self.counts[pos])
        return 0

    def with_prior(self, prior: PriorConfig) -> ActiveOutcomeTable:
        return ActiveOutcomeTable(self.schema, self.keys, self.counts, prior, self.rejected)

    def event_mass(self, event) -> EventMass:
        return event_mass(self, event)

    def records(self) -> np.ndarray:
        """Expand back to one code per record, in table (sorted) order."""
        return np.repeat(self.keys, self.counts)

    def bits(self) -> np.ndarray:
        return self.schema.unpack(self.records())

    def save(self, path) -> None:
        save_table(self, path)

    @classmethod
    def load(cls, path, schema: VariableSchema | None = None) -> ActiveOutcomeTable:
        return load_table(path, schema)


def _as_codes(records, schema: VariableSchema) -> tuple[np.ndarray, np.ndarray]:
    """Return (codes, valid mask) for any supported record container."""
    if isinstance(records, np.ndarray) and records.ndim == 2:
        if records.shape[1] != schema.k:
            raise SchemaViolation(f"record width {records.shape[1]} != schema width {schema.k}", 0)
        ok = schema.validate_bits(records)
        return schema.pack(np.where(ok[:, None], records, 0)), ok
    if isinstance(records, np.ndarray) and records.ndim == 1 and records.dtype.kind in "ui":
        codes = records.astype(np.uint64)
        return codes, schema.validate_codes(codes)
    codes = []
    for i, rec in enumerate(records):
        if isinstance(rec, Footprint):
            if rec.k != schema.k:
                raise SchemaViolation(f"footprint width {rec.k} != schema width {schema.k}", i)
            codes.append(rec.code)
        else:
            fp = Footprint.from_bits(rec)
            if fp.k != schema.k:
                raise SchemaViolation(f"footprint width {fp.k} != schema width {schema.k}", i)
            codes.append(fp.code)
    codes = np.array(codes, dtype=np.uint64)
    return codes, schema.validate_codes(codes)


def _count_chunk(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys, counts = np.unique(codes, return_counts=True)
    return keys, counts.astype(np.int64)


def merge_counts(parts) -> tuple[np.ndarray, np.ndarray]:
    """Merge partial ``(keys, counts)`` maps into one sorted map."""
    parts = list(parts)
    if not parts:
        return np.empty(0, np.uint64), np.empty(0, np.int64)
    keys = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    merged, inverse = np.unique(keys, return_inverse=True)
    totals = np.zeros(len(merged), dtype=np.int64)
    np.add.at(totals, inverse, counts)
    return merged, totals


def build_table(
    records: Iterable | np.ndarray,
    schema: VariableSchema,
    prior: PriorConfig | None = None,
    *,
    on_error: str = "raise",
    threads: int = 1,
) -> ActiveOutcomeTable:
    """Count distinct footprints in a single pass.

    Parameters
    ----------
    records : (n, k) bit matrix, (n,) uint64 code array, or iterable of
        :class:`Footprint` / bit sequences.
    on_error : {"raise", "skip"}
        ``raise`` stops at the first invalid record with its index;
        ``skip`` drops invalid records and lists them in ``table.rejected``.
    threads : int
        Partition the stream into this many chunks counted concurrently.
        The merged result does not depend on the partition.
    """
    if on_error not in ("raise", "skip"):
        raise ValueError("on_error must be 'raise' or 'skip'")
    prior = prior or PriorConfig()
    codes, ok = _as_codes(records, schema)
    rejected: tuple[int, ...] = ()
    if not ok.all():
        bad = np.flatnonzero(~ok)
        if on_error == "raise":
            raise SchemaViolation("violates schema (non-binary value or one-hot group broken)", int(bad[0]))
        log.warning("skipping %d records that violate the schema", len(bad))
        rejected = tuple(int(i) for i in bad)
        codes = codes[ok]
    threads = max(1, int(threads))
    if threads == 1 or len(codes) < 2 * threads:
        keys, counts = _count_chunk(codes)
    else:
        chunks = np.array_split(codes, threads)
        with ThreadPoolExecutor(threads) as pool:
            keys, counts = merge_counts(pool.map(_count_chunk, chunks))
    return ActiveOutcomeTable(schema, keys, counts, prior, rejected)


def event_mass(table: ActiveOutcomeTable, event) -> EventMass:
    """Posterior mass ``eta`` of a conjunctive event.

    The data part sums counts of stored footprints matching the event; the
    prior part is ``delta`` times the number of admissible outcomes matching it.
    A contradictory event has zero mass on both sides.
    """
    event = table.schema.event(event)
    # one-hot contradictions are empty in either prior space
    if table.schema.count_matching(event, "true") == 0:
        return EventMass(0, 0 * table.prior.nu)
    matching = table.schema.count_matching(event, table.prior.space)
    sel = event.matches(table.keys, table.schema.k)
    count = int(table.counts[sel].sum())
    return EventMass(count, table.prior.mass_of(matching, table.schema))


# -- serialization ---------------------------------------------------------

_HEADER = struct.Struct("<8sHHBxxxd32sI")


def save_table(table: ActiveOutcomeTable, path) -> None:
    """Versioned little-endian binary format.

    Layout: magic, version, k, prior-space flag, nu, schema SHA-256, schema JSON
    length + bytes, m, then ``m`` sorted (code, count) uint64 pairs.
    """
    schema_json = json.dumps(table.schema.to_json(), separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(
        _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            table.schema.k,
            PRIOR_SPACES.index(table.prior.space),
            float(table.prior.nu),
            table.schema.fingerprint(),
            len(schema_json),
        )
    )
    buf.write(schema_json)
    buf.write(struct.pack("<Q", table.m))
    pairs = np.empty((table.m, 2), dtype="<u8")
    pairs[:, 0] = table.keys
    pairs[:, 1] = table.counts
    buf.write(pairs.tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_table(path, schema: VariableSchema | None = None) -> ActiveOutcomeTable:
    """Read a saved table; if ``schema`` is given its hash must match the file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:8] != MAGIC:
        raise TableFormatError(f"{path}: not a footprint table file")
    magic, version, k, space, nu, digest, json_len = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise TableFormatError(f"{path}: unsupported format version {version}")
    pos = _HEADER.size
    try:
        stored = VariableSchema.from_json(json.loads(data[pos : pos + json_len]))
    except (ValueError, KeyError, TypeError) as exc:
        raise TableFormatError(f"{path}: unreadable schema block ({exc})") from None
    pos += json_len
    if stored.fingerprint() != digest or stored.k != k:
        raise TableFormatError(f"{path}: corrupt schema block")
    if schema is not None and schema.fingerprint() != digest:
        raise SchemaError(f"{path}: table schema hash does not match the query schema")
    if len(data) < pos + 8:
        raise TableFormatError(f"{path}: truncated before the entry count")
    (m,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) - pos != 16 * m:
        raise TableFormatError(f"{path}: expected {m} entries, file is truncated or padded")
    pairs = np.frombuffer(data, dtype="<u8", count=2 * m, offset=pos).reshape(m, 2)
    keys = pairs[:, 0].astype(np.uint64)
    counts = pairs[:, 1].astype(np.int64)
    if m and not np.all(np.diff(keys) > 0):
        raise TableFormatError(f"{path}: keys not strictly increasing")
    return ActiveOutcomeTable(stored, keys, counts, PriorConfig(nu, PRIOR_SPACES[space]))
