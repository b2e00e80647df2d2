"""Delimited text -> validated footprints under a declarative column mapping.

The mapping is a YAML document.  Its ``variables`` list fixes the schema
order; each entry maps one source column either to a binary variable (via
positive / negative / missing token sets) or to a one-hot group (via numeric
intervals or token lists per member)::

    delimiter: ","
    filter: "RESULTADO_LAB==1"
    variables:
      - {name: male, kind: sex, source: SEXO, positive: ["2"], negative: ["1"], missing: ["99"]}
      - group: age
        kind: age
        source: EDAD
        members:
          - {name: age_lt20, lower: 0, upper: 20}
          - {name: age_ge20, lower: 20}
      - {name: death, kind: outcome, source: FECHA_DEF, positive: ["*"], negative: ["9999-99-99"]}

``"*"`` in a positive or negative list matches any token not listed elsewhere.
Rows with a missing token in any mapped column are dropped (case deletion);
tokens outside every set are counted separately as invalid.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from array import array
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .schema import Variable, VariableSchema

log = logging.getLogger(__name__)

WILDCARD = "*"
STRICTNESS = ("drop-row", "fail")


class MappingError(ValueError):
    """Invalid mapping configuration (raised before any data row is read)."""


class IngestError(ValueError):
    """Data-level failure under ``strictness: fail``."""


@dataclass(frozen=True)
class GroupMember:
    name: str
    lower: float | None = None
    upper: float | None = None
    codes: tuple[str, ...] = ()

    def contains(self, x: float) -> bool:
        return (self.lower is None or x >= self.lower) and (self.upper is None or x < self.upper)


@dataclass(frozen=True)
class ColumnMapping:
    source_column: str
    target: str
    kind: str = "binary"
    positive_codes: frozenset = frozenset()
    negative_codes: frozenset = frozenset()
    missing_codes: frozenset = frozenset()
    members: tuple[GroupMember, ...] = ()
    emit_positive: str | None = None
    emit_negative: str | None = None

    @property
    def is_group(self) -> bool:
        return bool(self.members)

    @property
    def by_interval(self) -> bool:
        return self.is_group and not self.members[0].codes

    def validate(self) -> None:
        sets = [("positive", self.positive_codes), ("negative", self.negative_codes), ("missing", self.missing_codes)]
        for i, (na, a) in enumerate(sets):
            for nb, b in sets[i + 1 :]:
                if a & b:
                    raise MappingError(f"{self.source_column}: {na} and {nb} codes overlap: {sorted(a & b)}")
        if WILDCARD in self.missing_codes:
            raise MappingError(f"{self.source_column}: wildcard not allowed in missing codes")
        if not self.is_group:
            if not self.positive_codes or not self.negative_codes:
                raise MappingError(f"{self.source_column}: binary mapping needs positive and negative codes")
            return
        if len(self.members) < 2:
            raise MappingError(f"{self.target}: a one-hot group needs at least two members")
        if self.by_interval:
            if any(m.codes for m in self.members):
                raise MappingError(f"{self.target}: mix of interval and code members")
            prev_upper = None
            for m in self.members:
                lo = -math.inf if m.lower is None else m.lower
                hi = math.inf if m.upper is None else m.upper
                if not lo < hi:
                    raise MappingError(f"{self.target}.{m.name}: empty interval")
                if prev_upper is not None and lo < prev_upper:
                    raise MappingError(f"{self.target}: intervals overlap or are out of order at {m.name}")
                if prev_upper is not None and lo > prev_upper:
                    raise MappingError(f"{self.target}: gap before {m.name}")
                prev_upper = hi
        else:
            seen: set[str] = set()
            for m in self.members:
                if not m.codes:
                    raise MappingError(f"{self.target}.{m.name}: member needs codes or an interval")
                if seen & set(m.codes):
                    raise MappingError(f"{self.target}: member codes overlap")
                seen |= set(m.codes)
            if seen & self.missing_codes:
                raise MappingError(f"{self.target}: member codes overlap missing codes")


@dataclass
class Mapping:
    columns: list[ColumnMapping]
    delimiter: str = ","
    encoding: str = "utf-8"
    strictness: str = "drop-row"
    filter: str | None = None
    emit_constants: dict = field(default_factory=dict)

    def schema(self) -> VariableSchema:
        variables = []
        for c in self.columns:
            if c.is_group:
                variables += [Variable(m.name, c.kind, c.target) for m in c.members]
            else:
                variables.append(Variable(c.target, c.kind))
        return VariableSchema(tuple(variables))

    def check_covers(self, schema: VariableSchema) -> None:
        mine = self.schema()
        if mine.fingerprint() != schema.fingerprint():
            missing = sorted(set(schema.names) - set(mine.names))
            extra = sorted(set(mine.names) - set(schema.names))
            raise MappingError(
                f"mapping does not cover the schema exactly (unmapped: {missing}, unknown: {extra}, "
                "or order/kinds differ)"
            )


def _codes(value) -> frozenset:
    if value is None:
        return frozenset()
    if isinstance(value, (str, int, float)):
        value = [value]
    return frozenset(str(v) for v in value)


def parse_mapping(doc: dict) -> Mapping:
    if not isinstance(doc, dict) or "variables" not in doc:
        raise MappingError("mapping needs a top-level 'variables' list")
    columns = []
    for i, entry in enumerate(doc["variables"]):
        try:
            source = str(entry["source"])
            if "group" in entry:
                members = tuple(
                    GroupMember(
                        str(m["name"]),
                        None if m.get("lower") is None else float(m["lower"]),
                        None if m.get("upper") is None else float(m["upper"]),
                        tuple(str(c) for c in m.get("codes", ())),
                    )
                    for m in entry["members"]
                )
                col = ColumnMapping(
                    source, str(entry["group"]), entry.get("kind", "binary"),
                    missing_codes=_codes(entry.get("missing")), members=members,
                )
            else:
                emit = entry.get("emit", {})
                col = ColumnMapping(
                    source, str(entry["name"]), entry.get("kind", "binary"),
                    _codes(entry.get("positive")), _codes(entry.get("negative")), _codes(entry.get("missing")),
                    emit_positive=emit.get("positive"), emit_negative=emit.get("negative"),
                )
        except (KeyError, TypeError) as exc:
            raise MappingError(f"variables[{i}]: malformed entry ({exc})") from None
        col.validate()
        columns.append(col)
    strictness = doc.get("strictness", "drop-row")
    if strictness not in STRICTNESS:
        raise MappingError(f"strictness must be one of {STRICTNESS}")
    mapping = Mapping(
        columns,
        doc.get("delimiter", ","),
        doc.get("encoding", "utf-8"),
        strictness,
        doc.get("filter"),
        {str(k): str(v) for k, v in (doc.get("emit_constants") or {}).items()},
    )
    mapping.schema()  # duplicate names etc.
    return mapping


def load_mapping(path) -> Mapping:
    text = Path(path).read_text()
    try:
        return parse_mapping(yaml.safe_load(text))
    except yaml.YAMLError as exc:
        raise MappingError(f"{path}: {exc}") from None


def bundled_mapping(name: str = "mexico_open_data") -> Mapping:
    text = resources.files("mvbern.data").joinpath(f"{name}.yaml").read_text()
    return parse_mapping(yaml.safe_load(text))


def bundled_mapping_text(name: str = "mexico_open_data") -> str:
    return resources.files("mvbern.data").joinpath(f"{name}.yaml").read_text()


# -- row filter --------------------------------------------------------------

_PRED = re.compile(r"^\s*([^=!&,\s]+)\s*(==|!=)\s*(.+?)\s*$")


@dataclass(frozen=True)
class Predicate:
    column: str
    negate: bool
    values: frozenset


def parse_filter(expr: str | None) -> list[Predicate]:
    """``COL==a|b & COL2!=c`` -> conjunction of predicates on raw tokens."""
    if not expr or not expr.strip():
        return []
    preds = []
    for part in re.split(r"[&,]", expr):
        m = _PRED.match(part)
        if not m:
            raise MappingError(f"cannot parse filter term {part.strip()!r}")
        col, op, vals = m.groups()
        preds.append(Predicate(col, op == "!=", frozenset(v.strip() for v in vals.split("|"))))
    return preds


# -- ingestion ---------------------------------------------------------------


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_kept: int = 0
    rows_dropped_missing: int = 0
    rows_dropped_filter: int = 0
    rows_dropped_invalid: int = 0
    missing_counts: dict = field(default_factory=dict)
    invalid_counts: dict = field(default_factory=dict)

    @property
    def rows_considered(self) -> int:
        return self.rows_read - self.rows_dropped_filter

    @property
    def missing_rates(self) -> dict:
        n = self.rows_considered
        return {c: (v / n if n else 0.0) for c, v in self.missing_counts.items()}

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rows_dropped_missing": self.rows_dropped_missing,
            "rows_dropped_filter": self.rows_dropped_filter,
            "rows_dropped_invalid": self.rows_dropped_invalid,
            "missing_rates": self.missing_rates,
            "invalid_counts": dict(self.invalid_counts),
        }


@dataclass
class IngestResult:
    bits: np.ndarray
    codes: np.ndarray
    schema: VariableSchema
    report: IngestReport


_MISSING, _INVALID = -1, -2


def _column_decoder(col: ColumnMapping):
    """Return ``token -> value`` where value is a bit, a group level, or a sentinel."""
    if not col.is_group:
        table = {t: 1 for t in col.positive_codes if t != WILDCARD}
        table.update({t: 0 for t in col.negative_codes if t != WILDCARD})
        table.update({t: _MISSING for t in col.missing_codes})
        default = 1 if WILDCARD in col.positive_codes else 0 if WILDCARD in col.negative_codes else _INVALID
        return lambda tok: table.get(tok, default)
    missing = col.missing_codes
    if not col.by_interval:
        table = {c: level for level, m in enumerate(col.members) for c in m.codes}
        table.update({t: _MISSING for t in missing})
        return lambda tok: table.get(tok, _INVALID)
    members = col.members

    def decode(tok):
        if tok in missing:
            return _MISSING
        try:
            x = float(tok)
        except ValueError:
            return _INVALID
        for level, m in enumerate(members):
            if m.contains(x):
                return level
        return _INVALID

    return decode


def ingest(
    source,
    mapping: Mapping,
    row_filter: str | None = None,
    schema: VariableSchema | None = None,
) -> IngestResult:
    """Read a delimited file (path or text stream) into a footprint bit matrix.

    ``row_filter`` overrides ``mapping.filter``.  If ``schema`` is given the
    mapping must cover exactly its variables, checked before reading.
    """
    target_schema = mapping.schema()
    if schema is not None:
        mapping.check_covers(schema)
    preds = parse_filter(row_filter if row_filter is not None else mapping.filter)
    if isinstance(source, (str, Path)):
        # undecodable bytes in unmapped columns must not abort the read
        handle = open(source, newline="", encoding=mapping.encoding, errors="surrogateescape")
        close = True
    else:
        handle, close = source, False
    try:
        return _ingest_stream(handle, mapping, preds, target_schema)
    finally:
        if close:
            handle.close()


def _ingest_stream(handle, mapping: Mapping, preds, schema: VariableSchema) -> IngestResult:
    reader = csv.reader(handle, delimiter=mapping.delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        header = []
    pos = {name: i for i, name in enumerate(header)}
    needed = [c.source_column for c in mapping.columns] + [p.column for p in preds]
    absent = sorted({c for c in needed if c not in pos})
    if absent:
        raise MappingError(f"columns not found in header: {absent}")

    k = schema.k
    plan = []  # (column index, decoder, is_group, shift or member shifts, label)
    offset = 0
    for c in mapping.columns:
        if c.is_group:
            shifts = [k - 1 - (offset + j) for j in range(len(c.members))]
            offset += len(c.members)
        else:
            shifts = k - 1 - offset
            offset += 1
        plan.append((pos[c.source_column], _column_decoder(c), c.is_group, shifts, c.source_column))
    filt = [(pos[p.column], p.negate, p.values) for p in preds]

    report = IngestReport(missing_counts={c.source_column: 0 for c in mapping.columns})
    invalid_counts: dict[str, int] = {}
    codes = array("Q")
    fail = mapping.strictness == "fail"
    width = len(header)
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        report.rows_read += 1
        if len(row) < width:
            row = row + [""] * (width - len(row))
        if any((row[i].strip() in vals) == neg for i, neg, vals in filt):
            report.rows_dropped_filter += 1
            continue
        code = 0
        missing = invalid = False
        for idx, decode, is_group, shifts, label in plan:
            v = decode(row[idx].strip())
            if v == _MISSING:
                report.missing_counts[label] += 1
                missing = True
            elif v == _INVALID:
                invalid_counts[label] = invalid_counts.get(label, 0) + 1
                invalid = True
            elif is_group:
                code |= 1 << shifts[v]
            elif v:
                code |= 1 << shifts
        if invalid:
            if fail:
                raise IngestError(f"line {lineno}: unrecognized token in {sorted(invalid_counts)}")
            report.rows_dropped_invalid += 1
        elif missing:
            if fail:
                raise IngestError(f"line {lineno}: missing value")
            report.rows_dropped_missing += 1
        else:
            codes.append(code)
    report.invalid_counts = invalid_counts
    report.rows_kept = len(codes)
    code_arr = np.frombuffer(codes, dtype=np.uint64).copy() if len(codes) else np.empty(0, np.uint64)
    if report.rows_dropped_invalid:
        log.warning("dropped %d rows with unrecognized tokens", report.rows_dropped_invalid)
    return IngestResult(schema.unpack(code_arr), code_arr, schema, report)


# -- re-emission ------------------------------------------------------------


def _emit_token(col: ColumnMapping, bit: int) -> str:
    explicit = col.emit_positive if bit else col.emit_negative
    if explicit is not None:
        return str(explicit)
    codes = sorted(t for t in (col.positive_codes if bit else col.negative_codes) if t != WILDCARD)
    if not codes:
        raise MappingError(f"{col.source_column}: add an 'emit' token for the wildcard side")
    return codes[0]


def _emit_level(member: GroupMember) -> str:
    if member.codes:
        return member.codes[0]
    x = member.lower if member.lower is not None else member.upper - 1
    return str(int(x)) if float(x).is_integer() else repr(x)


def emit_csv(bits: np.ndarray, mapping: Mapping, out, extra: dict | None = None) -> None:
    """Write footprints back as raw columns that :func:`ingest` maps to the same bits."""
    schema = mapping.schema()
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != schema.k:
        raise ValueError(f"expected an (n, {schema.k}) bit matrix")
    constants = dict(mapping.emit_constants)
    constants.update(extra or {})
    header = [c.source_column for c in mapping.columns] + list(constants)
    own = isinstance(out, (str, Path))
    handle = open(out, "w", newline="", encoding=mapping.encoding) if own else out
    try:
        writer = csv.writer(handle, delimiter=mapping.delimiter, lineterminator="\n")
        writer.writerow(header)
        cols = []
        offset = 0
        for c in mapping.columns:
            if c.is_group:
                block = bits[:, offset : offset + len(c.members)]
                levels = block.argmax(axis=1)
                tokens = np.array([_emit_level(m) for m in c.members], dtype=object)
                cols.append(tokens[levels])
                offset += len(c.members)
            else:
                tokens = np.array([_emit_token(c, 0), _emit_token(c, 1)], dtype=object)
                cols.append(tokens[bits[:, offset].astype(int)])
                offset += 1
        tail = list(constants.values())
        for row in zip(*cols):
            writer.writerow(list(row) + tail)
    finally:
        if own:
            handle.close()


def emit_csv_text(bits: np.ndarray, mapping: Mapping, extra: dict | None = None) -> str:
    buf = io.StringIO()
    emit_csv(bits, mapping, buf, extra)
    return buf.getvalue()

