"""Variable schemas, footprints and conjunctive events.

A footprint is a fixed-width vector of zeros and ones.  Internally a batch of
footprints is carried as a 1-d ``uint64`` array of *codes*, where variable 0
occupies the most significant of the ``k`` low bits.  With that layout integer
order on codes equals lexicographic order on the bit vectors, so sorting codes
gives the canonical table ordering for free.

One-hot groups (e.g. an age band split into four indicator columns) restrict
the sample space: exactly one member of each group is set in every admissible
footprint.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_BITS = 64

PRIOR_SPACES = ("true", "naive2k")


class SchemaError(ValueError):
    """Invalid schema definition or event specification."""


class SchemaViolation(ValueError):
    """A record does not satisfy the schema (wrong width, non-binary, one-hot broken)."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"record {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = "binary"
    group: str | None = None

    @property
    def role(self) -> str:
        return "binary" if self.group is None else "one-hot"


@dataclass(frozen=True)
class Event:
    """Conjunction of ``variable index == bit`` requirements.

    ``contradictory`` marks the empty event produced by conjoining incompatible
    requirements on the same index.  Contradictions that only arise from the
    one-hot structure are detected by :meth:`VariableSchema.count_matching`.
    """

    requirements: tuple[tuple[int, int], ...] = ()
    contradictory: bool = False

    def __and__(self, other: Event) -> Event:
        merged = dict(self.requirements)
        contradictory = self.contradictory or other.contradictory
        for idx, bit in other.requirements:
            if merged.get(idx, bit) != bit:
                contradictory = True
            merged[idx] = bit
        return Event(tuple(sorted(merged.items())), contradictory)

    def __len__(self) -> int:
        return len(self.requirements)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.requirements)

    def mask_value(self, k: int) -> tuple[int, int]:
        """Bit mask and required value on the code layout of a width-``k`` schema."""
        mask = value = 0
        for idx, bit in self.requirements:
            shift = k - 1 - idx
            mask |= 1 << shift
            value |= bit << shift
        return mask, value

    def matches(self, codes: np.ndarray, k: int) -> np.ndarray:
        if self.contradictory:
            return np.zeros(len(codes), dtype=bool)
        mask, value = self.mask_value(k)
        return (codes & np.uint64(mask)) == np.uint64(value)


@dataclass(frozen=True)
class VariableSchema:
    """Ordered binary variables plus disjoint one-hot groups.

    Parameters
    ----------
    variables : sequence of Variable
        Bit positions ``0..k-1`` in order.  Members of a one-hot group carry the
        group name in ``Variable.group``; a group must have at least two members.
    """

    variables: tuple[Variable, ...]
    groups: tuple[tuple[str, tuple[int, ...]], ...] = field(init=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate variable names: {dup}")
        if not 0 < len(variables) <= MAX_BITS:
            raise SchemaError(f"schema width must be in 1..{MAX_BITS}, got {len(variables)}")
        groups: dict[str, list[int]] = {}
        for i, v in enumerate(variables):
            if v.group is not None:
                if v.group in names:
                    raise SchemaError(f"group name {v.group!r} collides with a variable name")
                groups.setdefault(v.group, []).append(i)
        for g, members in groups.items():
            if len(members) < 2:
                raise SchemaError(f"one-hot group {g!r} needs at least two members")
        object.__setattr__(self, "groups", tuple((g, tuple(m)) for g, m in groups.items()))

    @classmethod
    def from_spec(cls, spec: Sequence) -> VariableSchema:
        """Build from a list of names, ``(name, kind)`` pairs or dicts.

        Dict entries may describe a group: ``{"group": "age", "members": [...],
        "kind": "demographic"}``.
        """
        variables = []
        for item in spec:
            if isinstance(item, str):
                variables.append(Variable(item))
            elif isinstance(item, Mapping):
                if "members" in item:
                    for name in item["members"]:
                        variables.append(Variable(name, item.get("kind", "binary"), item["group"]))
                else:
                    variables.append(Variable(item["name"], item.get("kind", "binary")))
            else:
                name, kind = item
                variables.append(Variable(name, kind))
        return cls(tuple(variables))

    # -- basic properties ------------------------------------------------

    @property
    def k(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.k:
                raise SchemaError(f"variable index {name} out of range 0..{self.k - 1}")
            return int(name)
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown variable {name!r}") from None

    def group_members(self, group: str) -> tuple[int, ...]:
        for g, members in self.groups:
            if g == group:
                return members
        raise SchemaError(f"unknown one-hot group {group!r}")

    def kinds(self) -> list[str]:
        seen: list[str] = []
        for v in self.variables:
            if v.kind not in seen:
                seen.append(v.kind)
        return seen

    def of_kind(self, kind: str) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == kind]

    @property
    def free_bits(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.group is None]

    def admissible_count(self, space: str = "true") -> int:
        """Size of the sample space: ``2**free * prod(group sizes)``, or ``2**k`` in naive mode."""
        if space == "naive2k":
            return 1 << self.k
        if space != "true":
            raise SchemaError(f"unknown prior space {space!r}")
        return (1 << len(self.free_bits)) * math.prod(len(m) for _, m in self.groups)

    def count_matching(self, event: Event, space: str = "true") -> int:
        """Number of admissible outcomes satisfying ``event`` (0 for an empty event)."""
        if event.contradictory:
            return 0
        if space == "naive2k":
            return 1 << (self.k - len(event))
        if space != "true":
            raise SchemaError(f"unknown prior space {space!r}")
        req = dict(event.requirements)
        count = 1 << sum(1 for i in self.free_bits if i not in req)
        for _, members in self.groups:
            ones = [i for i in members if req.get(i) == 1]
            if len(ones) > 1:
                return 0
            if ones:
                continue
            open_slots = sum(1 for i in members if i not in req)
            if open_slots == 0:
                return 0
            count *= open_slots
        return count

    def fingerprint(self) -> bytes:
        """SHA-256 over names, kinds and group layout; stable across runs."""
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).digest()

    def to_json(self) -> list:
        return [{"name": v.name, "kind": v.kind, "group": v.group} for v in self.variables]

    @classmethod
    def from_json(cls, items: list) -> VariableSchema:
        return cls(tuple(Variable(d["name"], d.get("kind", "binary"), d.get("group")) for d in items))

    def subschema(self, indices: Sequence[int]) -> VariableSchema:
        """Schema over a subset of positions; partially kept groups become free bits."""
        indices = list(indices)
        kept_groups = {}
        for g, members in self.groups:
            inside = [i for i in members if i in indices]
            if len(inside) == len(members):
                kept_groups[g] = True
        out = []
        for i in indices:
            v = self.variables[i]
            group = v.group if v.group in kept_groups else None
            out.append(Variable(v.name, v.kind, group))
        return VariableSchema(tuple(out))

    # -- events ----------------------------------------------------------

    def event(self, spec: Mapping | Iterable | Event | None = None, **kwargs) -> Event:
        """Normalize an event given as ``{name_or_index: bit}`` or pairs.

        A group name may be used with a member name or 1-based level as value,
        e.g. ``{"age": "age_ge60"}`` or ``{"age": 4}``.
        """
        if isinstance(spec, Event):
            return spec
        items: list[tuple] = []
        if spec is not None:
            items.extend(spec.items() if isinstance(spec, Mapping) else spec)
        items.extend(kwargs.items())
        req: dict[int, int] = {}
        group_names = {g for g, _ in self.groups}
        for key, bit in items:
            if isinstance(key, str) and key in group_names:
                members = self.group_members(key)
                if isinstance(bit, str):
                    level = members.index(self.index(bit)) if self.index(bit) in members else None
                    if level is None:
                        raise SchemaError(f"{bit!r} is not a member of group {key!r}")
                else:
                    level = int(bit) - 1
                    if not 0 <= level < len(members):
                        raise SchemaError(f"group {key!r} level must be 1..{len(members)}")
                pairs = [(members[level], 1)]
            else:
                if bit not in (0, 1, True, False):
                    raise SchemaError(f"required bit for {key!r} must be 0 or 1, got {bit!r}")
                pairs = [(self.index(key), int(bit))]
            for idx, b in pairs:
                if req.get(idx, b) != b:
                    raise SchemaError(f"conflicting requirements for {self.names[idx]!r}")
                req[idx] = b
        return Event(tuple(sorted(req.items())))

    def describe(self, event: Event) -> str:
        if event.contradictory:
            return "<empty>"
        if not event.requirements:
            return "<all>"
        return "&".join(
            self.names[i] if b else f"!{self.names[i]}" for i, b in event.requirements
        )

    # -- packing ---------------------------------------------------------

    def pack(self, bits: np.ndarray) -> np.ndarray:
        """``(n, k)`` 0/1 matrix -> ``(n,)`` uint64 codes (no validation)."""
        bits = np.asarray(bits)
        if bits.ndim != 2 or bits.shape[1] != self.k:
            raise SchemaViolation(f"expected an (n, {self.k}) bit matrix, got shape {bits.shape}")
        codes = np.zeros(len(bits), dtype=np.uint64)
        for i in range(self.k):
            codes |= bits[:, i].astype(np.uint64) << np.uint64(self.k - 1 - i)
        return codes

    def unpack(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.uint64)
        shifts = np.arange(self.k - 1, -1, -1, dtype=np.uint64)
        return ((codes[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)

    def validate_bits(self, bits: np.ndarray) -> np.ndarray:
        """Boolean mask of rows that are binary and satisfy every one-hot group."""
        bits = np.asarray(bits)
        if bits.ndim != 2 or bits.shape[1] != self.k:
            raise SchemaViolation(f"expected an (n, {self.k}) bit matrix, got shape {bits.shape}")
        ok = np.all((bits == 0) | (bits == 1), axis=1)
        for _, members in self.groups:
            ok &= bits[:, list(members)].sum(axis=1) == 1
        return ok

    def validate_codes(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.uint64)
        ok = np.ones(len(codes), dtype=bool)
        if self.k < 64:
            ok &= (codes >> np.uint64(self.k)) == 0
        for _, members in self.groups:
            total = np.zeros(len(codes), dtype=np.int64)
            for i in members:
                total += ((codes >> np.uint64(self.k - 1 - i)) & np.uint64(1)).astype(np.int64)
            ok &= total == 1
        return ok

    def admissible_codes(self) -> np.ndarray:
        """Every admissible footprint code in increasing order (small schemas only)."""
        total = self.admissible_count()
        if total > 1 << 24:
            raise SchemaError(f"refusing to enumerate {total} outcomes")
        codes = np.array([0], dtype=np.uint64)
        handled: set[int] = set()
        for i, v in enumerate(self.variables):
            if i in handled:
                continue
            if v.group is None:
                parts = [np.uint64(0), np.uint64(1) << np.uint64(self.k - 1 - i)]
            else:
                members = self.group_members(v.group)
                handled.update(members)
                parts = [np.uint64(1) << np.uint64(self.k - 1 - j) for j in members]
            codes = (codes[:, None] | np.array(parts, dtype=np.uint64)[None, :]).ravel()
        return np.sort(codes)


@dataclass(frozen=True, order=True)
class Footprint:
    """A single record.  Equality, hashing and ordering follow the bit vector."""

    code: int
    k: int

    @classmethod
    def from_bits(cls, bits: Sequence[int] | str) -> Footprint:
        if isinstance(bits, str):
            bits = [int(c) for c in bits]
        code = 0
        for b in bits:
            if b not in (0, 1):
                raise SchemaViolation(f"footprint bits must be 0/1, got {b!r}")
            code = (code << 1) | int(b)
        return cls(code, len(bits))

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.code >> (self.k - 1 - i)) & 1 for i in range(self.k))

    def __str__(self) -> str:
        return format(self.code, f"0{self.k}b") if self.k else ""
