"""Tunable flag spaces: definitions, dump parsing, encoding, CLI rendering.

A :class:`FlagSpace` is an ordered collection of typed flags.  Every active
flag maps to one coordinate of the unit hypercube, which is the space all
samplers, surrogates and tuners operate in; :meth:`FlagSpace.decode` maps a
point of the cube back to concrete flag values and
:meth:`FlagSpace.render_cli_args` turns a configuration into command-line
arguments for the target process.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

BOOLEAN = "boolean"
INTEGER = "integer"
CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

KINDS = (BOOLEAN, INTEGER, CONTINUOUS, CATEGORICAL)

# Dump value types -> flag kinds.  String-valued flags are not tunable and
# are skipped silently.
_DUMP_KINDS = {
    "bool": BOOLEAN,
    "intx": INTEGER,
    "uintx": INTEGER,
    "uint64_t": INTEGER,
    "double": CONTINUOUS,
}
_STRING_DUMP_TYPES = {"ccstr", "ccstrlist"}
# Representable bounds per integer dump type; derived ranges are clamped here.
_INT_TYPE_BOUNDS = {
    "intx": (-(2**63), 2**63 - 1),
    "uintx": (0, 2**64 - 1),
    "uint64_t": (0, 2**64 - 1),
}

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


def _format_value(value: Any) -> str:
    """Render a flag value for CLI args and files (ints without a point)."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass(frozen=True)
class FlagSpec:
    """One tunable flag: name, kind, admissible range and default.

    ``range`` holds ``(lo, hi)`` for numeric kinds, ``(False, True)`` for
    booleans, and the ordered tuple of admissible values for categoricals.
    ``group`` ties the flag to a mode (e.g. a garbage collector) so that
    spaces can be restricted to the groups that are actually in effect;
    ``group=None`` means the flag is always active.
    """

    name: str
    kind: str
    range: tuple
    default: Any
    group: str | None = None
    render_style: str = "jvm"

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ValueError(f"invalid flag name: {self.name!r}")
        if self.kind not in KINDS:
            raise ValueError(f"flag {self.name}: unknown kind {self.kind!r}")
        if self.render_style not in ("jvm", "assign"):
            raise ValueError(
                f"flag {self.name}: unknown render_style {self.render_style!r}"
            )
        rng = tuple(self.range)
        object.__setattr__(self, "range", rng)
        if self.kind == BOOLEAN:
            if rng != (False, True):
                raise ValueError(f"flag {self.name}: boolean range must be (False, True)")
            if not isinstance(self.default, bool):
                raise ValueError(f"flag {self.name}: boolean default must be bool")
        elif self.kind == INTEGER:
            lo, hi = rng
            if not (isinstance(lo, int) and isinstance(hi, int)) or isinstance(lo, bool) or isinstance(hi, bool):
                raise ValueError(f"flag {self.name}: integer bounds must be ints")
            if lo > hi:
                raise ValueError(f"flag {self.name}: empty range [{lo}, {hi}]")
            if not (lo <= self.default <= hi):
                raise ValueError(f"flag {self.name}: default {self.default} outside [{lo}, {hi}]")
        elif self.kind == CONTINUOUS:
            lo, hi = (float(rng[0]), float(rng[1]))
            object.__setattr__(self, "range", (lo, hi))
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"flag {self.name}: non-finite bounds")
            if lo >= hi:
                raise ValueError(f"flag {self.name}: empty range [{lo}, {hi}]")
            if not (lo <= float(self.default) <= hi):
                raise ValueError(f"flag {self.name}: default {self.default} outside [{lo}, {hi}]")
            object.__setattr__(self, "default", float(self.default))
        else:  # categorical
            if len(rng) == 0:
                raise ValueError(f"flag {self.name}: categorical needs at least one value")
            if len(set(rng)) != len(rng):
                raise ValueError(f"flag {self.name}: duplicate categorical values")
            if self.default not in rng:
                raise ValueError(f"flag {self.name}: default {self.default!r} not among values")

    # --- unit-interval coordinate <-> value -------------------------------

    def encode_value(self, value: Any) -> float:
        if self.kind == BOOLEAN:
            if not isinstance(value, (bool, np.bool_)):
                raise ValueError(f"flag {self.name}: expected bool, got {value!r}")
            return 1.0 if value else 0.0
        if self.kind == CATEGORICAL:
            try:
                idx = self.range.index(value)
            except ValueError:
                raise ValueError(f"flag {self.name}: value {value!r} not among {self.range}") from None
            return idx / (len(self.range) - 1) if len(self.range) > 1 else 0.0
        lo, hi = self.range
        v = float(value)
        if not (lo <= v <= hi):
            raise ValueError(f"flag {self.name}: value {value!r} outside [{lo}, {hi}]")
        if self.kind == INTEGER and int(value) != v:
            raise ValueError(f"flag {self.name}: expected integer, got {value!r}")
        return 0.0 if hi == lo else (v - lo) / (hi - lo)

    def decode_component(self, t: float) -> Any:
        if not (0.0 <= t <= 1.0):
            raise ValueError(f"flag {self.name}: component {t!r} outside [0, 1]")
        if self.kind == BOOLEAN:
            return bool(t >= 0.5)
        if self.kind == CATEGORICAL:
            idx = int(math.floor(t * (len(self.range) - 1) + 0.5))
            return self.range[min(idx, len(self.range) - 1)]
        lo, hi = self.range
        if self.kind == INTEGER:
            v = lo + int(math.floor(t * (hi - lo) + 0.5))
            return min(max(v, lo), hi)
        return lo + t * (hi - lo)

    def render(self, value: Any) -> str:
        """Render one ``name=value`` CLI token for this flag."""
        if self.render_style == "assign":
            return f"--{self.name}={_format_value(value)}"
        if self.kind == BOOLEAN:
            return f"-XX:{'+' if value else '-'}{self.name}"
        return f"-XX:{self.name}={_format_value(value)}"

    def parse_value_text(self, text: str) -> Any:
        """Inverse of :func:`_format_value` for this flag's kind."""
        if self.kind == BOOLEAN:
            if text not in ("true", "false"):
                raise ValueError(f"flag {self.name}: expected true/false, got {text!r}")
            return text == "true"
        if self.kind == INTEGER:
            return int(text)
        if self.kind == CONTINUOUS:
            return float(text)
        for v in self.range:
            if _format_value(v) == text:
                return v
        raise ValueError(f"flag {self.name}: value {text!r} not among {self.range}")


@dataclass(frozen=True)
class Configuration:
    """A full assignment of values to the active flags of a space."""

    assignments: Mapping[str, Any]

    def __getitem__(self, name: str) -> Any:
        return self.assignments[name]

    def __contains__(self, name: str) -> bool:
        return name in self.assignments

    def items(self):
        return self.assignments.items()

    def replaced(self, **updates: Any) -> "Configuration":
        merged = dict(self.assignments)
        merged.update(updates)
        return Configuration(merged)


@dataclass(frozen=True)
class FlagSpace:
    """An ordered set of flags plus the groups currently in effect.

    ``active_groups=None`` activates every flag; otherwise a flag is active
    when its group is ``None`` or a member of ``active_groups``.  All
    encode/decode/render operations see only the active flags, in their
    definition order.
    """

    flags: tuple[FlagSpec, ...]
    active_groups: frozenset[str] | None = None
    parse_warnings: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "flags", tuple(self.flags))
        names = [f.name for f in self.flags]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise ValueError(f"duplicate flag name: {dup}")
        if self.active_groups is not None:
            object.__setattr__(self, "active_groups", frozenset(self.active_groups))
        if not self.active_flags:
            raise ValueError("flag space has no active flags")

    # --- structure ---------------------------------------------------------

    @property
    def active_flags(self) -> tuple[FlagSpec, ...]:
        if self.active_groups is None:
            return self.flags
        return tuple(
            f for f in self.flags if f.group is None or f.group in self.active_groups
        )

    @property
    def dimension(self) -> int:
        return len(self.active_flags)

    def flag(self, name: str) -> FlagSpec:
        for f in self.flags:
            if f.name == name:
                return f
        raise KeyError(name)

    def subset(self, names: Sequence[str]) -> "FlagSpace":
        """Restrict to the named flags (kept in this space's order)."""
        wanted = set(names)
        unknown = wanted - {f.name for f in self.active_flags}
        if unknown:
            raise ValueError(f"unknown or inactive flags: {sorted(unknown)}")
        kept = tuple(f for f in self.active_flags if f.name in wanted)
        return FlagSpace(kept, active_groups=None)

    def override(self, name: str, **fields: Any) -> "FlagSpace":
        """Return a space with one flag's fields replaced (range, default, ...)."""
        if "range" in fields:
            fields["range"] = tuple(fields["range"])
        new = tuple(
            replace(f, **fields) if f.name == name else f for f in self.flags
        )
        if all(f.name != name for f in self.flags):
            raise KeyError(name)
        return FlagSpace(new, active_groups=self.active_groups,
                         parse_warnings=self.parse_warnings)

    def default_configuration(self) -> Configuration:
        return Configuration({f.name: f.default for f in self.active_flags})

    # --- configurations ----------------------------------------------------

    def validate(self, config: Configuration) -> None:
        """Check that exactly the active flags are assigned, values in range."""
        active = {f.name for f in self.active_flags}
        assigned = set(config.assignments)
        missing = active - assigned
        if missing:
            raise ValueError(f"configuration missing flags: {sorted(missing)}")
        extra = assigned - active
        if extra:
            raise ValueError(f"configuration has unknown flags: {sorted(extra)}")
        for f in self.active_flags:
            f.encode_value(config[f.name])  # raises if out of range

    def encode(self, config: Configuration) -> np.ndarray:
        """Map a configuration to a point of the unit hypercube."""
        self.validate(config)
        return np.array(
            [f.encode_value(config[f.name]) for f in self.active_flags], dtype=float
        )

    def decode(self, vector: np.ndarray) -> Configuration:
        """Map a unit-hypercube point to a configuration (nearest value)."""
        vec = np.asarray(vector, dtype=float).ravel()
        if vec.shape[0] != self.dimension:
            raise ValueError(
                f"expected vector of length {self.dimension}, got {vec.shape[0]}"
            )
        return Configuration(
            {f.name: f.decode_component(float(t)) for f, t in zip(self.active_flags, vec)}
        )

    def render_cli_args(self, config: Configuration) -> list[str]:
        """Render one CLI token per active flag, in space order."""
        self.validate(config)
        return [f.render(config[f.name]) for f in self.active_flags]


# --- flag dump parsing ------------------------------------------------------


def parse_flag_dump(
    text: str,
    group_rules: Mapping[str, str] | None = None,
    active_groups: Iterable[str] | None = None,
) -> FlagSpace:
    """Build a FlagSpace from a runtime flag dump (``-XX:+PrintFlagsFinal``).

    Each parseable line looks like ``<type> <name>  = <value>  {category}``
    (``:=`` marks values changed from the built-in default).  Tunable ranges
    are derived from the dumped value ``d``: ``[0, 2d]`` for ``d > 0``,
    ``[0, 1]`` for ``d == 0`` and ``[2d, 0]`` for ``d < 0``, clamped to what
    the value type can represent.  String flags are skipped; any other
    unparseable line is skipped and counted in ``parse_warnings``.

    ``group_rules`` maps regex patterns to group names; the first pattern
    that matches a flag's name assigns its group, otherwise ``"common"``.
    """
    rules = list((group_rules or {}).items())
    flags: list[FlagSpec] = []
    seen: set[str] = set()
    warnings = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] in _STRING_DUMP_TYPES:
            continue
        spec = _parse_dump_line(parts, rules)
        if spec is None:
            warnings += 1
            continue
        if spec.name in seen:
            warnings += 1
            continue
        seen.add(spec.name)
        flags.append(spec)
    if not flags:
        raise ValueError("no flags parsed from dump")
    groups = frozenset(active_groups) if active_groups is not None else None
    return FlagSpace(tuple(flags), active_groups=groups, parse_warnings=warnings)


def _parse_dump_line(parts: list[str], rules: list[tuple[str, str]]) -> FlagSpec | None:
    # <type> <name> =|:= <value> {category...}
    if len(parts) < 5 or parts[0] not in _DUMP_KINDS:
        return None
    dump_type, name, sep, value = parts[0], parts[1], parts[2], parts[3]
    if sep not in ("=", ":=") or not parts[4].startswith("{") or not parts[-1].endswith("}"):
        return None
    kind = _DUMP_KINDS[dump_type]
    try:
        if kind == BOOLEAN:
            if value not in ("true", "false"):
                return None
            default: Any = value == "true"
            rng: tuple = (False, True)
        elif kind == INTEGER:
            default = int(value)
            rng = _derived_int_range(default, _INT_TYPE_BOUNDS[dump_type])
        else:
            default = float(value)
            rng = _derived_float_range(default)
        group = _match_group(name, rules)
        return FlagSpec(name=name, kind=kind, range=rng, default=default, group=group)
    except ValueError:
        return None


def _derived_int_range(default: int, type_bounds: tuple[int, int]) -> tuple[int, int]:
    tlo, thi = type_bounds
    if default > 0:
        lo, hi = 0, min(2 * default, thi)
    elif default == 0:
        lo, hi = 0, 1
    else:
        lo, hi = max(2 * default, tlo), 0
    return (lo, hi)


def _derived_float_range(default: float) -> tuple[float, float]:
    if default > 0:
        return (0.0, 2.0 * default)
    if default == 0:
        return (0.0, 1.0)
    return (2.0 * default, 0.0)


def _match_group(name: str, rules: list[tuple[str, str]]) -> str:
    for pattern, group in rules:
        if re.search(pattern, name):
            return group
    return "common"


def format_flag_dump(space: FlagSpace) -> str:
    """Serialize a space back to dump format (inverse of parse for its image)."""
    lines = []
    for f in space.flags:
        if f.kind == BOOLEAN:
            dump_type = "bool"
        elif f.kind == INTEGER:
            dump_type = "uintx" if f.range[0] >= 0 else "intx"
        elif f.kind == CONTINUOUS:
            dump_type = "double"
        else:
            raise ValueError(f"flag {f.name}: categorical flags have no dump form")
        lines.append(
            f"{dump_type} {f.name} = {_format_value(f.default)} {{{f.group or 'common'}}}"
        )
    return "\n".join(lines) + "\n"


# --- declarative flag-space files -------------------------------------------


def load_flag_file(path: str) -> FlagSpace:
    """Load a declarative YAML flag-space file.

    Structure::

        active_groups: [common, G1GC]     # optional
        flags:
          - name: MaxGCPauseMillis
            kind: integer
            range: [0, 400]
            default: 200
            group: G1GC                    # optional
            render_style: jvm              # optional
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "flags" not in doc:
        raise ValueError(f"{path}: expected a mapping with a 'flags' list")
    flags = []
    for entry in doc["flags"]:
        flags.append(_flag_from_mapping(entry, path))
    groups = doc.get("active_groups")
    return FlagSpace(
        tuple(flags),
        active_groups=frozenset(groups) if groups is not None else None,
    )


def _flag_from_mapping(entry: Mapping[str, Any], origin: str) -> FlagSpec:
    if not isinstance(entry, Mapping) or "name" not in entry or "kind" not in entry:
        raise ValueError(f"{origin}: each flag needs at least 'name' and 'kind'")
    kind = entry["kind"]
    if kind == BOOLEAN:
        rng: tuple = (False, True)
        default = entry.get("default", False)
    else:
        if "range" not in entry or "default" not in entry:
            raise ValueError(
                f"{origin}: flag {entry['name']}: 'range' and 'default' required"
            )
        rng = tuple(entry["range"])
        default = entry["default"]
    return FlagSpec(
        name=entry["name"],
        kind=kind,
        range=rng,
        default=default,
        group=entry.get("group"),
        render_style=entry.get("render_style", "jvm"),
    )


def save_flag_file(space: FlagSpace, path: str) -> None:
    """Write a space as a declarative YAML file (inverse of load_flag_file)."""
    doc: dict[str, Any] = {}
    if space.active_groups is not None:
        doc["active_groups"] = sorted(space.active_groups)
    entries = []
    for f in space.flags:
        e: dict[str, Any] = {"name": f.name, "kind": f.kind}
        if f.kind != BOOLEAN:
            e["range"] = list(f.range)
        e["default"] = f.default
        if f.group is not None:
            e["group"] = f.group
        if f.render_style != "jvm":
            e["render_style"] = f.render_style
        entries.append(e)
    doc["flags"] = entries
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def unit_space(dim: int, prefix: str = "x") -> FlagSpace:
    """A d-dimensional space of continuous [0, 1] flags (for virtual targets)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    flags = tuple(
        FlagSpec(name=f"{prefix}{i}", kind=CONTINUOUS, range=(0.0, 1.0), default=0.5,
                 render_style="assign")
        for i in range(dim)
    )
    return FlagSpace(flags)
