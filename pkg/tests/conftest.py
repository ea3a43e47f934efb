"""Shared test helpers: small spaces, synthetic targets, rng utilities."""

from __future__ import annotations

import numpy as np
import pytest

from flagtuner.flagspace import (
    BOOLEAN,
    CATEGORICAL,
    CONTINUOUS,
    INTEGER,
    Configuration,
    FlagSpace,
    FlagSpec,
)


def make_mixed_space() -> FlagSpace:
    """One flag of every kind, JVM-style names."""
    return FlagSpace(
        (
            FlagSpec("UseFooGC", BOOLEAN, (False, True), True),
            FlagSpec("FooThreads", INTEGER, (0, 10), 4),
            FlagSpec("FooRatio", CONTINUOUS, (0.0, 2.0), 0.5),
            FlagSpec("FooMode", CATEGORICAL, ("slow", "fast", "auto"), "fast"),
        )
    )


def random_config(space: FlagSpace, rng: np.random.Generator) -> Configuration:
    values = {}
    for f in space.active_flags:
        if f.kind == BOOLEAN:
            values[f.name] = bool(rng.integers(2))
        elif f.kind == INTEGER:
            values[f.name] = int(rng.integers(f.range[0], f.range[1] + 1))
        elif f.kind == CONTINUOUS:
            values[f.name] = float(rng.uniform(f.range[0], f.range[1]))
        else:
            values[f.name] = f.range[int(rng.integers(len(f.range)))]
    return Configuration(values)


def random_spaces(n: int, seed: int = 0):
    """Generator of small random spaces mixing all kinds."""
    rng = np.random.default_rng(seed)
    for i in range(n):
        flags = []
        for j in range(int(rng.integers(1, 6))):
            kind = (BOOLEAN, INTEGER, CONTINUOUS, CATEGORICAL)[int(rng.integers(4))]
            name = f"F{i}_{j}"
            if kind == BOOLEAN:
                flags.append(FlagSpec(name, kind, (False, True), bool(rng.integers(2))))
            elif kind == INTEGER:
                lo = int(rng.integers(-5, 5))
                hi = lo + int(rng.integers(0, 20))
                default = int(rng.integers(lo, hi + 1))
                flags.append(FlagSpec(name, kind, (lo, hi), default))
            elif kind == CONTINUOUS:
                lo = float(rng.uniform(-3, 3))
                hi = lo + float(rng.uniform(0.1, 5))
                flags.append(FlagSpec(name, kind, (lo, hi), float(rng.uniform(lo, hi))))
            else:
                k = int(rng.integers(1, 5))
                values = tuple(f"v{m}" for m in range(k))
                flags.append(FlagSpec(name, kind, values, values[int(rng.integers(k))]))
        yield FlagSpace(tuple(flags)), rng
