"""Running trials against real or synthetic targets and measuring them.

A trial is one measurement of a configuration: launch the target with the
rendered flag arguments, time it, optionally sample its heap occupancy with
``jstat -gc``, and return a :class:`TrialRecord`.  :class:`VirtualTarget`
provides a deterministic synthetic objective with the same interface so the
whole pipeline can run without a real process.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .flagspace import Configuration, FlagSpace

STATUS_OK = "ok"
STATUS_TIMEOUT = "timeout"
STATUS_CRASHED = "crashed"

PROBE_TIME = "time"
PROBE_HEAP = "heap"
_KNOWN_PROBES = (PROBE_TIME, PROBE_HEAP)

# jstat -gc column sets: utilization and capacity of the young + old regions.
_HEAP_UTIL_COLS = ("S0U", "S1U", "EU", "OU")
_HEAP_CAP_COLS = ("S0C", "S1C", "EC", "OC")


class TargetNotFoundError(RuntimeError):
    """The target binary (or jstat) could not be launched at all."""


@dataclass(frozen=True)
class HeapSample:
    """One ``jstat -gc`` row reduced to region capacities/utilizations (KB)."""

    s0c: float
    s1c: float
    ec: float
    oc: float
    s0u: float
    s1u: float
    eu: float
    ou: float

    def __post_init__(self) -> None:
        caps = (self.s0c, self.s1c, self.ec, self.oc)
        utils = (self.s0u, self.s1u, self.eu, self.ou)
        if any(c < 0 for c in caps) or any(u < 0 for u in utils):
            raise ValueError("negative jstat column")
        if sum(caps) <= 0:
            raise ValueError("zero total heap capacity")
        for cap, util, name in zip(caps, utils, ("S0", "S1", "E", "O")):
            if util > cap * (1 + 1e-9):
                raise ValueError(f"{name}U exceeds {name}C")


def heap_usage(sample: HeapSample) -> float:
    """Percent of committed heap in use: sum(used)/sum(capacity) * 100."""
    used = sample.s0u + sample.s1u + sample.eu + sample.ou
    cap = sample.s0c + sample.s1c + sample.ec + sample.oc
    return used / cap * 100.0


def aggregate_heap(samples: Sequence[HeapSample]) -> float:
    """Mean heap usage percentage over a trial's samples."""
    if not samples:
        raise ValueError("no heap samples to aggregate")
    return float(np.mean([heap_usage(s) for s in samples]))


def parse_jstat_stream(text: str) -> tuple[list[HeapSample], int]:
    """Parse ``jstat -gc`` output (header row + numeric rows).

    Columns are located by header name, so column order and extra columns
    don't matter.  Returns the samples plus the count of rows that could not
    be parsed (those are skipped).  A header missing a required column is an
    error naming that column.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return [], 0
    header = lines[0].split()
    index: dict[str, int] = {}
    for col in _HEAP_UTIL_COLS + _HEAP_CAP_COLS:
        if col not in header:
            raise ValueError(f"jstat header missing column {col}")
        index[col] = header.index(col)
    samples: list[HeapSample] = []
    skipped = 0
    for row in lines[1:]:
        parts = row.split()
        try:
            vals = {col: float(parts[i]) for col, i in index.items()}
            samples.append(
                HeapSample(
                    s0c=vals["S0C"], s1c=vals["S1C"], ec=vals["EC"], oc=vals["OC"],
                    s0u=vals["S0U"], s1u=vals["S1U"], eu=vals["EU"], ou=vals["OU"],
                )
            )
        except (ValueError, IndexError):
            skipped += 1
    return samples, skipped


# --- trial records and targets ----------------------------------------------


@dataclass(frozen=True)
class TargetSpec:
    """How to launch and measure one target process.

    ``command_template`` is the argv list with exactly one ``"{flags}"``
    placeholder element; rendered flag arguments are spliced in its place.
    ``probes`` selects the metrics to collect (``time`` and/or ``heap``).
    """

    command_template: tuple[str, ...]
    timeout: float = 300.0
    repeat: int = 1
    probes: tuple[str, ...] = (PROBE_TIME,)
    working_dir: str | None = None
    env: Mapping[str, str] = field(default_factory=dict)
    heap_cadence_s: float = 1.0
    jstat_cmd: str = "jstat"

    def __post_init__(self) -> None:
        object.__setattr__(self, "command_template", tuple(self.command_template))
        object.__setattr__(self, "probes", tuple(self.probes))
        n_slots = sum(1 for a in self.command_template if a == "{flags}")
        if n_slots != 1:
            raise ValueError("command_template needs exactly one '{flags}' element")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.repeat < 1:
            raise ValueError("repeat must be >= 1")
        unknown = [p for p in self.probes if p not in _KNOWN_PROBES]
        if unknown:
            raise ValueError(f"unknown probes: {unknown}")
        if not self.probes:
            raise ValueError("at least one probe required")


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one trial: metrics by probe name plus status bookkeeping."""

    config: Configuration
    metrics: Mapping[str, float]
    status: str
    wall_clock_s: float
    timestamp: float
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": dict(self.config.assignments),
            "metrics": dict(self.metrics),
            "status": self.status,
            "wall_clock_s": self.wall_clock_s,
            "timestamp": self.timestamp,
            "note": self.note,
        }


class TrialLog:
    """Append-only JSON-lines audit log of every trial executed."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def append(self, record: TrialRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    @staticmethod
    def read(path: str) -> list[dict[str, Any]]:
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entries.append(json.loads(line))
        return entries


class TrialExecutor:
    """Interface: execute one configuration and return its TrialRecord."""

    def run(self, space: FlagSpace, config: Configuration, seed: int = 0) -> TrialRecord:
        raise NotImplementedError


class CommandExecutor(TrialExecutor):
    """Runs real processes, one trial at a time per target."""

    def __init__(self, target: TargetSpec, log: TrialLog | None = None):
        self.target = target
        self.log = log
        self._lock = threading.Lock()

    def run(self, space: FlagSpace, config: Configuration, seed: int = 0) -> TrialRecord:
        space.validate(config)
        argv = self._argv(space, config)
        with self._lock:
            record = self._run_repeats(argv, config)
        if self.log is not None:
            self.log.append(record)
        return record

    def _argv(self, space: FlagSpace, config: Configuration) -> list[str]:
        rendered = space.render_cli_args(config)
        argv: list[str] = []
        for part in self.target.command_template:
            if part == "{flags}":
                argv.extend(rendered)
            else:
                argv.append(part)
        return argv

    def _run_repeats(self, argv: list[str], config: Configuration) -> TrialRecord:
        t = self.target
        walls: list[float] = []
        heaps: list[float] = []
        note = ""
        for _ in range(t.repeat):
            outcome = self._run_once(argv)
            if outcome["status"] == STATUS_TIMEOUT:
                return TrialRecord(config, {}, STATUS_TIMEOUT, t.timeout,
                                   time.time(), note=outcome["note"])
            if outcome["status"] == STATUS_CRASHED:
                return TrialRecord(config, {}, STATUS_CRASHED, outcome["wall"],
                                   time.time(), note=outcome["note"])
            walls.append(outcome["wall"])
            if PROBE_HEAP in t.probes:
                if outcome["heap"] is None:
                    return TrialRecord(config, {}, STATUS_CRASHED, outcome["wall"],
                                       time.time(), note=outcome["note"])
                heaps.append(outcome["heap"])
            note = outcome["note"] or note
        metrics: dict[str, float] = {}
        if PROBE_TIME in t.probes:
            metrics[PROBE_TIME] = float(np.mean(walls))
        if PROBE_HEAP in t.probes:
            metrics[PROBE_HEAP] = float(np.mean(heaps))
        return TrialRecord(config, metrics, STATUS_OK, float(np.mean(walls)),
                           time.time(), note=note)

    def _run_once(self, argv: list[str]) -> dict[str, Any]:
        t = self.target
        env = dict(os.environ)
        env.update(t.env)
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                argv, cwd=t.working_dir, env=env,
                stdout=subprocess.PIPE, stderr=subprocess.PIPE,
            )
        except FileNotFoundError as exc:
            raise TargetNotFoundError(f"target not found: {argv[0]}") from exc
        probe = None
        probe_note = ""
        if PROBE_HEAP in t.probes:
            cadence_ms = max(1, int(t.heap_cadence_s * 1000))
            try:
                probe = subprocess.Popen(
                    [t.jstat_cmd, "-gc", str(proc.pid), str(cadence_ms)],
                    stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True,
                )
            except FileNotFoundError:
                probe_note = f"heap probe unavailable: {t.jstat_cmd} not found"
        try:
            _, err = proc.communicate(timeout=t.timeout)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
            self._stop_probe(probe)
            return {"status": STATUS_TIMEOUT, "wall": t.timeout, "heap": None,
                    "note": f"timed out after {t.timeout}s"}
        wall = time.monotonic() - start
        jstat_text = self._stop_probe(probe)
        if proc.returncode != 0:
            tail = (err or b"").decode("utf-8", "replace").strip()[-200:]
            return {"status": STATUS_CRASHED, "wall": wall, "heap": None,
                    "note": f"exit status {proc.returncode}: {tail}"}
        heap = None
        if PROBE_HEAP in t.probes:
            if probe is None:
                return {"status": STATUS_OK, "wall": wall, "heap": None,
                        "note": probe_note}
            samples, skipped = parse_jstat_stream(jstat_text)
            if samples:
                heap = aggregate_heap(samples)
                if skipped:
                    probe_note = f"skipped {skipped} unparseable jstat rows"
            else:
                probe_note = "heap probe produced no samples"
        return {"status": STATUS_OK, "wall": wall, "heap": heap, "note": probe_note}

    @staticmethod
    def _stop_probe(probe: subprocess.Popen | None) -> str:
        if probe is None:
            return ""
        probe.terminate()
        try:
            out, _ = probe.communicate(timeout=10)
        except subprocess.TimeoutExpired:
            probe.kill()
            out, _ = probe.communicate()
        return out or ""


def run_trial(
    target: TargetSpec,
    space: FlagSpace,
    config: Configuration,
    seed: int = 0,
    log: TrialLog | None = None,
) -> TrialRecord:
    """One-shot convenience wrapper around CommandExecutor."""
    return CommandExecutor(target, log=log).run(space, config, seed)


# --- synthetic targets --------------------------------------------------------


@dataclass(frozen=True)
class VirtualTarget:
    """Deterministic synthetic objective on the unit hypercube.

    ``value(x) = base + sum_{i in relevant_dims} weights[i] * (x[i] - centers[i])^2``
    plus Gaussian noise of scale ``noise_sd`` derived deterministically from
    ``(seed, x)``, so repeated evaluation of the same point with the same seed
    returns the same value.
    """

    dim: int
    relevant_dims: tuple[int, ...] = ()
    centers: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    noise_sd: float = 0.0
    base: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "relevant_dims", tuple(self.relevant_dims))
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if len(self.relevant_dims) > self.dim:
            raise ValueError("more relevant dims than dimensions")
        if any(not (0 <= i < self.dim) for i in self.relevant_dims):
            raise ValueError("relevant dim index out of range")
        if len(set(self.relevant_dims)) != len(self.relevant_dims):
            raise ValueError("duplicate relevant dims")
        if not (len(self.relevant_dims) == len(self.centers) == len(self.weights)):
            raise ValueError("relevant_dims, centers, weights must align")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    @property
    def minimum_value(self) -> float:
        """The noise-free global minimum (attained at the centers)."""
        return self.base

    def minimizer(self) -> np.ndarray:
        x = np.full(self.dim, 0.5)
        for i, c in zip(self.relevant_dims, self.centers):
            x[i] = c
        return x


def synthetic_eval(target: VirtualTarget, x: np.ndarray, seed: int = 0) -> float:
    """Evaluate a VirtualTarget at an encoded point, with deterministic noise."""
    vec = np.asarray(x, dtype=float).ravel()
    if vec.shape[0] != target.dim:
        raise ValueError(f"expected point of dimension {target.dim}, got {vec.shape[0]}")
    value = target.base
    for i, c, w in zip(target.relevant_dims, target.centers, target.weights):
        value += w * (vec[i] - c) ** 2
    if target.noise_sd > 0:
        digest = hashlib.blake2b(
            vec.tobytes(), digest_size=8,
            key=int(seed).to_bytes(8, "little", signed=True),
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        value += rng.normal(0.0, target.noise_sd)
    return float(value)


class VirtualExecutor(TrialExecutor):
    """TrialExecutor over a VirtualTarget (zero wall-clock cost).

    When ``full_space`` is given and a trial arrives on a smaller space (a
    selected-flag subspace), the configuration is completed with the full
    space's defaults before encoding, mirroring a real process where omitted
    flags keep their default values.
    """

    def __init__(
        self,
        target: VirtualTarget,
        metric: str = "value",
        log: TrialLog | None = None,
        full_space: FlagSpace | None = None,
    ):
        self.target = target
        self.metric = metric
        self.log = log
        self.full_space = full_space

    def run(self, space: FlagSpace, config: Configuration, seed: int = 0) -> TrialRecord:
        space.validate(config)
        if self.full_space is not None and space.dimension != self.full_space.dimension:
            full_config = self.full_space.default_configuration().replaced(
                **dict(config.items())
            )
            x = self.full_space.encode(full_config)
        else:
            x = space.encode(config)
        value = synthetic_eval(self.target, x, seed=seed)
        record = TrialRecord(
            config=config, metrics={self.metric: value}, status=STATUS_OK,
            wall_clock_s=0.0, timestamp=time.time(),
        )
        if self.log is not None:
            self.log.append(record)
        return record
