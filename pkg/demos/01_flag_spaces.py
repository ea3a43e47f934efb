"""Defining flag spaces: by hand, from a runtime dump, and on disk.

A FlagSpace is the search domain every other stage works over.  Flags can be
booleans, integers, continuous values, or categoricals; each one carries its
admissible range and the stock default.  Spaces encode configurations into
[0, 1]^d vectors for the numeric machinery and decode/render them back for
actually launching a program.
"""

import os
import tempfile

from flagtuner.flagspace import (
    FlagSpec,
    FlagSpace,
    load_flag_file,
    parse_flag_dump,
    save_flag_file,
)

# --- 1. a small space written out by hand -----------------------------------

space = FlagSpace((
    FlagSpec("UseParallelGC", "boolean", (False, True), True, group="parallel"),
    FlagSpec("UseG1GC", "boolean", (False, True), False, group="g1"),
    FlagSpec("ParallelGCThreads", "integer", (0, 16), 8, group="parallel"),
    FlagSpec("MaxGCPauseMillis", "integer", (50, 2000), 200),
    FlagSpec("SurvivorRatio", "continuous", (1.0, 16.0), 8.0),
    FlagSpec("TieredCompilation", "categorical", ("on", "off", "auto"), "auto"),
))

print(f"{len(space.flags)} flags, dimension {space.dimension}")

config = space.default_configuration()
vec = space.encode(config)
print("default encodes to:", vec.round(3).tolist())
print("decodes back to:   ", dict(space.decode(vec).items()))
print("rendered CLI args: ", space.render_cli_args(config))

# Restricting to the groups that are actually in effect: with only the
# "parallel" collector active, the G1-specific flag drops out of the domain.
parallel_only = FlagSpace(space.flags, active_groups=frozenset({"parallel"}))
print("\nactive under 'parallel':",
      [f.name for f in parallel_only.active_flags])

# --- 2. the same thing from a -XX:+PrintFlagsFinal style dump ----------------

dump = """
     bool UseParallelGC                  := true      {product}
     bool UseG1GC                         = false     {product}
    uintx ParallelGCThreads               = 8         {product}
    uintx MaxGCPauseMillis                = 200       {product}
   double SurvivorRatio                   = 8.0       {product}
    ccstr HeapDumpPath                    =           {manageable}
     bool SomeBrokenLine
"""
parsed = parse_flag_dump(
    dump,
    group_rules={r"^UseParallel|^ParallelGC": "parallel", r"^UseG1": "g1"},
)
print("\nparsed from dump:")
for flag in parsed.flags:
    print(f"  {flag.name:<20} {flag.kind:<11} range={flag.range}"
          f" default={flag.default} group={flag.group}")
print(f"(skipped {parsed.parse_warnings} unparseable line(s);"
      " string flags are ignored)")

# --- 3. round-tripping through a YAML file -----------------------------------

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "space.yaml")
    save_flag_file(space, path)
    again = load_flag_file(path)
    assert again == space
    print(f"\nsaved and reloaded {len(again.flags)} flags unchanged")
