"""The whole flow as the command line drives it: one project file, four
subcommands, a directory of artifacts.

`datagen` characterizes the target and writes the labeled dataset plus the
regression model; `select` narrows the flag space; `tune` searches the
subspace with a chosen algorithm; `report` tabulates every tuning run found
in the output directory.  Everything is seeded through the project file, so
rerunning a stage reproduces its artifacts byte for byte.
"""

import os
import tempfile

import yaml

from flagtuner.cli import main
from flagtuner.flagspace import FlagSpec, FlagSpace, save_flag_file

space = FlagSpace((
    FlagSpec("UseFooGC", "boolean", (False, True), True),
    FlagSpec("FooThreads", "integer", (0, 12), 6),
    FlagSpec("FooRatio", "continuous", (0.0, 2.0), 0.5),
    FlagSpec("FooMode", "categorical", ("slow", "fast", "auto"), "fast"),
))

tmp = tempfile.mkdtemp(prefix="flagtuner-demo-")
save_flag_file(space, os.path.join(tmp, "space.yaml"))

project = {
    "seed": 7,
    "metric": "value",
    "direction": "min",
    "out_dir": "runs",
    "flag_space": {"file": "space.yaml"},
    # A virtual target keeps the demo self-contained; a real project would
    # use kind "command" with argv, probes and repeat counts instead.
    "target": {
        "kind": "virtual",
        "relevant_dims": [1, 2],
        "centers": [0.7, 0.3],
        "weights": [2.5, 1.5],
        "noise_sd": 0.01,
    },
    "active_learning": {
        "candidates": 200,
        "seed_fraction": 0.1,
        "test_fraction": 0.15,
        "batch_fraction": 0.1,
        "max_rounds": 3,
        "rel_rmse_eps": 0.0,
        "ensemble": 2,
        "sgd": {"learning_rate": 0.1, "epochs": 4000, "batch_size": 1024},
    },
    "selection": {"lambda": 0.001},
    "tuning": {"budget": 8, "init_size": 4, "gp_restarts": 2,
               "acq_candidates": 128, "confirm_runs": 2},
}
project_path = os.path.join(tmp, "project.yaml")
with open(project_path, "w", encoding="utf-8") as fh:
    yaml.safe_dump(project, fh)

for argv in (
    ["datagen", "--project", project_path],
    ["select", "--project", project_path],
    ["tune", "--project", project_path, "--algorithm", "bo-warm"],
    ["tune", "--project", project_path, "--algorithm", "rbo"],
    ["report", "--project", project_path],
):
    print(f"\n$ flagtuner {' '.join(argv)}")
    code = main(argv)
    assert code == 0, f"exit code {code}"

out_dir = os.path.join(tmp, "runs")
print("\nartifacts:")
for name in sorted(os.listdir(out_dir)):
    size = os.path.getsize(os.path.join(out_dir, name))
    print(f"  {name:<24} {size:>6} bytes")

print("\nreport.txt:")
with open(os.path.join(out_dir, "report.txt"), encoding="utf-8") as fh:
    print(fh.read())
print(f"(everything under {tmp})")
