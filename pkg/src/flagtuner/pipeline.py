"""The four-phase tuning pipeline and its on-disk artifacts.

Phases: ``datagen`` (characterize the target by active learning and save the
labeled dataset + regression model), ``select`` (lasso-pick the flags that
matter), ``tune`` (search the selected subspace with a chosen algorithm) and
``report`` (compare tuning runs).  Each phase reads only files written by
earlier phases, so phases can be rerun independently; given the same project
file and seed, each phase writes byte-identical artifacts (the JSONL trial
log is an append-only audit trail with timestamps and is exempt).
"""

from __future__ import annotations

import csv
import glob
import io
import json
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from . import featsel
from .active_learning import AlBudget, AlResult, run_al_loop
from .executor import (
    CommandExecutor,
    TargetNotFoundError,
    TargetSpec,
    TrialExecutor,
    TrialLog,
    VirtualExecutor,
    VirtualTarget,
)
from .flagspace import (
    Configuration,
    FlagSpace,
    load_flag_file,
    parse_flag_dump,
    _format_value,
)
from .linreg import FeatureMap, SgdHyper, load_model, save_model
from .surrogate import MATERN52
from .tuners import (
    ALGORITHMS,
    TuneTask,
    TuningReport,
    tune_bo,
    tune_bo_warm,
    tune_rbo,
    tune_sa,
)

_FLOAT_FMT = "%.12g"


class PipelineError(Exception):
    """Base of the phase errors; carries the exit-status taxonomy."""

    kind = "error"
    exit_code = 1


class UsageError(PipelineError):
    kind = "usage"
    exit_code = 1


class TargetError(PipelineError):
    kind = "target"
    exit_code = 2


class DependencyError(PipelineError):
    kind = "dependency"
    exit_code = 3


# --- project configuration -----------------------------------------------------


@dataclass
class ProjectConfig:
    """A fully resolved project: space, target, per-phase settings."""

    seed: int
    metric: str
    direction: str
    out_dir: str
    space: FlagSpace
    target_kind: str  # "command" | "virtual"
    target_spec: TargetSpec | None
    virtual_target: VirtualTarget | None
    al: Mapping[str, Any] = field(default_factory=dict)
    selection: Mapping[str, Any] = field(default_factory=dict)
    tuning: Mapping[str, Any] = field(default_factory=dict)


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _require(doc: Mapping[str, Any], key: str, origin: str) -> Any:
    if key not in doc:
        raise UsageError(f"{origin}: missing required key {key!r}")
    return doc[key]


def load_project(
    path: str, seed: int | None = None, out_dir: str | None = None
) -> ProjectConfig:
    """Load and validate a YAML project file.

    Relative paths inside the file resolve against the file's directory.
    ``seed`` and ``out_dir`` override the file's values when given.
    """
    if not os.path.exists(path):
        raise UsageError(f"project file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise UsageError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a mapping at top level")
    base = os.path.dirname(os.path.abspath(path))

    final_seed = seed if seed is not None else doc.get("seed")
    if final_seed is None:
        raise UsageError(f"{path}: missing required key 'seed' (or pass --seed)")
    metric = str(_require(doc, "metric", path))
    direction = str(doc.get("direction", "min"))
    if direction not in ("min", "max"):
        raise UsageError(f"{path}: direction must be 'min' or 'max', got {direction!r}")
    final_out = out_dir if out_dir is not None else doc.get("out_dir", "runs")
    final_out = _resolve(base, str(final_out))

    space = _load_space(doc, base, path)
    target_kind, target_spec, virtual = _load_target(doc, base, path, metric, space)

    return ProjectConfig(
        seed=int(final_seed),
        metric=metric,
        direction=direction,
        out_dir=final_out,
        space=space,
        target_kind=target_kind,
        target_spec=target_spec,
        virtual_target=virtual,
        al=doc.get("active_learning", {}) or {},
        selection=doc.get("selection", {}) or {},
        tuning=doc.get("tuning", {}) or {},
    )


def _load_space(doc: Mapping[str, Any], base: str, origin: str) -> FlagSpace:
    section = _require(doc, "flag_space", origin)
    if not isinstance(section, Mapping):
        raise UsageError(f"{origin}: flag_space must be a mapping")
    has_file = "file" in section
    has_dump = "dump" in section
    if has_file == has_dump:
        raise UsageError(f"{origin}: flag_space needs exactly one of 'file' or 'dump'")
    try:
        if has_file:
            space = load_flag_file(_resolve(base, section["file"]))
        else:
            dump_path = _resolve(base, section["dump"])
            if not os.path.exists(dump_path):
                raise UsageError(f"{origin}: flag dump not found: {dump_path}")
            with open(dump_path, "r", encoding="utf-8") as fh:
                space = parse_flag_dump(fh.read(), group_rules=section.get("groups"))
        if section.get("active_groups") is not None:
            space = FlagSpace(
                space.flags,
                active_groups=frozenset(section["active_groups"]),
                parse_warnings=space.parse_warnings,
            )
        for name, fields in (section.get("overrides") or {}).items():
            space = space.override(name, **fields)
    except UsageError:
        raise
    except FileNotFoundError as exc:
        raise UsageError(f"{origin}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{origin}: invalid flag space: {exc}") from exc
    return space


def _load_target(
    doc: Mapping[str, Any], base: str, origin: str, metric: str, space: FlagSpace
) -> tuple[str, TargetSpec | None, VirtualTarget | None]:
    section = _require(doc, "target", origin)
    if not isinstance(section, Mapping) or "kind" not in section:
        raise UsageError(f"{origin}: target must be a mapping with a 'kind'")
    kind = section["kind"]
    if kind == "virtual":
        try:
            virtual = VirtualTarget(
                dim=int(section.get("dim", space.dimension)),
                relevant_dims=tuple(section.get("relevant_dims", ())),
                centers=tuple(section.get("centers", ())),
                weights=tuple(section.get("weights", ())),
                noise_sd=float(section.get("noise_sd", 0.0)),
                base=float(section.get("base", 1.0)),
            )
        except ValueError as exc:
            raise UsageError(f"{origin}: invalid virtual target: {exc}") from exc
        if virtual.dim != space.dimension:
            raise UsageError(
                f"{origin}: virtual target dim {virtual.dim} != "
                f"flag space dimension {space.dimension}"
            )
        return "virtual", None, virtual
    if kind == "command":
        try:
            spec = TargetSpec(
                command_template=tuple(_require(section, "command", origin)),
                timeout=float(section.get("timeout", 300.0)),
                repeat=int(section.get("repeat", 1)),
                probes=tuple(section.get("probes", ("time",))),
                working_dir=(
                    _resolve(base, section["workdir"]) if section.get("workdir") else None
                ),
                env=dict(section.get("env", {})),
                heap_cadence_s=float(section.get("heap_cadence_s", 1.0)),
                jstat_cmd=str(section.get("jstat", "jstat")),
            )
        except ValueError as exc:
            raise UsageError(f"{origin}: invalid target: {exc}") from exc
        if metric not in spec.probes:
            raise UsageError(
                f"{origin}: metric {metric!r} is not among the probes {list(spec.probes)}"
            )
        return "command", spec, None
    raise UsageError(f"{origin}: unknown target kind {kind!r}")


# --- artifacts ------------------------------------------------------------------


@dataclass(frozen=True)
class RunArtifacts:
    """Canonical artifact paths inside a project's output directory."""

    out_dir: str

    def _p(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    @property
    def dataset_csv(self) -> str:
        return self._p("dataset.csv")

    @property
    def al_report_json(self) -> str:
        return self._p("al_report.json")

    @property
    def model_json(self) -> str:
        return self._p("model.json")

    @property
    def trial_log(self) -> str:
        return self._p("trials.jsonl")

    @property
    def selected_flags_txt(self) -> str:
        return self._p("selected_flags.txt")

    @property
    def lasso_report_json(self) -> str:
        return self._p("lasso_report.json")

    def tuning_report_json(self, algorithm: str) -> str:
        return self._p(f"tuning_{algorithm}.json")

    def trajectory_csv(self, algorithm: str) -> str:
        return self._p(f"trajectory_{algorithm}.csv")

    def summary_txt(self, algorithm: str) -> str:
        return self._p(f"summary_{algorithm}.txt")

    @property
    def report_csv(self) -> str:
        return self._p("report.csv")

    @property
    def report_txt(self) -> str:
        return self._p("report.txt")


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, doc: Any) -> None:
    _write_atomic(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _build_executor(project: ProjectConfig, log: TrialLog | None) -> TrialExecutor:
    if project.target_kind == "virtual":
        return VirtualExecutor(
            project.virtual_target, metric=project.metric, log=log,
            full_space=project.space,
        )
    return CommandExecutor(project.target_spec, log=log)


# --- phase: datagen --------------------------------------------------------------


def cmd_datagen(project: ProjectConfig) -> RunArtifacts:
    """Characterize the target; write dataset.csv, al_report.json, model.json."""
    arts = RunArtifacts(project.out_dir)
    os.makedirs(project.out_dir, exist_ok=True)
    executor = _build_executor(project, TrialLog(arts.trial_log))
    al = dict(project.al)
    sgd_doc = al.get("sgd", {}) or {}
    feat_doc = al.get("features", {}) or {}
    try:
        budget = AlBudget(
            batch_fraction=float(al.get("batch_fraction", 0.03)),
            max_rounds=int(al.get("max_rounds", 10)),
            rel_rmse_eps=float(al.get("rel_rmse_eps", 0.01)),
            ensemble_size=int(al.get("ensemble", 8)),
            max_wall_clock_s=al.get("max_wall_clock_s"),
        )
        result = run_al_loop(
            project.space,
            executor,
            budget=budget,
            seed=project.seed,
            n_candidates=int(al.get("candidates", 400)),
            seed_fraction=float(al.get("seed_fraction", 0.1)),
            test_fraction=float(al.get("test_fraction", 0.2)),
            metric=project.metric,
            sgd=SgdHyper(
                learning_rate=float(sgd_doc.get("learning_rate", 0.01)),
                epochs=int(sgd_doc.get("epochs", 200)),
                batch_size=int(sgd_doc.get("batch_size", 32)),
            ),
            feature_map=FeatureMap(
                degree=int(feat_doc.get("degree", 2)),
                include_interactions=bool(feat_doc.get("interactions", False)),
            ),
            strategy=str(al.get("strategy", "bemcm")),
        )
    except TargetNotFoundError as exc:
        raise TargetError(str(exc)) from exc
    except RuntimeError as exc:
        raise TargetError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(f"active_learning settings: {exc}") from exc

    _write_atomic(arts.dataset_csv, _dataset_csv_text(project, result))
    report_doc = result.report.to_dict()
    report_doc["metric"] = project.metric
    report_doc["seed"] = project.seed
    report_doc["n_flags"] = project.space.dimension
    _write_json(arts.al_report_json, report_doc)
    save_model(result.model, arts.model_json)
    return arts


def _dataset_csv_text(project: ProjectConfig, result: AlResult) -> str:
    flags = project.space.active_flags
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f.name for f in flags] + [project.metric])
    for record in result.records:
        if not record.ok:
            continue
        row = [_format_value(record.config[f.name]) for f in flags]
        row.append(_FLOAT_FMT % record.metrics[project.metric])
        writer.writerow(row)
    return buf.getvalue()


def read_dataset_csv(path: str, space: FlagSpace, metric: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset back as encoded rows + metric values."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty dataset")
    header = rows[0]
    for f in space.active_flags:
        if f.name not in header:
            raise UsageError(f"{path}: missing flag column {f.name!r}")
    if metric not in header:
        raise UsageError(f"{path}: missing metric column {metric!r}")
    col = {name: header.index(name) for name in header}
    X, y = [], []
    for row in rows[1:]:
        if not row:
            continue
        vals = {
            f.name: f.parse_value_text(row[col[f.name]]) for f in space.active_flags
        }
        X.append(space.encode(Configuration(vals)))
        y.append(float(row[col[metric]]))
    return np.vstack(X), np.asarray(y)


# --- phase: select ---------------------------------------------------------------


def cmd_select(project: ProjectConfig) -> RunArtifacts:
    """Lasso-select impactful flags; write selected_flags.txt, lasso_report.json."""
    arts = RunArtifacts(project.out_dir)
    if not os.path.exists(arts.dataset_csv):
        raise DependencyError(
            f"dataset not found: {arts.dataset_csv} (run 'datagen' first)"
        )
    X, y = read_dataset_csv(arts.dataset_csv, project.space, project.metric)
    sel = dict(project.selection)
    tol = float(sel.get("tol", 1e-6))
    max_sweeps = int(sel.get("max_sweeps", 1000))
    cv_scores: dict[float, float] | None = None
    try:
        if "grid" in sel:
            lam, cv_scores = featsel.grid_search_lambda(
                X, y, sel["grid"], folds=int(sel.get("folds", 5)),
                seed=project.seed, tol=tol, max_sweeps=max_sweeps,
            )
        else:
            lam = float(sel.get("lambda", 0.01))
        fit = featsel.fit_lasso(X, y, lam, tol=tol, max_sweeps=max_sweeps)
        subset = featsel.select_flags(
            fit, project.space, threshold=float(sel.get("threshold", 0.0))
        )
    except ValueError as exc:
        raise UsageError(f"selection settings: {exc}") from exc

    _write_atomic(arts.selected_flags_txt, "\n".join(subset.names) + "\n")
    names = [f.name for f in project.space.active_flags]
    doc = {
        "lambda": fit.lambda_,
        "weights": {n: fit.weights[i] for i, n in enumerate(names)},
        "selected": list(subset.names),
        "support_size": len(subset.names),
        "fallback": subset.fallback,
        "converged": fit.converged,
        "sweeps": fit.n_iter,
        "n_rows": int(X.shape[0]),
    }
    if cv_scores is not None:
        doc["cv_mse"] = {str(k): v for k, v in cv_scores.items()}
    _write_json(arts.lasso_report_json, doc)
    return arts


# --- phase: tune -----------------------------------------------------------------


def cmd_tune(
    project: ProjectConfig, algorithm: str = "bo", all_flags: bool = False
) -> RunArtifacts:
    """Tune the selected subspace; write tuning_/trajectory_/summary_ artifacts."""
    if algorithm not in ALGORITHMS:
        raise UsageError(
            f"unknown algorithm {algorithm!r} (choose from {', '.join(ALGORITHMS)})"
        )
    arts = RunArtifacts(project.out_dir)
    os.makedirs(project.out_dir, exist_ok=True)
    if all_flags:
        subspace = project.space.subset([f.name for f in project.space.active_flags])
        selected_names = [f.name for f in project.space.active_flags]
    else:
        if not os.path.exists(arts.selected_flags_txt):
            raise DependencyError(
                f"selected flags not found: {arts.selected_flags_txt} "
                "(run 'select' first or pass --all-flags)"
            )
        with open(arts.selected_flags_txt, "r", encoding="utf-8") as fh:
            selected_names = [ln.strip() for ln in fh if ln.strip()]
        try:
            subspace = project.space.subset(selected_names)
        except ValueError as exc:
            raise UsageError(f"selected flags file: {exc}") from exc

    tun = dict(project.tuning)
    executor = _build_executor(project, TrialLog(arts.trial_log))
    try:
        task = TuneTask(
            space=subspace,
            executor=executor,
            metric=project.metric,
            direction=project.direction,
            budget=int(tun.get("budget", 20)),
            init_size=int(tun.get("init_size", 8)),
            seed=project.seed,
            kernel=str(tun.get("kernel", MATERN52)),
            gp_restarts=int(tun.get("gp_restarts", 5)),
            xi=float(tun.get("xi", 0.01)),
            acq_candidates=int(tun.get("acq_candidates", 1024)),
        )
    except ValueError as exc:
        raise UsageError(f"tuning settings: {exc}") from exc

    try:
        report = _dispatch_tuner(project, task, algorithm, arts, tun)
    except TargetNotFoundError as exc:
        raise TargetError(str(exc)) from exc
    except RuntimeError as exc:
        raise TargetError(str(exc)) from exc

    doc = report.to_dict()
    doc["selected_flags"] = selected_names
    _write_json(arts.tuning_report_json(algorithm), doc)
    _write_atomic(arts.trajectory_csv(algorithm), _trajectory_csv_text(report))
    _write_atomic(arts.summary_txt(algorithm), _summary_text(project, report, subspace))
    return arts


def _dispatch_tuner(
    project: ProjectConfig,
    task: TuneTask,
    algorithm: str,
    arts: RunArtifacts,
    tun: Mapping[str, Any],
) -> TuningReport:
    if algorithm == "bo":
        return tune_bo(task)
    if algorithm == "bo-warm":
        if not os.path.exists(arts.dataset_csv):
            raise DependencyError(
                f"dataset not found: {arts.dataset_csv} "
                "(bo-warm needs 'datagen' output)"
            )
        X_full, y = read_dataset_csv(arts.dataset_csv, project.space, project.metric)
        full_names = [f.name for f in project.space.active_flags]
        cols = [full_names.index(f.name) for f in task.space.active_flags]
        return tune_bo_warm(task, X_full[:, cols], y)
    if algorithm == "rbo":
        if not os.path.exists(arts.model_json):
            raise DependencyError(
                f"model not found: {arts.model_json} (rbo needs 'datagen' output)"
            )
        model = load_model(arts.model_json)
        try:
            return tune_rbo(
                task, model, full_space=project.space,
                confirm_runs=int(tun.get("confirm_runs", 1)),
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    sa = dict(tun.get("sa", {}) or {})
    try:
        return tune_sa(
            task,
            n_init=int(sa.get("n_init", 8)),
            t0=sa.get("t0"),
            cooling=float(sa.get("cooling", 0.95)),
            step_sd=float(sa.get("step_sd", 0.1)),
        )
    except ValueError as exc:
        raise UsageError(f"sa settings: {exc}") from exc


def _trajectory_csv_text(report: TuningReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "value", "incumbent"])
    for p in report.trajectory:
        writer.writerow([p.iteration, _FLOAT_FMT % p.value, _FLOAT_FMT % p.incumbent])
    return buf.getvalue()


def _improvement_pct(report: TuningReport) -> float:
    if report.direction == "min":
        return (report.default_value - report.best_value) / report.default_value * 100.0
    return (report.best_value - report.default_value) / report.default_value * 100.0


def _summary_text(
    project: ProjectConfig, report: TuningReport, subspace: FlagSpace
) -> str:
    lines = [
        f"algorithm: {report.algorithm}",
        f"metric: {report.metric} ({report.direction})",
        f"seed: {report.seed}",
        f"tuned flags: {subspace.dimension}",
        f"default value: {_FLOAT_FMT % report.default_value}",
        f"best value: {_FLOAT_FMT % report.best_value}",
        f"speedup: {_FLOAT_FMT % report.speedup}",
        f"improvement: {_FLOAT_FMT % _improvement_pct(report)}%",
        f"real executions: {report.real_executions}",
        f"default runs: {report.default_runs}",
        f"total executions: {report.total_executions}",
    ]
    if report.predicted_value is not None:
        lines.append(f"predicted value: {_FLOAT_FMT % report.predicted_value}")
    if report.confirmed_value is not None:
        lines.append(f"confirmed value: {_FLOAT_FMT % report.confirmed_value}")
    if report.used_default_guard:
        lines.append("note: no tuned configuration beat the default")
    for note in report.notes:
        lines.append(f"note: {note}")
    lines.append("best configuration:")
    for arg in subspace.render_cli_args(report.best_config):
        lines.append(f"  {arg}")
    return "\n".join(lines) + "\n"


# --- phase: report -----------------------------------------------------------------


def cmd_report(project: ProjectConfig) -> RunArtifacts:
    """Summarize all tuning runs in the project's output directory."""
    arts = RunArtifacts(project.out_dir)
    paths = sorted(glob.glob(os.path.join(project.out_dir, "tuning_*.json")))
    if not paths:
        raise DependencyError(
            f"no tuning reports under {project.out_dir} (run 'tune' first)"
        )
    docs = []
    for p in paths:
        with open(p, "r", encoding="utf-8") as fh:
            docs.append(json.load(fh))
    metrics = {(d["metric"], d["direction"]) for d in docs}
    if len(metrics) > 1:
        raise UsageError(f"tuning reports mix metrics/directions: {sorted(metrics)}")

    def order(doc: dict) -> tuple:
        name = doc["algorithm"]
        idx = ALGORITHMS.index(name) if name in ALGORITHMS else len(ALGORITHMS)
        return (idx, name)

    docs.sort(key=order)
    header = [
        "algorithm", "default_value", "best_value", "speedup",
        "improvement_pct", "real_executions", "total_executions",
    ]
    rows = []
    for d in docs:
        if d["direction"] == "min":
            impr = (d["default_value"] - d["best_value"]) / d["default_value"] * 100.0
        else:
            impr = (d["best_value"] - d["default_value"]) / d["default_value"] * 100.0
        rows.append([
            d["algorithm"],
            _FLOAT_FMT % d["default_value"],
            _FLOAT_FMT % d["best_value"],
            _FLOAT_FMT % d["speedup"],
            _FLOAT_FMT % impr,
            str(d["real_executions"]),
            str(d["total_executions"]),
        ])

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _write_atomic(arts.report_csv, buf.getvalue())

    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    txt_lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for r in rows:
        txt_lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(header))))
    metric, direction = next(iter(metrics))
    txt = f"metric: {metric} ({direction})\n" + "\n".join(txt_lines) + "\n"
    _write_atomic(arts.report_txt, txt)
    return arts
