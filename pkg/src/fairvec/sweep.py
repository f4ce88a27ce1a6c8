"""Sweep orchestration: uniform-coefficient merge grids and worst-subgroup
injection grids across seeds, with deterministic result assembly.

Rows are ordered grid-major then seed, regardless of how they were computed.
Per-seed artifacts (base checkpoint, vectors, eval split) may be passed as a
single shared object or as a dict keyed by seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

from . import svg, toymodel
from .arith import TaskVector, WeightedVector, merge
from .ckpt import Checkpoint
from .errors import InsufficientGroups, IoFailure
from .metrics import GroupReport, evaluate

MERGE_GRID = [round(0.1 * i, 1) for i in range(11)]    # 0.0 .. 1.0 step 0.1
INJECT_GRID = [round(0.2 * i, 1) for i in range(6)]    # 0.0 .. 1.0 step 0.2
DEFAULT_SEEDS = [13, 14, 15]

OVERALL_METRICS = ("macro_accuracy", "overall_dpd", "overall_eod", "accuracy_parity_gap")


@dataclass
class SweepConfig:
    grid: list[float]
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    attribute: str = "gender"
    threshold: float = 0.5
    criterion: str = "macro_accuracy"
    split: str = "train"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if not self.grid:
            raise ValueError("grid must be nonempty")
        if any(not math.isfinite(v) for v in self.grid):
            raise ValueError("grid values must be finite")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


@dataclass
class SweepRow:
    lam: float
    seed: int
    report: GroupReport


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list[SweepRow]
    provenance: dict[str, str] = field(default_factory=dict)

    def rows_at(self, lam: float) -> list[SweepRow]:
        return [r for r in self.rows if r.lam == lam]

    def aggregates(self) -> dict[float, dict[str, dict[str, float | None]]]:
        """Per-lambda across-seed mean and standard error of every overall metric."""
        out: dict[float, dict[str, dict[str, float | None]]] = {}
        for lam in self.config.grid:
            rows = self.rows_at(lam)
            out[lam] = {}
            for metric in OVERALL_METRICS:
                values = [getattr(r.report, metric) for r in rows]
                if any(v is None for v in values) or not values:
                    out[lam][metric] = {"mean": None, "stderr": None}
                    continue
                mean = statistics.fmean(values)
                stderr = (
                    statistics.stdev(values) / math.sqrt(len(values))
                    if len(values) > 1
                    else 0.0
                )
                out[lam][metric] = {"mean": mean, "stderr": stderr}
        return out

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "rows": [
                {"lambda": r.lam, "seed": r.seed, "report": r.report.to_dict()}
                for r in self.rows
            ],
            "aggregates": {
                repr(lam): metrics for lam, metrics in self.aggregates().items()
            },
            "provenance": dict(self.provenance),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["lambda", "seed", "group", "n", "accuracy", "selection_rate",
             "dpd_ovr", "eod_ovr", "macro_accuracy", "overall_dpd",
             "overall_eod", "accuracy_parity_gap"]
        )

        def cell(v):
            return "" if v is None else repr(v)

        for r in self.rows:
            for row in r.report.rows:
                writer.writerow(
                    [repr(r.lam), r.seed, row.group, row.n, repr(row.accuracy),
                     repr(row.selection_rate), cell(row.dpd_ovr), cell(row.eod_ovr),
                     "", "", "", ""]
                )
            writer.writerow(
                [repr(r.lam), r.seed, "__overall__", sum(g.n for g in r.report.rows),
                 "", "", "", "", repr(r.report.macro_accuracy),
                 cell(r.report.overall_dpd), cell(r.report.overall_eod),
                 cell(r.report.accuracy_parity_gap)]
            )
        for lam, metrics in self.aggregates().items():
            for stat in ("mean", "stderr"):
                writer.writerow(
                    [repr(lam), stat, "__overall__", "", "", "", "", ""]
                    + [cell(metrics[m][stat]) for m in OVERALL_METRICS]
                )
        return buf.getvalue()


def _per_seed(obj, seed):
    if isinstance(obj, dict) and seed in obj:
        return obj[seed]
    return obj


def _run_grid(config: SweepConfig, point_fn) -> list[SweepRow]:
    points = [(lam, seed) for lam in config.grid for seed in config.seeds]
    workers = max(1, int(os.environ.get("FAIRVEC_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda p: point_fn(*p), points))
    else:
        reports = [point_fn(lam, seed) for lam, seed in points]
    return [
        SweepRow(lam=lam, seed=seed, report=report)
        for (lam, seed), report in zip(points, reports)
    ]


def lambda_sweep(
    base: Checkpoint | dict[int, Checkpoint],
    vectors: list[TaskVector] | dict[int, list[TaskVector]],
    config: SweepConfig,
    eval_data,
) -> SweepResult:
    """Uniform-coefficient merge over the grid, evaluated per seed."""

    def point(lam: float, seed: int) -> GroupReport:
        merged = merge(
            _per_seed(base, seed),
            [WeightedVector(v, lam) for v in _per_seed(vectors, seed)],
        )
        preds = toymodel.predict(merged, _per_seed(eval_data, seed), config.threshold)
        return evaluate(preds, config.attribute, config.threshold)

    return SweepResult(
        config=config,
        rows=_run_grid(config, point),
        provenance={"mode": "merge"},
    )


def inject_sweep(
    sft: Checkpoint | dict[int, Checkpoint],
    worst_vector: TaskVector | dict[int, TaskVector],
    config: SweepConfig,
    eval_data,
) -> SweepResult:
    """Injection grid: sft + lambda * worst_vector; lambda=0 is the sft row."""

    def point(lam: float, seed: int) -> GroupReport:
        edited = merge(
            _per_seed(sft, seed), [WeightedVector(_per_seed(worst_vector, seed), lam)]
        )
        preds = toymodel.predict(edited, _per_seed(eval_data, seed), config.threshold)
        return evaluate(preds, config.attribute, config.threshold)

    return SweepResult(
        config=config,
        rows=_run_grid(config, point),
        provenance={"mode": "inject"},
    )


def select_lambda(result: SweepResult, criterion=None) -> float:
    """Grid value maximizing the across-seed mean criterion; ties go low."""
    if criterion is None:
        criterion = result.config.criterion
    if callable(criterion):
        key = criterion
    else:
        key = lambda report: getattr(report, criterion)  # noqa: E731

    best_lam, best_mean = None, None
    for lam in result.config.grid:
        values = [key(r.report) for r in result.rows_at(lam)]
        mean = statistics.fmean(values)
        if best_mean is None or mean > best_mean:
            best_lam, best_mean = lam, mean
    return best_lam


def worst_subgroups(
    report: GroupReport, k: int = 2, exclusions=("Other",)
) -> list[str]:
    """Groups ranked by descending (DPD+EOD)/2 one-vs-rest average.

    Catch-all groups in exclusions are skipped, as are groups whose EOD was
    undefined. Ties break toward the larger group, then lexicographic name.
    """
    excluded = set(exclusions)
    candidates = [
        row
        for row in report.rows
        if row.group not in excluded
        and row.dpd_ovr is not None
        and row.eod_ovr is not None
    ]
    if len(candidates) < k:
        raise InsufficientGroups(
            f"need {k} rankable subgroups, have {len(candidates)}"
        )
    candidates.sort(key=lambda r: (-(r.dpd_ovr + r.eod_ovr) / 2, -r.n, r.group))
    return [r.group for r in candidates[:k]]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def emit(
    result: SweepResult,
    out_dir: str | os.PathLike,
    formats=("json", "csv", "svg"),
    input_digests: dict[str, str] | None = None,
) -> list[str]:
    """Write result.json / result.csv / per-metric SVGs plus a manifest.

    An empty formats list writes nothing. SVG output is byte-deterministic
    for identical results.
    """
    formats = list(formats)
    if not formats:
        return []
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    def write(name: str, text: str):
        path = os.path.join(out_dir, name)
        tmp = path + ".tmp"
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc
        written.append(path)

    if "json" in formats:
        write("result.json", json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n")
    if "csv" in formats:
        write("result.csv", result.to_csv())
    if "svg" in formats:
        agg = result.aggregates()
        for fname, metric, label in (
            ("acc.svg", "macro_accuracy", "macro accuracy"),
            ("dpd.svg", "overall_dpd", "DPD"),
            ("eod.svg", "overall_eod", "EOD"),
        ):
            mean_line = [
                (lam, agg[lam][metric]["mean"])
                for lam in result.config.grid
                if agg[lam][metric]["mean"] is not None
            ]
            scatter = [
                (r.lam, getattr(r.report, metric))
                for r in result.rows
                if getattr(r.report, metric) is not None
            ]
            write(
                fname,
                svg.line_chart(
                    mean_line, scatter,
                    title=f"{label} vs lambda", xlabel="lambda", ylabel=label,
                ),
            )

    manifest = {
        "config_hash": hashlib.sha256(
            result.config.canonical_json().encode("utf-8")
        ).hexdigest(),
        "input_digests": dict(sorted((input_digests or {}).items())),
        "provenance": dict(result.provenance),
    }
    write("manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return written
