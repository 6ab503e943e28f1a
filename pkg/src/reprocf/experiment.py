"""Seeded sweeps over datasets x samplers x training ratios x bias modes x repetitions.

Every cell of a sweep gets its own seed, a stable hash of the master seed and
the cell coordinates, so results do not depend on execution order or on the
number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .evaluate import ConfusionCounts, MetricsRecord, confusion, dummy_predict, metrics
from .factorize import AlsConfig, fit_als
from .matrix import UtilityMatrix, load_matrix_csv, training_ratio, validate_time_constraint
from .sampling import ALL_METHODS, Method, SamplingSpec, sample_mask
from .synthgen import STANDARD_TYPES, SyntheticSpec, generate_synthetic

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = tuple(round(0.1 * k, 1) for k in range(1, 10))

RESULT_COLUMNS = [
    "dataset", "method", "alpha", "bias", "rep", "ratio_actual",
    "tp", "fp", "tn", "fn", "accuracy", "sensitivity", "specificity", "warning",
    "wall_time",
]
TIMING_COLUMNS = ("wall_time",)

SUMMARY_COLUMNS = [
    "dataset", "method", "alpha", "bias", "n",
    "ratio_mean", "accuracy_mean", "accuracy_std",
    "sensitivity_mean", "sensitivity_std", "sensitivity_n",
    "specificity_mean", "specificity_std", "specificity_n",
    "warnings",
]


def derive_seed(*parts) -> int:
    """Stable unsigned 64-bit seed from arbitrary parts."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big", signed=False)


def cell_seed(master_seed: int, dataset: str, method: Method, alpha: float, bias: bool, rep: int) -> int:
    # alpha as fixed point so 0.1 and 0.1000000001 hash alike
    return derive_seed(master_seed, dataset, Method.parse(method).value, round(alpha * 10_000), int(bias), rep)


@dataclass(frozen=True)
class DatasetSource:
    """A synthetic matrix (``n_types`` set) or a matrix CSV (``path`` set)."""

    id: str
    n_types: Optional[int] = None
    path: Optional[str] = None
    n_files: int = 100
    n_subjects: int = 100

    @classmethod
    def synthetic(cls, n_types: int, n_files: int = 100, n_subjects: int = 100) -> DatasetSource:
        return cls(f"synthetic-{n_types}", n_types=n_types, n_files=n_files, n_subjects=n_subjects)

    @classmethod
    def parse(cls, text: str, n_files: int = 100, n_subjects: int = 100) -> DatasetSource:
        """``synthetic:8`` / ``synthetic-8`` or a path to a matrix CSV."""
        t = text.strip()
        for prefix in ("synthetic:", "synthetic-"):
            if t.startswith(prefix):
                return cls.synthetic(int(t[len(prefix):]), n_files, n_subjects)
        return cls(Path(t).stem, path=t)

    def load(self) -> UtilityMatrix:
        return _load_dataset(self)


@lru_cache(maxsize=32)
def _load_dataset(source: DatasetSource) -> UtilityMatrix:
    if source.n_types is not None:
        return generate_synthetic(SyntheticSpec(source.n_types, source.n_files, source.n_subjects))
    return load_matrix_csv(source.path)


def standard_synthetic_sources(n_files: int = 100, n_subjects: int = 100) -> list[DatasetSource]:
    return [DatasetSource.synthetic(n, n_files, n_subjects) for n in STANDARD_TYPES]


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[DatasetSource, ...] = field(default_factory=lambda: tuple(standard_synthetic_sources()))
    methods: tuple[Method, ...] = ALL_METHODS
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    als: AlsConfig = AlsConfig()
    bias_modes: tuple[bool, ...] = (False,)
    repetitions: int = 5
    master_seed: int = 0
    tolerance: float = 0.01
    cold_start: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "methods", tuple(Method.parse(m) for m in self.methods))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "bias_modes", tuple(bool(b) for b in self.bias_modes))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not all(0 < a < 1 for a in self.alphas):
            raise ValueError("every alpha must lie in (0, 1)")
        if not self.datasets or not self.methods or not self.alphas or not self.bias_modes:
            raise ValueError("datasets, methods, alphas and bias_modes must be non-empty")


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    method: str
    alpha: float
    bias: bool
    rep: int
    ratio_actual: float = math.nan
    counts: Optional[ConfusionCounts] = None
    metrics: Optional[MetricsRecord] = None
    dummy_accuracy: Optional[float] = None
    time_constraint_ok: Optional[bool] = None
    warning: str = ""
    wall_time: float = 0.0

    @property
    def accuracy(self) -> Optional[float]:
        return self.metrics.accuracy if self.metrics else None

    def as_record(self) -> dict:
        c = self.counts
        m = self.metrics
        return {
            "dataset": self.dataset,
            "method": self.method,
            "alpha": f"{self.alpha:g}",
            "bias": "on" if self.bias else "off",
            "rep": self.rep,
            "ratio_actual": _fmt(self.ratio_actual),
            "tp": c.tp if c else "",
            "fp": c.fp if c else "",
            "tn": c.tn if c else "",
            "fn": c.fn if c else "",
            "accuracy": _fmt(m.accuracy if m else None),
            "sensitivity": _fmt(m.sensitivity if m else None),
            "specificity": _fmt(m.specificity if m else None),
            "warning": self.warning,
            "wall_time": f"{self.wall_time:.4f}",
        }


def _fmt(v: Optional[float]) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.6f}"


def run_cell(
    matrix: UtilityMatrix,
    dataset_id: str,
    method: Method | str,
    alpha: float,
    als: AlsConfig,
    bias: bool,
    rep_seed: int,
    rep: int = 0,
    tolerance: float = 0.01,
    cold_start: bool = True,
) -> ResultRow:
    """Sample a training set, fit ALS, predict the test cells and score them."""
    start = time.perf_counter()
    method = Method.parse(method)
    mask = sample_mask(SamplingSpec(method, alpha, rep_seed, tolerance, cold_start), matrix.shape)
    ratio = training_ratio(mask)
    notes = []
    if abs(ratio - alpha) > tolerance:
        notes.append(f"ratio {ratio:.4f} off target by more than {tolerance:g}")
    test = mask.complement()
    config = replace(als, use_bias=bias, seed=derive_seed(rep_seed, "als"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_als(matrix, mask, config)
    notes.extend(str(w.message) for w in caught)
    pred = model.predict_binary()
    counts = confusion(matrix, pred, test)
    dummy = metrics(confusion(matrix, dummy_predict(matrix, mask), test)).accuracy
    return ResultRow(
        dataset=dataset_id,
        method=method.value,
        alpha=alpha,
        bias=bias,
        rep=rep,
        ratio_actual=ratio,
        counts=counts,
        metrics=metrics(counts),
        dummy_accuracy=dummy,
        time_constraint_ok=validate_time_constraint(mask),
        warning="; ".join(notes),
        wall_time=time.perf_counter() - start,
    )


def _cell_job(args) -> ResultRow:
    source, method, alpha, bias, rep, config = args
    seed = cell_seed(config.master_seed, source.id, method, alpha, bias, rep)
    try:
        return run_cell(
            source.load(), source.id, method, alpha, config.als, bias, seed, rep,
            config.tolerance, config.cold_start,
        )
    except Exception as exc:  # a failed cell must not sink the sweep
        logger.warning("cell %s/%s/%g/%s/%d failed: %s", source.id, method.value, alpha, bias, rep, exc)
        return ResultRow(source.id, method.value, alpha, bias, rep, warning=f"error: {exc}")


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    method: str
    alpha: float
    bias: bool
    n: int
    ratio_mean: float
    accuracy_mean: Optional[float]
    accuracy_std: Optional[float]
    sensitivity_mean: Optional[float]
    sensitivity_std: Optional[float]
    sensitivity_n: int
    specificity_mean: Optional[float]
    specificity_std: Optional[float]
    specificity_n: int
    warnings: int

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["alpha"] = f"{self.alpha:g}"
        rec["bias"] = "on" if self.bias else "off"
        for k in ("ratio_mean", "accuracy_mean", "accuracy_std", "sensitivity_mean",
                  "sensitivity_std", "specificity_mean", "specificity_std"):
            rec[k] = _fmt(rec[k])
        return rec


@dataclass
class SweepResult:
    rows: list[ResultRow]
    summary: list[SummaryRow]


def _mean_std(values: Sequence[Optional[float]]) -> tuple[Optional[float], Optional[float], int]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None, 0
    return float(np.mean(vals)), float(np.std(vals)), len(vals)


def summarize(rows: Sequence[ResultRow]) -> list[SummaryRow]:
    """Mean and (population) standard deviation over repetitions of each cell group."""
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.dataset, r.method, r.alpha, r.bias), []).append(r)
    out = []
    for (dataset, method, alpha, bias), rs in groups.items():
        ok = [r for r in rs if r.metrics is not None]
        acc = _mean_std([r.metrics.accuracy for r in ok])
        sens = _mean_std([r.metrics.sensitivity for r in ok])
        spec = _mean_std([r.metrics.specificity for r in ok])
        ratios = [r.ratio_actual for r in ok]
        out.append(SummaryRow(
            dataset, method, alpha, bias, len(ok),
            float(np.mean(ratios)) if ratios else math.nan,
            acc[0], acc[1], sens[0], sens[1], sens[2], spec[0], spec[1], spec[2],
            sum(1 for r in rs if r.warning),
        ))
    return out


def _jobs(config: ExperimentConfig) -> list[tuple]:
    return [
        (source, method, alpha, bias, rep, config)
        for source in config.datasets
        for method in config.methods
        for alpha in config.alphas
        for bias in config.bias_modes
        for rep in range(config.repetitions)
    ]


def sweep(config: ExperimentConfig, progress=None) -> SweepResult:
    """Run every cell of ``config``; rows come back in cell-coordinate order."""
    jobs = _jobs(config)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_cell_job, jobs, chunksize=4))
    else:
        rows = []
        for k, job in enumerate(jobs):
            rows.append(_cell_job(job))
            if progress:
                progress(k + 1, len(jobs))
    # pool.map already preserves order; sort anyway so the output never depends on scheduling
    order = {key: k for k, key in enumerate((j[0].id, j[1].value, j[2], j[3], j[4]) for j in jobs)}
    rows.sort(key=lambda r: order[(r.dataset, r.method, r.alpha, r.bias, r.rep)])
    return SweepResult(rows, summarize(rows))


def write_results_csv(rows: Sequence[ResultRow], path, include_timing: bool = True) -> None:
    columns = [c for c in RESULT_COLUMNS if include_timing or c not in TIMING_COLUMNS]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow(r.as_record())


def write_summary_csv(summary: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for s in summary:
            writer.writerow(s.as_record())


@dataclass(frozen=True)
class RocRow:
    method: str
    sensitivity_mean: Optional[float]
    specificity_mean: Optional[float]
    # pooled over all test cells, i.e. weighted by test-set size
    sensitivity_pooled: Optional[float]
    specificity_pooled: Optional[float]
    n: int
    sensitivity_skipped: int
    specificity_skipped: int


def roc_table(rows: Sequence[ResultRow]) -> list[RocRow]:
    """Per-method mean sensitivity and specificity; undefined entries are skipped and counted."""
    by_method: dict[str, list[ResultRow]] = {}
    for r in rows:
        if r.metrics is not None:
            by_method.setdefault(r.method, []).append(r)
    table = []
    for method, rs in by_method.items():
        sens = [r.metrics.sensitivity for r in rs]
        spec = [r.metrics.specificity for r in rs]
        tp = sum(r.counts.tp for r in rs)
        fn = sum(r.counts.fn for r in rs)
        tn = sum(r.counts.tn for r in rs)
        fp = sum(r.counts.fp for r in rs)
        table.append(RocRow(
            method,
            _mean_std(sens)[0],
            _mean_std(spec)[0],
            tp / (tp + fn) if tp + fn else None,
            tn / (tn + fp) if tn + fp else None,
            len(rs),
            sum(v is None for v in sens),
            sum(v is None for v in spec),
        ))
    return table


def roc_config(config: ExperimentConfig, alpha: float = 0.9) -> ExperimentConfig:
    return replace(config, alphas=(alpha,), bias_modes=(False,))


def run_roc(config: ExperimentConfig, alpha: float = 0.9) -> list[RocRow]:
    return roc_table(sweep(roc_config(config, alpha)).rows)


def write_roc_csv(table: Sequence[RocRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fields = list(RocRow.__dataclass_fields__)
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in table:
            rec = asdict(row)
            for k in ("sensitivity_mean", "specificity_mean", "sensitivity_pooled", "specificity_pooled"):
                rec[k] = _fmt(rec[k])
            writer.writerow(rec)


HYPER_AXES = {"factors": "n_factors", "iterations": "max_iterations"}


def hyper_study(
    source: DatasetSource,
    method: Method | str,
    axis: str,
    values: Sequence[int],
    alphas: Sequence[float] = (0.7,),
    als: AlsConfig = AlsConfig(),
    repetitions: int = 5,
    master_seed: int = 0,
    bias: bool = False,
    tolerance: float = 0.01,
) -> list[tuple[int, ResultRow]]:
    """Vary one ALS hyperparameter with everything else fixed.

    Repetition seeds do not depend on the varied value, so every value sees
    the same training masks.
    """
    if axis not in HYPER_AXES:
        raise ValueError(f"axis must be one of {sorted(HYPER_AXES)}, got {axis!r}")
    if any(int(v) < 1 for v in values):
        raise ValueError("hyperparameter values must be positive integers")
    matrix = source.load()
    out = []
    for value in values:
        cfg = replace(als, **{HYPER_AXES[axis]: int(value)})
        for alpha in alphas:
            for rep in range(repetitions):
                seed = cell_seed(master_seed, source.id, method, alpha, bias, rep)
                out.append((int(value), run_cell(matrix, source.id, method, alpha, cfg, bias, seed, rep, tolerance)))
    return out


def write_hyper_csv(axis: str, results: Sequence[tuple[int, ResultRow]], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=[axis] + RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for value, row in results:
            writer.writerow({axis: value, **row.as_record()})


def mean_accuracy(rows: Sequence[ResultRow]) -> float:
    accs = [r.accuracy for r in rows if r.accuracy is not None]
    if not accs:
        raise ValueError("no successful rows")
    return float(np.mean(accs))


_CONFIG_KEYS = {
    "datasets", "methods", "alphas", "factors", "reg", "iters", "nonnegative", "bias_modes",
    "repetitions", "seed", "workers", "tolerance", "cold_start", "files", "subjects",
    "weighted_reg", "bias_style",
}


def _parse_bias_mode(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("on", "true", "bias", "1", "yes"):
        return True
    if text in ("off", "false", "no-bias", "nobias", "0", "no"):
        return False
    raise ValueError(f"bias mode must be 'on' or 'off', got {value!r}")


def config_from_mapping(doc: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Build a sweep config from the flat key/value document of a sweep file."""
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    n_files = int(doc.get("files", 100))
    n_subjects = int(doc.get("subjects", 100))
    datasets = []
    for d in doc.get("datasets", ["synthetic:%d" % n for n in STANDARD_TYPES]):
        src = DatasetSource.parse(str(d), n_files, n_subjects)
        if src.path is not None and base_dir is not None and not Path(src.path).is_absolute():
            src = replace(src, path=str(base_dir / src.path))
        datasets.append(src)
    defaults = AlsConfig()
    als = AlsConfig(
        n_factors=int(doc.get("factors", defaults.n_factors)),
        regularization=float(doc.get("reg", defaults.regularization)),
        max_iterations=int(doc.get("iters", defaults.max_iterations)),
        nonnegative=bool(doc.get("nonnegative", defaults.nonnegative)),
        weighted_regularization=bool(doc.get("weighted_reg", defaults.weighted_regularization)),
        bias_mode=str(doc.get("bias_style", defaults.bias_mode)),
    )
    return ExperimentConfig(
        datasets=tuple(datasets),
        methods=tuple(Method.parse(m) for m in doc.get("methods", [m.value for m in ALL_METHODS])),
        alphas=tuple(float(a) for a in doc.get("alphas", DEFAULT_ALPHAS)),
        als=als,
        bias_modes=tuple(_parse_bias_mode(b) for b in doc.get("bias_modes", ["off"])),
        repetitions=int(doc.get("repetitions", 5)),
        master_seed=int(doc.get("seed", 0)),
        tolerance=float(doc.get("tolerance", 0.01)),
        cold_start=bool(doc.get("cold_start", True)),
        workers=int(doc.get("workers", 1)),
    )


def load_config(path) -> ExperimentConfig:
    import tomli

    path = Path(path)
    with open(path, "rb") as fh:
        doc = tomli.load(fh)
    return config_from_mapping(doc, base_dir=path.parent)
