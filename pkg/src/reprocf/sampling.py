"""Training-set samplers for time-ordered utility matrices.

Every sampler except ``RANDOM_UNREAL`` returns a mask where each subject's
training cells form a prefix of the file order, so no training file is ever
produced after a test file of the same subject.

The three "random file numbers" samplers draw a per-subject prefix length
(a :data:`CountVector`, one integer per subject) from a distribution whose
mean is ``alpha * n_files``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .matrix import CellMask, training_ratio


class Method(str, enum.Enum):
    COMPLETE_COLUMNS = "complete-columns"
    COMPLETE_ROWS = "complete-rows"
    RANDOM_SUBJECTS = "rs"
    RFNU = "rfnu"
    RFNTL = "rfntl"
    RFNTS = "rfnts"
    RANDOM_UNREAL = "random-unreal"

    @property
    def respects_time_order(self) -> bool:
        return self is not Method.RANDOM_UNREAL

    @classmethod
    def parse(cls, value: str | Method) -> Method:
        if isinstance(value, Method):
            return value
        key = value.strip().lower().replace("_", "-")
        aliases = {
            "cc": "complete-columns",
            "columns": "complete-columns",
            "cr": "complete-rows",
            "rows": "complete-rows",
            "random-subjects": "rs",
            "ru": "random-unreal",
            "unreal": "random-unreal",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown sampling method {value!r} (choose from {names})") from None


ALL_METHODS = tuple(Method)


@dataclass(frozen=True)
class SamplingSpec:
    method: Method
    alpha: float
    seed: int = 0
    ratio_tolerance: float = 0.01
    cold_start: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method.parse(self.method))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.ratio_tolerance <= 0:
            raise ValueError("ratio_tolerance must be positive")


@dataclass(frozen=True)
class TriangularParams:
    """Triangular distribution with minimum ``a``, mode ``b`` and maximum ``c``."""

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        if not self.a <= self.b <= self.c:
            raise ValueError(f"triangular parameters need a <= b <= c, got {self}")

    @property
    def mean(self) -> float:
        return (self.a + self.b + self.c) / 3.0


def _triangular_from_uniform(params: TriangularParams, u: np.ndarray) -> np.ndarray:
    a, b, c = params.a, params.b, params.c
    if c == a:
        return np.full_like(u, a, dtype=float)
    split_at = (b - a) / (c - a)
    left = a + np.sqrt(u * (c - a) * (b - a))
    right = c - np.sqrt((1.0 - u) * (c - a) * (c - b))
    return np.where(u < split_at, left, right)


def sample_triangular(params: TriangularParams, rng: np.random.Generator, size=None):
    """Inverse-CDF draw(s) from ``params``; a scalar when ``size`` is None."""
    u = rng.random(size)
    x = _triangular_from_uniform(params, np.asarray(u, dtype=float))
    return float(x) if size is None else x


def _to_counts(draws: np.ndarray, n_files: int) -> np.ndarray:
    # round half up, then clamp
    return np.clip(np.floor(draws + 0.5), 0, n_files).astype(np.int64)


def _mixture(
    rng: np.random.Generator,
    n_subjects: int,
    p_draw: float,
    draw,
    otherwise: float,
) -> np.ndarray:
    """Each subject takes ``draw(u)`` with probability ``p_draw``, else ``otherwise``."""
    coin = rng.random(n_subjects)
    u = rng.random(n_subjects)
    return np.where(coin < p_draw, draw(u), otherwise)


def counts_rfnu(alpha: float, n_files: int, n_subjects: int, rng: np.random.Generator) -> np.ndarray:
    """Prefix lengths from a uniform distribution with mean ``alpha * n_files``."""
    if alpha <= 0.5:
        raw = _mixture(rng, n_subjects, 2 * alpha, lambda u: u * n_files, 0.0)
    else:
        low = (2 * alpha - 1) * n_files
        raw = low + rng.random(n_subjects) * (n_files - low)
    return _to_counts(raw, n_files)


def rfntl_params(alpha: float, n_files: int) -> tuple[TriangularParams, float]:
    """Triangular parameters and draw probability for the largest-minimum variant."""
    if alpha > 1 / 3:
        ab = (3 * alpha - 1) / 2 * n_files
        return TriangularParams(ab, ab, n_files), 1.0
    return TriangularParams(0.0, 0.0, n_files), 3 * alpha


def rfnts_params(alpha: float, n_files: int) -> tuple[TriangularParams, float]:
    """Triangular parameters and draw probability for the smallest-minimum variant.

    Above 2/3 a subject not drawn from the triangle gets a complete column.
    """
    if alpha < 1 / 3:
        return TriangularParams(0.0, 0.0, n_files), 3 * alpha
    if alpha <= 2 / 3:
        return TriangularParams(0.0, min((3 * alpha - 1) * n_files, n_files), n_files), 1.0
    return TriangularParams(0.0, n_files, n_files), 3 * (1 - alpha)


def counts_rfntl(alpha: float, n_files: int, n_subjects: int, rng: np.random.Generator) -> np.ndarray:
    params, p = rfntl_params(alpha, n_files)
    raw = _mixture(rng, n_subjects, p, lambda u: _triangular_from_uniform(params, u), 0.0)
    return _to_counts(raw, n_files)


def counts_rfnts(alpha: float, n_files: int, n_subjects: int, rng: np.random.Generator) -> np.ndarray:
    params, p = rfnts_params(alpha, n_files)
    fallback = float(n_files) if alpha > 2 / 3 else 0.0
    raw = _mixture(rng, n_subjects, p, lambda u: _triangular_from_uniform(params, u), fallback)
    return _to_counts(raw, n_files)


COUNT_SAMPLERS = {
    Method.RFNU: counts_rfnu,
    Method.RFNTL: counts_rfntl,
    Method.RFNTS: counts_rfnts,
}


def counts_to_mask(counts: np.ndarray, n_files: int) -> CellMask:
    counts = np.asarray(counts)
    if np.any(counts < 0) or np.any(counts > n_files):
        raise ValueError(f"counts must lie in [0, {n_files}]")
    return CellMask(np.arange(n_files)[:, None] < counts[None, :])


def _budget(alpha: float, n_files: int, n_subjects: int) -> int:
    # small epsilon so e.g. 0.45 * 100 counts as 45, not 44
    return int(math.floor(alpha * n_files * n_subjects + 1e-9))


def sample_complete_columns(alpha: float, dims: tuple[int, int], rng: np.random.Generator) -> CellMask:
    """Random complete subjects; the last column may be a partial prefix."""
    n_files, n_subjects = dims
    n_full = int(math.floor(alpha * n_subjects + 1e-9))
    residual = _budget(alpha, n_files, n_subjects) - n_full * n_files
    order = rng.permutation(n_subjects)
    counts = np.zeros(n_subjects, dtype=np.int64)
    counts[order[:n_full]] = n_files
    if residual > 0 and n_full < n_subjects:
        counts[order[n_full]] = residual
    return counts_to_mask(counts, n_files)


def sample_complete_rows(alpha: float, dims: tuple[int, int], rng: np.random.Generator) -> CellMask:
    """First files of every subject; the last row is shared by a random subject subset."""
    n_files, n_subjects = dims
    n_full = int(math.floor(alpha * n_files + 1e-9))
    residual = _budget(alpha, n_files, n_subjects) - n_full * n_subjects
    counts = np.full(n_subjects, n_full, dtype=np.int64)
    if residual > 0 and n_full < n_files:
        counts[rng.choice(n_subjects, size=residual, replace=False)] += 1
    return counts_to_mask(counts, n_files)


def sample_random_subjects(alpha: float, dims: tuple[int, int], rng: np.random.Generator) -> CellMask:
    """Add the next unselected file of a random non-full subject until the budget is met."""
    n_files, n_subjects = dims
    uniforms = rng.random(_budget(alpha, n_files, n_subjects))
    return counts_to_mask(_kernels.random_subject_counts(uniforms, n_files, n_subjects), n_files)


def sample_random_unreal(alpha: float, dims: tuple[int, int], rng: np.random.Generator) -> CellMask:
    """Uniform cells regardless of file order; a baseline that ignores the time constraint."""
    n_files, n_subjects = dims
    picked = rng.choice(n_files * n_subjects, size=_budget(alpha, n_files, n_subjects), replace=False)
    bits = np.zeros(n_files * n_subjects, dtype=bool)
    bits[picked] = True
    return CellMask(bits.reshape(dims))


MASK_SAMPLERS = {
    Method.COMPLETE_COLUMNS: sample_complete_columns,
    Method.COMPLETE_ROWS: sample_complete_rows,
    Method.RANDOM_SUBJECTS: sample_random_subjects,
    Method.RANDOM_UNREAL: sample_random_unreal,
}


def augment_cold_start(mask: CellMask, rng: np.random.Generator) -> CellMask:
    """Add the first row and one random complete column to ``mask``."""
    return _with_cold_start(mask, int(rng.integers(mask.dims[1])))


def _with_cold_start(mask: CellMask, column: int) -> CellMask:
    bits = mask.bits.copy()
    bits[0, :] = True
    bits[:, column] = True
    return CellMask(bits)


def adjust_to_ratio(
    counts: np.ndarray,
    n_files: int,
    alpha: float,
    tolerance: float,
    rng: np.random.Generator,
    floor: np.ndarray | None = None,
) -> np.ndarray:
    """Nudge random prefix lengths by one file until the ratio is within ``tolerance``.

    ``floor`` gives per-subject lower bounds that decrements never cross.
    """
    counts = np.array(counts, dtype=np.int64)
    floor = np.zeros_like(counts) if floor is None else np.asarray(floor, dtype=np.int64)
    n_subjects = len(counts)
    total_cells = n_files * n_subjects
    lo = max(0.0, alpha - tolerance) * total_cells
    hi = min(1.0, alpha + tolerance) * total_cells
    if alpha - tolerance > 1 or alpha + tolerance < 0 or math.floor(hi + 1e-9) < math.ceil(lo - 1e-9):
        raise ValueError(f"no achievable training ratio within {tolerance} of {alpha}")
    total = int(counts.sum())
    while abs(total / total_cells - alpha) > tolerance:
        if total / total_cells < alpha:
            candidates = np.flatnonzero(counts < n_files)
            step = 1
        else:
            candidates = np.flatnonzero(counts > floor)
            if len(candidates) == 0:
                raise ValueError(f"cannot lower the training ratio to within {tolerance} of {alpha}")
            step = -1
        counts[candidates[rng.integers(len(candidates))]] += step
        total += step
    return counts


def sample_counts(spec: SamplingSpec, dims: tuple[int, int], rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Raw and ratio-adjusted prefix lengths for a count-based method."""
    n_files, n_subjects = dims
    raw = COUNT_SAMPLERS[spec.method](spec.alpha, n_files, n_subjects, rng)
    return raw, adjust_to_ratio(raw, n_files, spec.alpha, spec.ratio_tolerance, rng)


def sample_mask(spec: SamplingSpec, dims: tuple[int, int]) -> CellMask:
    """Training mask for ``spec`` on a ``dims`` matrix; deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    if spec.method not in COUNT_SAMPLERS:
        mask = MASK_SAMPLERS[spec.method](spec.alpha, dims, rng)
        return augment_cold_start(mask, rng) if spec.cold_start else mask
    _, counts = sample_counts(spec, dims, rng)
    mask = counts_to_mask(counts, dims[0])
    if not spec.cold_start:
        return mask
    column = int(rng.integers(dims[1]))
    mask = _with_cold_start(mask, column)
    if abs(training_ratio(mask) - spec.alpha) > spec.ratio_tolerance:
        # the added column can push the ratio out of band; pull it back
        # without touching the cold-start cells
        floor = np.ones(dims[1], dtype=np.int64)
        floor[column] = dims[0]
        counts = adjust_to_ratio(mask.column_counts(), dims[0], spec.alpha, spec.ratio_tolerance, rng, floor=floor)
        mask = counts_to_mask(counts, dims[0])
    return mask
