"""Alternating least squares for binary utility matrices.

The model predicts ``q_i . p_u`` for file ``i`` and subject ``u``, plus
``mu + b_u + b_i`` when biases are enabled. Each half-step solves one ridge
problem per entity over its observed training cells, optionally under
non-negativity of the factors. Biases are never constrained.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .matrix import CellMask, UtilityMatrix, _check_dims

logger = logging.getLogger(__name__)


class ColdStartWarning(UserWarning):
    """A file or subject had no training cell, so its factors were never fitted."""


@dataclass(frozen=True)
class AlsConfig:
    n_factors: int = 50
    regularization: float = 0.01
    max_iterations: int = 5
    nonnegative: bool = True
    use_bias: bool = False
    seed: int = 0
    # scale the ridge penalty of each file/subject by its number of training cells
    weighted_regularization: bool = True
    # "fixed": biases are the training average deviations from mu, computed once;
    # "learned": biases are re-fitted by regularised coordinate updates every round
    bias_mode: str = "fixed"

    def __post_init__(self) -> None:
        if self.n_factors < 1:
            raise ValueError("n_factors must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        if self.bias_mode not in ("fixed", "learned"):
            raise ValueError(f"bias_mode must be 'fixed' or 'learned', got {self.bias_mode!r}")


@dataclass(frozen=True, eq=False)
class FactorModel:
    file_factors: np.ndarray  # (n_files, f)
    subject_factors: np.ndarray  # (n_subjects, f)
    mu: float
    file_bias: np.ndarray
    subject_bias: np.ndarray
    config: AlsConfig
    # training objective after initialisation and after every round
    objective_trace: tuple[float, ...] = field(default=())

    @property
    def shape(self) -> tuple[int, int]:
        return self.file_factors.shape[0], self.subject_factors.shape[0]

    def predict(self) -> np.ndarray:
        """Real-valued predictions for every cell, shape (n_files, n_subjects)."""
        pred = self.file_factors @ self.subject_factors.T
        if self.config.use_bias:
            pred = pred + self.mu + self.file_bias[:, None] + self.subject_bias[None, :]
        return pred

    def predict_binary(self) -> np.ndarray:
        return round_binary(self.predict())


def round_binary(values) -> np.ndarray:
    """Round half up to the nearest integer, then clamp to {0, 1}."""
    return np.clip(np.floor(np.asarray(values, dtype=float) + 0.5), 0, 1).astype(np.uint8)


def predict_cell(model: FactorModel, file: int, subject: int) -> float:
    n_files, n_subjects = model.shape
    if not (0 <= file < n_files and 0 <= subject < n_subjects):
        raise IndexError(f"cell ({file}, {subject}) outside {n_files}x{n_subjects} model")
    value = float(model.file_factors[file] @ model.subject_factors[subject])
    if model.config.use_bias:
        value += model.mu + model.file_bias[file] + model.subject_bias[subject]
    return value


def predict_binary(model: FactorModel, file: int, subject: int) -> int:
    return int(round_binary(predict_cell(model, file, subject)))


def nnls_gram(gram: np.ndarray, rhs: np.ndarray, support: np.ndarray | None = None) -> np.ndarray:
    """Minimise ``x'Ax/2 - b'x`` over ``x >= 0`` for symmetric positive definite ``A``.

    Lawson-Hanson active set working on the normal equations, so the cost per
    step depends only on the number of factors, not the number of observations.
    ``support`` is an optional guess of the positive set (e.g. the previous
    ALS solution); it only changes the starting point, not the result.
    """
    gram = np.ascontiguousarray(gram, dtype=float)
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if support is None:
        support = np.zeros(len(rhs), dtype=bool)
    return _kernels.nnls_gram(gram, rhs, np.asarray(support, dtype=bool), 1e-10, 3 * len(rhs) + 10)


def solve_entity(
    factors: np.ndarray,
    ratings: np.ndarray,
    lam: float,
    nonnegative: bool,
    support: np.ndarray | None = None,
) -> np.ndarray:
    """argmin_x sum (r - g.x)^2 + lam |x|^2 over the observed rows of ``factors``.

    ``factors`` holds one row ``g`` per observation. With ``nonnegative`` the
    minimum is taken over ``x >= 0``.
    """
    factors = np.atleast_2d(np.asarray(factors, dtype=float))
    ratings = np.asarray(ratings, dtype=float)
    if len(ratings) == 0:
        raise ValueError("solve_entity needs at least one observation")
    gram = factors.T @ factors + lam * np.eye(factors.shape[1])
    rhs = factors.T @ ratings
    # the active set only factors sub-blocks, so only the unconstrained solve needs a regular system
    if not nonnegative and lam == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise np.linalg.LinAlgError("singular normal equations; use a regularization parameter > 0")
    try:
        if nonnegative:
            return nnls_gram(gram, rhs, support)
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "singular normal equations; use a regularization parameter > 0"
        ) from None


def training_objective(
    ratings: np.ndarray,
    observed: np.ndarray,
    file_factors: np.ndarray,
    subject_factors: np.ndarray,
    lam: float,
    mu: float = 0.0,
    file_bias: np.ndarray | None = None,
    subject_bias: np.ndarray | None = None,
    weighted: bool = False,
) -> float:
    """Squared error over training cells plus the ridge penalty on every parameter.

    With ``weighted`` each entity's squared norm is multiplied by its number
    of training cells.
    """
    pred = file_factors @ subject_factors.T
    file_sq = np.sum(file_factors**2, axis=1)
    subject_sq = np.sum(subject_factors**2, axis=1)
    if file_bias is not None:
        pred = pred + mu + file_bias[:, None] + subject_bias[None, :]
        file_sq = file_sq + file_bias**2
        subject_sq = subject_sq + subject_bias**2
    if weighted:
        file_sq = file_sq * observed.sum(axis=1)
        subject_sq = subject_sq * observed.sum(axis=0)
    resid = (ratings - pred)[observed]
    return float(resid @ resid + lam * (file_sq.sum() + subject_sq.sum()))


def update_biases(
    ratings: np.ndarray,
    observed: np.ndarray,
    interaction: np.ndarray,
    mu: float,
    file_bias: np.ndarray,
    lam: float,
    weighted: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """One coordinate pass: subject biases given file biases, then file biases.

    ``interaction`` holds ``q_i . p_u`` for every cell. Each update is the exact
    regularised minimiser of its own coordinate; entities without training
    cells get a zero bias.
    """
    resid = np.where(observed, ratings - mu - interaction, 0.0)
    n_file_obs = observed.sum(axis=1)
    n_subject_obs = observed.sum(axis=0)
    subject_den = n_subject_obs * (1 + lam) if weighted else n_subject_obs + lam
    file_den = n_file_obs * (1 + lam) if weighted else n_file_obs + lam
    subject_num = (resid - observed * file_bias[:, None]).sum(axis=0)
    subject_bias = np.divide(subject_num, subject_den, out=np.zeros_like(subject_num), where=subject_den > 0)
    file_num = (resid - observed * subject_bias[None, :]).sum(axis=1)
    file_bias = np.divide(file_num, file_den, out=np.zeros_like(file_num), where=file_den > 0)
    return subject_bias, file_bias


def average_deviations(ratings: np.ndarray, observed: np.ndarray, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Baseline biases from training averages, files first.

    Each file bias is the file's mean training deviation from ``mu``; each
    subject bias is the subject's mean deviation left after removing ``mu``
    and the file biases. Unobserved entities get 0. Returns
    ``(subject_bias, file_bias)``.
    """
    n_file = observed.sum(axis=1)
    n_subject = observed.sum(axis=0)
    dev = np.where(observed, ratings - mu, 0.0)
    file_bias = np.divide(dev.sum(axis=1), n_file, out=np.zeros(len(n_file)), where=n_file > 0)
    dev = np.where(observed, dev - file_bias[:, None], 0.0)
    subject_bias = np.divide(dev.sum(axis=0), n_subject, out=np.zeros(len(n_subject)), where=n_subject > 0)
    return subject_bias, file_bias


def init_factors(n: int, f: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random((n, f)) / np.sqrt(f)


def fit_als(matrix: UtilityMatrix, train: CellMask, config: AlsConfig = AlsConfig()) -> FactorModel:
    """Fit the configured model on the training cells of ``matrix``.

    Each round updates biases (when enabled), then all subject vectors with
    file vectors fixed, then all file vectors. Exactly ``max_iterations``
    rounds are run.
    """
    _check_dims(matrix.shape, train.dims)
    observed = train.bits
    if not observed.any():
        raise ValueError("empty training set")
    empty_rows = np.flatnonzero(~observed.any(axis=1))
    empty_cols = np.flatnonzero(~observed.any(axis=0))
    if len(empty_rows) or len(empty_cols):
        warnings.warn(
            f"{len(empty_rows)} files and {len(empty_cols)} subjects have no training cells;"
            " their factors stay at initialisation",
            ColdStartWarning,
            stacklevel=2,
        )

    ratings = matrix.cells.astype(float)
    n_files, n_subjects = matrix.shape
    f, lam, nonneg = config.n_factors, config.regularization, config.nonnegative
    weighted = config.weighted_regularization
    rng = np.random.default_rng(config.seed)
    Q = init_factors(n_files, f, rng)
    P = init_factors(n_subjects, f, rng)

    mu = 0.0
    b_file = np.zeros(n_files)
    b_subject = np.zeros(n_subjects)
    if config.use_bias:
        mu = float(ratings[observed].mean())
        if config.bias_mode == "fixed":
            b_subject, b_file = average_deviations(ratings, observed, mu)

    def objective() -> float:
        if config.use_bias:
            return training_objective(ratings, observed, Q, P, lam, mu, b_file, b_subject, weighted)
        return training_objective(ratings, observed, Q, P, lam, weighted=weighted)

    trace = [objective()]
    for it in range(config.max_iterations):
        if config.use_bias and config.bias_mode == "learned":
            b_subject, b_file = update_biases(ratings, observed, Q @ P.T, mu, b_file, lam, weighted)
        if config.use_bias:
            target = ratings - mu - b_file[:, None] - b_subject[None, :]
        else:
            target = ratings
        # the random start carries no support information
        P = _kernels.solve_side(target.T.copy(), observed.T.copy(), Q, P, lam, nonneg, weighted, it > 0)
        Q = _kernels.solve_side(target, observed, P, Q, lam, nonneg, weighted, it > 0)
        trace.append(objective())
        logger.debug("ALS round %d objective %.6g", it + 1, trace[-1])

    return FactorModel(Q, P, mu, b_file, b_subject, config, tuple(trace))


def export_factors(model: FactorModel, subject_path, file_path) -> None:
    """Write one CSV row of factor values per subject and per file."""
    np.savetxt(subject_path, model.subject_factors, delimiter=",", fmt="%.10g")
    np.savetxt(file_path, model.file_factors, delimiter=",", fmt="%.10g")


_SECTIONS = ("file_factors", "subject_factors", "mu", "file_bias", "subject_bias")


def save_model(model: FactorModel, path) -> None:
    """Persist a model as labelled CSV blocks behind a dimension header."""
    n_files, n_subjects = model.shape
    c = model.config
    lines = [
        f"#als-model,n_files={n_files},n_subjects={n_subjects},n_factors={c.n_factors}",
        f"#config,regularization={c.regularization!r},max_iterations={c.max_iterations},"
        f"nonnegative={int(c.nonnegative)},use_bias={int(c.use_bias)},seed={c.seed},"
        f"weighted_regularization={int(c.weighted_regularization)}",
    ]
    blocks = {
        "file_factors": model.file_factors,
        "subject_factors": model.subject_factors,
        "mu": np.array([[model.mu]]),
        "file_bias": model.file_bias[:, None],
        "subject_bias": model.subject_bias[:, None],
    }
    for name in _SECTIONS:
        lines.append(f"[{name}]")
        lines.extend(",".join(repr(float(v)) for v in row) for row in blocks[name])
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> FactorModel:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#als-model"):
        raise ValueError(f"{path}: not an ALS model file")
    header = dict(kv.split("=") for kv in text[0].split(",")[1:])
    cfg = dict(kv.split("=") for kv in text[1].split(",")[1:])
    config = AlsConfig(
        n_factors=int(header["n_factors"]),
        regularization=float(cfg["regularization"]),
        max_iterations=int(cfg["max_iterations"]),
        nonnegative=bool(int(cfg["nonnegative"])),
        use_bias=bool(int(cfg["use_bias"])),
        seed=int(cfg["seed"]),
        weighted_regularization=bool(int(cfg.get("weighted_regularization", 1))),
    )
    blocks: dict[str, list[list[float]]] = {}
    current = None
    for line in text[2:]:
        if line.startswith("["):
            current = line.strip("[]")
            blocks[current] = []
        elif line.strip():
            blocks[current].append([float(v) for v in line.split(",")])
    n_files, n_subjects = int(header["n_files"]), int(header["n_subjects"])
    f = config.n_factors
    Q = np.array(blocks["file_factors"]).reshape(n_files, f)
    P = np.array(blocks["subject_factors"]).reshape(n_subjects, f)
    return FactorModel(
        Q,
        P,
        float(blocks["mu"][0][0]),
        np.array(blocks["file_bias"]).reshape(n_files),
        np.array(blocks["subject_bias"]).reshape(n_subjects),
        config,
    )


def with_config(config: AlsConfig, **changes) -> AlsConfig:
    return replace(config, **changes)
