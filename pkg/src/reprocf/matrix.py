"""Binary reproducibility matrices, train/test cell masks and their CSV formats.

Rows are files in creation order and columns are subjects. A cell holds 1
when the file differed between two execution conditions, 0 otherwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

PathLike = Union[str, Path]


class MatrixFormatError(ValueError):
    """Raised when a matrix or mask file cannot be parsed or holds bad values."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UtilityMatrix:
    cells: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ValueError(f"matrix must be 2-D and non-empty, got shape {cells.shape}")
        bad = np.argwhere((cells != 0) & (cells != 1))
        if len(bad):
            i, j = bad[0]
            raise MatrixFormatError(f"non-binary value {cells[i, j]!r} at row {i}, column {j}")
        object.__setattr__(self, "cells", _frozen(cells.astype(np.uint8)))

    @property
    def n_files(self) -> int:
        return self.cells.shape[0]

    @property
    def n_subjects(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UtilityMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.cells, other.cells))

    def __hash__(self) -> int:
        return hash((self.shape, self.cells.tobytes()))


@dataclass(frozen=True, eq=False)
class CellMask:
    """Set of (file, subject) cells, stored as a boolean grid.

    The training set of a split is a ``CellMask``; the test set is its
    complement over the same dimensions.
    """

    bits: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError("mask must be 2-D")
        object.__setattr__(self, "bits", _frozen(bits.astype(bool)))

    @classmethod
    def empty(cls, dims: tuple[int, int]) -> CellMask:
        return cls(np.zeros(dims, dtype=bool))

    @classmethod
    def full(cls, dims: tuple[int, int]) -> CellMask:
        return cls(np.ones(dims, dtype=bool))

    @classmethod
    def from_cells(cls, dims: tuple[int, int], cells: Iterable[tuple[int, int]]) -> CellMask:
        bits = np.zeros(dims, dtype=bool)
        for i, j in cells:
            if not (0 <= i < dims[0] and 0 <= j < dims[1]):
                raise IndexError(f"cell ({i}, {j}) outside {dims[0]}x{dims[1]} mask")
            if bits[i, j]:
                raise ValueError(f"duplicate cell ({i}, {j})")
            bits[i, j] = True
        return cls(bits)

    @property
    def dims(self) -> tuple[int, int]:
        return self.bits.shape

    def cells(self) -> list[tuple[int, int]]:
        """Member cells in row-major order."""
        return [(int(i), int(j)) for i, j in np.argwhere(self.bits)]

    def complement(self) -> CellMask:
        return CellMask(~self.bits)

    def union(self, other: CellMask) -> CellMask:
        _check_dims(self.dims, other.dims)
        return CellMask(self.bits | other.bits)

    def column_counts(self) -> np.ndarray:
        return self.bits.sum(axis=0)

    def __len__(self) -> int:
        return int(self.bits.sum())

    def __contains__(self, cell: tuple[int, int]) -> bool:
        i, j = cell
        return bool(self.bits[i, j])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CellMask):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.dims, np.packbits(self.bits).tobytes()))


def _check_dims(a: tuple[int, int], b: tuple[int, int]) -> None:
    if tuple(a) != tuple(b):
        raise ValueError(f"dimension mismatch: {a[0]}x{a[1]} vs {b[0]}x{b[1]}")


def split(train: CellMask) -> tuple[CellMask, CellMask]:
    """Return the (train, test) pair; test is the complement of train."""
    return train, train.complement()


def validate_time_constraint(mask: CellMask) -> bool:
    """True iff every column of ``mask`` is a prefix of the file order.

    Equivalently, no training cell sits below a test cell in any column.
    """
    bits = mask.bits
    counts = bits.sum(axis=0)
    prefix = np.arange(bits.shape[0])[:, None] < counts[None, :]
    return bool(np.array_equal(bits, prefix))


def training_ratio(mask: CellMask) -> float:
    n_files, n_subjects = mask.dims
    return len(mask) / (n_files * n_subjects)


def load_matrix_csv(path: PathLike) -> UtilityMatrix:
    """Read a headerless 0/1 CSV, one row per file in creation order.

    A sidecar ``<basename>.meta`` with a ``name=`` line sets the dataset name;
    otherwise the file stem is used.
    """
    path = Path(path)
    rows: list[list[int]] = []
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not v.strip() for v in record):
                continue
            if rows and len(record) != len(rows[0]):
                raise MatrixFormatError(
                    f"{path}:{lineno}: expected {len(rows[0])} columns, found {len(record)}"
                )
            row = []
            for col, value in enumerate(record):
                v = value.strip()
                if v not in ("0", "1"):
                    raise MatrixFormatError(
                        f"{path}:{lineno}: non-binary value {v!r} at row {len(rows)}, column {col}"
                    )
                row.append(int(v))
            rows.append(row)
    if not rows:
        raise MatrixFormatError(f"{path}: empty matrix file")
    name = path.stem
    meta = path.with_suffix(".meta")
    if meta.exists():
        for line in meta.read_text().splitlines():
            key, _, value = line.partition("=")
            if key.strip() == "name":
                name = value.strip()
    return UtilityMatrix(np.array(rows, dtype=np.uint8), name=name)


def save_matrix_csv(matrix: UtilityMatrix, path: PathLike, write_meta: bool = False) -> None:
    path = Path(path)
    body = "\n".join(",".join(str(int(v)) for v in row) for row in matrix.cells)
    path.write_text(body + "\n")
    if write_meta:
        path.with_suffix(".meta").write_text(
            f"name={matrix.name}\nrow_order=modification_time\n"
        )


def load_mask_csv(path: PathLike, dims: tuple[int, int]) -> CellMask:
    """Read ``file_index,subject_index`` lines (0-based, any order)."""
    path = Path(path)
    cells = []
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not v.strip() for v in record):
                continue
            if len(record) != 2:
                raise MatrixFormatError(f"{path}:{lineno}: expected 'file,subject', got {record}")
            try:
                cells.append((int(record[0]), int(record[1])))
            except ValueError:
                raise MatrixFormatError(f"{path}:{lineno}: non-integer index in {record}") from None
    try:
        return CellMask.from_cells(dims, cells)
    except (IndexError, ValueError) as exc:
        raise MatrixFormatError(f"{path}: {exc}") from None


def save_mask_csv(mask: CellMask, path: PathLike) -> None:
    lines = [f"{i},{j}" for i, j in mask.cells()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
