"""Plain-text PGM/PPM pictures of utility matrices and prediction overlays.

One pixel per cell, file 0 on the top row. Errors (1) are white.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .matrix import CellMask, UtilityMatrix, _check_dims

BLACK = (0, 0, 0)
WHITE = (255, 255, 255)
GREEN = (0, 200, 0)
YELLOW = (255, 215, 0)
GRAY = (128, 128, 128)
RED = (220, 0, 0)

# training negative/positive, then test TP, FN, TN, FP
PALETTE = {
    "train_negative": BLACK,
    "train_positive": WHITE,
    "true_positive": GREEN,
    "false_negative": YELLOW,
    "true_negative": GRAY,
    "false_positive": RED,
}


def write_pgm(path, gray: np.ndarray, maxval: int = 255) -> None:
    """Write a 2-D integer array as a plain (P2) graymap."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError("gray image must be 2-D")
    h, w = gray.shape
    lines = ["P2", f"{w} {h}", str(maxval)]
    lines.extend(" ".join(str(int(v)) for v in row) for row in gray)
    Path(path).write_text("\n".join(lines) + "\n")


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) array as a plain (P3) pixmap with maxval 255."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("rgb must be (H, W, 3)")
    h, w = rgb.shape[:2]
    lines = ["P3", f"{w} {h}", "255"]
    lines.extend(" ".join(str(int(v)) for v in row.ravel()) for row in rgb)
    Path(path).write_text("\n".join(lines) + "\n")


def read_pnm(path) -> np.ndarray:
    """Read a plain P2/P3 file back into an array (for checks and tests)."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    magic, w, h = tokens[0], int(tokens[1]), int(tokens[2])
    values = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    if magic == "P2":
        return values.reshape(h, w)
    if magic == "P3":
        return values.reshape(h, w, 3)
    raise ValueError(f"unsupported magic {magic!r}")


def matrix_image(matrix: UtilityMatrix) -> np.ndarray:
    return matrix.cells.astype(np.int64) * 255


def overlay_image(matrix: UtilityMatrix, train: CellMask, predictions: np.ndarray) -> np.ndarray:
    """RGB array coloring training cells by value and test cells by outcome."""
    predictions = np.asarray(predictions)
    _check_dims(matrix.shape, train.dims)
    _check_dims(matrix.shape, predictions.shape)
    truth = matrix.cells.astype(bool)
    pred = predictions.astype(bool)
    is_train = train.bits
    test = ~is_train
    rgb = np.zeros(matrix.shape + (3,), dtype=np.int64)
    layers = [
        (is_train & ~truth, BLACK),
        (is_train & truth, WHITE),
        (test & truth & pred, GREEN),
        (test & truth & ~pred, YELLOW),
        (test & ~truth & ~pred, GRAY),
        (test & ~truth & pred, RED),
    ]
    for where, color in layers:
        rgb[where] = color
    return rgb


def render_matrix(matrix: UtilityMatrix, path) -> None:
    write_pgm(path, matrix_image(matrix))


def render_overlay(matrix: UtilityMatrix, train: CellMask, predictions: np.ndarray, path) -> None:
    write_ppm(path, overlay_image(matrix, train, predictions))
