"""Synthetic reproducibility matrices built from subject types and file blocks.

With ``n`` subject types the files are cut into ``log2(n)`` contiguous blocks.
A type is the binary code of its index: bit ``b`` (most significant first)
says whether every file of block ``b`` is an error for subjects of that type.
Enumerating all codes gives every variation pattern exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix import UtilityMatrix

STANDARD_TYPES = (2, 4, 8, 16, 32, 64)


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and n & (n - 1) == 0


@dataclass(frozen=True)
class SyntheticSpec:
    n_types: int
    n_files: int = 100
    n_subjects: int = 100
    # Kept for interface uniformity; generation is deterministic.
    seed: int = 0

    def __post_init__(self) -> None:
        if not _is_power_of_two(self.n_types):
            raise ValueError(f"n_types must be a power of two >= 2, got {self.n_types}")
        if self.n_types > self.n_subjects:
            raise ValueError("n_types cannot exceed n_subjects")
        if self.n_blocks > self.n_files:
            raise ValueError("log2(n_types) cannot exceed n_files")

    @property
    def n_blocks(self) -> int:
        return self.n_types.bit_length() - 1


def type_pattern(type_id: int, n_blocks: int) -> np.ndarray:
    """Binary expansion of ``type_id`` on ``n_blocks`` bits, MSB first."""
    if not 0 <= type_id < 2**n_blocks:
        raise ValueError(f"type_id {type_id} out of range for {n_blocks} blocks")
    return np.array([(type_id >> (n_blocks - 1 - b)) & 1 for b in range(n_blocks)], dtype=np.uint8)


def group_labels(n_items: int, n_groups: int, spread: bool = False) -> np.ndarray:
    """Contiguous group index per item; sizes differ by at most one.

    By default the larger groups come first. With ``spread=True`` the larger
    groups are interleaved evenly (item j goes to group floor(j*g/n)), which
    keeps the ones fraction balanced when the group count does not divide the
    item count.
    """
    if spread:
        return (np.arange(n_items) * n_groups) // n_items
    sizes = np.full(n_groups, n_items // n_groups)
    sizes[: n_items % n_groups] += 1
    return np.repeat(np.arange(n_groups), sizes)


def generate_synthetic(spec: SyntheticSpec) -> UtilityMatrix:
    subject_type = group_labels(spec.n_subjects, spec.n_types, spread=True)
    file_block = group_labels(spec.n_files, spec.n_blocks)
    codes = np.stack([type_pattern(t, spec.n_blocks) for t in range(spec.n_types)])
    cells = codes[subject_type][:, file_block].T
    return UtilityMatrix(cells, name=f"synthetic-{spec.n_types}")


def standard_datasets(n_files: int = 100, n_subjects: int = 100) -> list[UtilityMatrix]:
    """The six synthetic matrices with 2 to 64 subject types."""
    return [generate_synthetic(SyntheticSpec(n, n_files, n_subjects)) for n in STANDARD_TYPES]
