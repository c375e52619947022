"""Voxel-grid robot morphologies: representation, validation, mutation, serialization.

A robot body is a W x H grid of voxel type codes, stored row-major with row 0
at the top. A body is usable when it has at least one voxel, all voxels form a
single edge-connected (4-neighbour) component, and at least one voxel is an
actuator.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator

import numpy as np

from .errors import ParseError, RepairExhausted, SizeTooLarge


class VoxelType(IntEnum):
    EMPTY = 0
    RIGID = 1
    SOFT = 2
    H_ACTUATOR = 3
    V_ACTUATOR = 4


VALID_CODES = frozenset(int(v) for v in VoxelType)
ACTUATOR_CODES = frozenset((int(VoxelType.H_ACTUATOR), int(VoxelType.V_ACTUATOR)))

# Exhaustive enumeration is capped at 5^9 assignments.
ENUMERATION_CELL_LIMIT = 9

MUTATION_REPAIR_ATTEMPTS = 100
RANDOM_GENOME_ATTEMPTS = 1000


@dataclass(frozen=True)
class Genome:
    """Immutable voxel grid. `cells` is row-major, row 0 = top of the robot."""

    width: int
    height: int
    cells: tuple[int, ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.width}x{self.height}")
        if len(self.cells) != self.width * self.height:
            raise ValueError(
                f"cell count {len(self.cells)} does not match {self.width}x{self.height}"
            )
        bad = [c for c in self.cells if c not in VALID_CODES]
        if bad:
            raise ValueError(f"unknown voxel codes {sorted(set(bad))}; palette is 0..4")
        # normalize to plain ints so genomes compare/serialize uniformly
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))

    def at(self, row: int, col: int) -> int:
        return self.cells[row * self.width + col]

    def rows(self) -> list[list[int]]:
        w = self.width
        return [list(self.cells[r * w:(r + 1) * w]) for r in range(self.height)]

    def grid(self) -> np.ndarray:
        """(height, width) integer array view of the cells."""
        return np.asarray(self.cells, dtype=np.int64).reshape(self.height, self.width)

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "cells": list(self.cells)}


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[str, ...] = ()


VIOLATION_EMPTY = "no non-empty voxel"
VIOLATION_DISCONNECTED = "non-empty voxels are not a single 4-connected component"
VIOLATION_NO_ACTUATOR = "no actuator voxel (codes 3 or 4)"


def validate(g: Genome) -> ValidationResult:
    """Check the three usability invariants; violations are reported, not raised."""
    occupied = [i for i, c in enumerate(g.cells) if c != 0]
    violations = []
    if not occupied:
        return ValidationResult(False, (VIOLATION_EMPTY,))
    if not _is_connected(g, occupied):
        violations.append(VIOLATION_DISCONNECTED)
    if not any(g.cells[i] in ACTUATOR_CODES for i in occupied):
        violations.append(VIOLATION_NO_ACTUATOR)
    return ValidationResult(not violations, tuple(violations))


def _is_connected(g: Genome, occupied: list[int]) -> bool:
    """Flood fill over 4-neighbour adjacency from the first occupied cell."""
    w, h = g.width, g.height
    target = len(occupied)
    seen = {occupied[0]}
    queue = deque((occupied[0],))
    cells = g.cells
    while queue:
        i = queue.popleft()
        r, c = divmod(i, w)
        if c > 0 and cells[i - 1] and (i - 1) not in seen:
            seen.add(i - 1)
            queue.append(i - 1)
        if c + 1 < w and cells[i + 1] and (i + 1) not in seen:
            seen.add(i + 1)
            queue.append(i + 1)
        if r > 0 and cells[i - w] and (i - w) not in seen:
            seen.add(i - w)
            queue.append(i - w)
        if r + 1 < h and cells[i + w] and (i + w) not in seen:
            seen.add(i + w)
            queue.append(i + w)
    return len(seen) == target


def mutate(g: Genome, rng_seed: int, per_voxel_rate: float = 0.1) -> Genome:
    """Resample each cell to a uniform random code with probability `per_voxel_rate`.

    Invalid offspring are discarded and the whole mutation is redrawn, up to
    MUTATION_REPAIR_ATTEMPTS times. Deterministic in (g, rng_seed, rate).
    """
    result = validate(g)
    if not result.ok:
        raise ValueError(f"cannot mutate invalid genome: {result.violations}")
    if not 0.0 <= per_voxel_rate <= 1.0:
        raise ValueError(f"per_voxel_rate must be a probability, got {per_voxel_rate}")
    rng = np.random.default_rng(rng_seed)
    n = len(g.cells)
    for _ in range(MUTATION_REPAIR_ATTEMPTS):
        flip = rng.random(n) < per_voxel_rate
        draws = rng.integers(0, 5, size=n)
        cells = tuple(int(d) if f else c for c, f, d in zip(g.cells, flip, draws))
        offspring = Genome(g.width, g.height, cells)
        if validate(offspring).ok:
            return offspring
    raise RepairExhausted(
        f"no valid offspring in {MUTATION_REPAIR_ATTEMPTS} attempts "
        f"(rate={per_voxel_rate}, grid={g.width}x{g.height})"
    )


def random_genome(width: int, height: int, rng: np.random.Generator | int) -> Genome:
    """Uniform random codes per cell, redrawn until valid (bounded retries)."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    for _ in range(RANDOM_GENOME_ATTEMPTS):
        cells = tuple(int(c) for c in rng.integers(0, 5, size=width * height))
        g = Genome(width, height, cells)
        if validate(g).ok:
            return g
    raise RepairExhausted(
        f"no valid random genome in {RANDOM_GENOME_ATTEMPTS} draws at {width}x{height}"
    )


def enumerate_all(width: int, height: int) -> Iterator[Genome]:
    """Yield every valid genome of the given size once, in lexicographic cell order."""
    n = width * height
    if n > ENUMERATION_CELL_LIMIT:
        raise SizeTooLarge(
            f"{width}x{height} has {n} cells; exhaustive enumeration capped at "
            f"{ENUMERATION_CELL_LIMIT}"
        )
    for cells in itertools.product(range(5), repeat=n):
        g = Genome(width, height, cells)
        if validate(g).ok:
            yield g


def serialize(g: Genome) -> str:
    """Text form: `W H` header line, then H rows of W space-separated codes."""
    lines = [f"{g.width} {g.height}"]
    lines.extend(" ".join(str(c) for c in row) for row in g.rows())
    return "\n".join(lines) + "\n"


def deserialize(text: str) -> Genome:
    """Parse the text form; raises ParseError with the offending position."""
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("empty genome text", line=1)
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError("header must be two integers `W H`", line=1, field="header")
    try:
        width, height = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError("header must be two integers `W H`", line=1, field="header") from None
    if width < 1 or height < 1:
        raise ParseError(f"non-positive dimensions {width}x{height}", line=1, field="header")
    if len(lines) - 1 != height:
        raise ParseError(
            f"expected {height} rows, found {len(lines) - 1}", line=len(lines), field="rows"
        )
    cells: list[int] = []
    for r in range(height):
        fields = lines[1 + r].split()
        if len(fields) != width:
            raise ParseError(
                f"expected {width} values, found {len(fields)}", line=r + 2, field=f"row {r}"
            )
        for c, tok in enumerate(fields):
            try:
                code = int(tok)
            except ValueError:
                raise ParseError(
                    f"not an integer: {tok!r}", line=r + 2, field=f"column {c}"
                ) from None
            if code not in VALID_CODES:
                raise ParseError(
                    f"voxel code {code} outside palette 0..4", line=r + 2, field=f"column {c}"
                )
            cells.append(code)
    return Genome(width, height, tuple(cells))


def genome_from_dict(d: dict) -> Genome:
    """Parse the JSON object form {"width": W, "height": H, "cells": [...]}."""
    try:
        width, height, cells = int(d["width"]), int(d["height"]), list(d["cells"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed genome object: {exc}", field="genome") from None
    for i, c in enumerate(cells):
        if not isinstance(c, int) or c not in VALID_CODES:
            raise ParseError(f"voxel code {c!r} outside palette 0..4", field=f"cells[{i}]")
    if len(cells) != width * height:
        raise ParseError(
            f"cell count {len(cells)} does not match {width}x{height}", field="cells"
        )
    if width < 1 or height < 1:
        raise ParseError(f"non-positive dimensions {width}x{height}", field="genome")
    return Genome(width, height, tuple(cells))
