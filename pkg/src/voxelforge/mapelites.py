"""Diversity-first archive search over voxel morphologies.

The archive grid discretizes the four normalized structural metrics into
`bins_per_metric` levels each. Placement is first-come-keeps: a candidate only
enters its bin when that bin is empty, so the archive accumulates diverse
structures without any fitness pressure at this stage. An opt-in replacement
mode overwrites occupants by composite score for comparison runs; it is never
the default.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, RepairExhausted
from .genome import Genome, genome_from_dict, mutate, random_genome, validate
from .ioutil import atomic_write_text
from .morphometrics import MorphoMetrics, compute_all

__all__ = [
    "Archive", "ArchiveEntry", "bin_of", "portfolio_mutate", "run", "random_genome",
]

BinKey = tuple[int, int, int, int]

# Per-voxel resample alone explores the metric space far too slowly: random
# 5x5 genomes cluster into a handful of bins and small flips stay near the
# parent's bin, stalling the archive around a dozen occupied bins. The macro
# operators jump along individual metric axes (material mix, body size,
# mirror structure, actuator placement) so distant bins become reachable
# within the iteration budget.
N_MACRO_OPS = 10


def _macro_mutate(g: Genome, rng: np.random.Generator) -> Genome | None:
    """One structural edit; returns None when the result is unusable."""
    cells = list(g.cells)
    w, h = g.width, g.height
    op = int(rng.integers(N_MACRO_OPS))
    if op == 0:  # repaint one material as another
        present = sorted({c for c in cells if c != 0})
        src = present[int(rng.integers(len(present)))]
        dst = int(rng.integers(1, 5))
        cells = [dst if c == src else c for c in cells]
    elif op == 1:  # monoculture: repaint every voxel to one material
        dst = int(rng.integers(1, 5))
        cells = [dst if c else 0 for c in cells]
    elif op == 2:  # mirror one half onto the other
        half = (w + 1) // 2
        keep_left = bool(rng.integers(2))
        for r in range(h):
            for c in range(half, w):
                mirrored = w - 1 - c
                if keep_left:
                    cells[r * w + c] = cells[r * w + mirrored]
                else:
                    cells[r * w + mirrored] = cells[r * w + c]
    elif op == 3:  # erode up to 3 voxels
        occupied = [i for i, c in enumerate(cells) if c]
        for i in rng.permutation(len(occupied))[:int(rng.integers(1, 4))]:
            cells[occupied[i]] = 0
    elif op == 4:  # dilate: fill up to 3 empty cells
        empties = [i for i, c in enumerate(cells) if c == 0]
        if not empties:
            return None
        for i in rng.permutation(len(empties))[:int(rng.integers(1, 4))]:
            cells[empties[i]] = int(rng.integers(1, 5))
    elif op == 5:  # swap an actuator with a passive voxel
        actuators = [i for i, c in enumerate(cells) if c in (3, 4)]
        passive = [i for i, c in enumerate(cells) if c in (1, 2)]
        if not actuators or not passive:
            return None
        a = actuators[int(rng.integers(len(actuators)))]
        p = passive[int(rng.integers(len(passive)))]
        cells[a], cells[p] = cells[p], cells[a]
    elif op == 6:  # collapse actuation onto a single voxel
        occupied = [i for i, c in enumerate(cells) if c]
        keep = occupied[int(rng.integers(len(occupied)))]
        filler = int(rng.integers(1, 3))
        cells = [filler if (c and i != keep) else c for i, c in enumerate(cells)]
        cells[keep] = int(rng.integers(3, 5))
    elif op == 7:  # resample one row or column wholesale
        if rng.integers(2):
            r = int(rng.integers(h))
            for c in range(w):
                cells[r * w + c] = int(rng.integers(5))
        else:
            c = int(rng.integers(w))
            for r in range(h):
                cells[r * w + c] = int(rng.integers(5))
    elif op == 8:  # crop to a random subrectangle
        r0, r1 = sorted(rng.integers(0, h, size=2))
        c0, c1 = sorted(rng.integers(0, w, size=2))
        for r in range(h):
            for c in range(w):
                if not (r0 <= r <= r1 and c0 <= c <= c1):
                    cells[r * w + c] = 0
    else:  # clear one half
        half = w // 2
        clear_left = bool(rng.integers(2))
        for r in range(h):
            for c in range(w):
                if (c < half) if clear_left else (c >= w - half):
                    cells[r * w + c] = 0
    child = Genome(w, h, tuple(cells))
    return child if validate(child).ok else None


def portfolio_mutate(g: Genome, rng_seed: int, per_voxel_rate: float = 0.1,
                     macro_prob: float = 0.7) -> Genome:
    """Offspring operator for the archive search: with probability macro_prob
    apply one structural macro edit, otherwise the plain per-voxel resample.
    Deterministic in (g, rng_seed); raises RepairExhausted after 100 tries."""
    rng = np.random.default_rng(rng_seed)
    for _ in range(100):
        if rng.random() < macro_prob:
            child = _macro_mutate(g, rng)
            if child is not None:
                return child
        else:
            try:
                return mutate(g, rng_seed=int(rng.integers(2 ** 63)),
                              per_voxel_rate=per_voxel_rate)
            except RepairExhausted:
                continue
    raise RepairExhausted(f"portfolio mutation failed 100 times on {g.width}x{g.height}")


def bin_of(metrics: MorphoMetrics, bins_per_metric: int) -> BinKey:
    """Discretize the four normalized metrics; value 1.0 lands in the top bin."""
    key = []
    for value in metrics.normalized():
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"normalized metric {value} outside [0, 1]")
        key.append(min(int(value * bins_per_metric), bins_per_metric - 1))
    return tuple(key)


@dataclass(frozen=True)
class ArchiveEntry:
    bin: BinKey
    genome: Genome
    metrics: MorphoMetrics
    iteration: int
    parent_bin: BinKey | None = None


@dataclass
class Archive:
    bins_per_metric: int
    entries: dict[BinKey, ArchiveEntry]
    fill_curve: list[int]          # occupied-bin count; index 0 = after seeding
    skipped_mutations: int = 0

    @property
    def occupied(self) -> int:
        return len(self.entries)

    @property
    def total_bins(self) -> int:
        return self.bins_per_metric ** 4

    def sorted_entries(self) -> list[ArchiveEntry]:
        return [self.entries[key] for key in sorted(self.entries)]

    def to_json_dict(self) -> dict:
        return {
            "bins_per_metric": self.bins_per_metric,
            "entries": [
                {
                    "bin": list(e.bin),
                    "genome": e.genome.to_dict(),
                    "metrics": e.metrics.as_dict(),
                    "iteration": e.iteration,
                    "parent_bin": list(e.parent_bin) if e.parent_bin else None,
                }
                for e in self.sorted_entries()
            ],
            "fill_curve": self.fill_curve,
            "skipped_mutations": self.skipped_mutations,
        }

    def save(self, path: str | Path) -> None:
        atomic_write_text(Path(path), json.dumps(self.to_json_dict(), indent=1))

    @classmethod
    def from_json_dict(cls, payload: dict) -> "Archive":
        try:
            bins = int(payload["bins_per_metric"])
            entries = {}
            for item in payload["entries"]:
                key = tuple(int(i) for i in item["bin"])
                parent = item.get("parent_bin")
                entries[key] = ArchiveEntry(
                    bin=key,
                    genome=genome_from_dict(item["genome"]),
                    metrics=MorphoMetrics.from_dict(item["metrics"]),
                    iteration=int(item["iteration"]),
                    parent_bin=tuple(int(i) for i in parent) if parent else None,
                )
            return cls(
                bins_per_metric=bins,
                entries=entries,
                fill_curve=[int(v) for v in payload.get("fill_curve", [])],
                skipped_mutations=int(payload.get("skipped_mutations", 0)),
            )
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed archive: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "Archive":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"unreadable archive {path}: {exc}") from None
        return cls.from_json_dict(payload)


def run(init_pop_size: int, iterations: int, width: int = 5, height: int = 5,
        mutation_rate: float = 0.1, seed: int = 0, bins_per_metric: int = 3,
        symmetry_axis: str = "vertical", macro_prob: float = 0.7,
        replace_by_composite: bool = False) -> Archive:
    """Seed the archive with random genomes, then mutate random occupants.

    Offspring land in their metric bin only if it is empty (default mode).
    Mutations that exhaust their repair budget are skipped and counted.
    Deterministic per seed; the fill curve records occupancy after seeding
    (index 0) and after every iteration. macro_prob=0 reduces the offspring
    operator to the plain per-voxel resample.
    """
    if init_pop_size < 1:
        raise ValueError("init_pop_size must be >= 1")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    rng = np.random.default_rng(seed)
    archive = Archive(bins_per_metric=bins_per_metric, entries={}, fill_curve=[])

    def place(genome: Genome, iteration: int, parent: BinKey | None) -> None:
        metrics = compute_all(genome, symmetry_axis=symmetry_axis)
        key = bin_of(metrics, bins_per_metric)
        entry = ArchiveEntry(bin=key, genome=genome, metrics=metrics,
                             iteration=iteration, parent_bin=parent)
        if key not in archive.entries:
            archive.entries[key] = entry
        elif replace_by_composite and metrics.composite > archive.entries[key].metrics.composite:
            archive.entries[key] = entry

    for _ in range(init_pop_size):
        place(random_genome(width, height, rng), iteration=0, parent=None)
    archive.fill_curve.append(archive.occupied)

    for iteration in range(1, iterations + 1):
        keys = list(archive.entries.keys())
        parent_key = keys[int(rng.integers(len(keys)))]
        parent = archive.entries[parent_key]
        try:
            child = portfolio_mutate(parent.genome, rng_seed=int(rng.integers(2 ** 63)),
                                     per_voxel_rate=mutation_rate, macro_prob=macro_prob)
        except RepairExhausted:
            archive.skipped_mutations += 1
            archive.fill_curve.append(archive.occupied)
            continue
        place(child, iteration=iteration, parent=parent_key)
        archive.fill_curve.append(archive.occupied)

    return archive
