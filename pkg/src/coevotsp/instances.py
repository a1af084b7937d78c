"""TSP instances: the substrate of the instance population.

An instance is a list of integer city coordinates on a bounded grid.
This module provides random generation, the uniform crossover/mutation
variation operators (a whole (x, y) pair is the unit of variation), and
file I/O (native JSON plus read-only TSPLIB EUC_2D import).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, StructuralError


@dataclass(frozen=True)
class InstanceSpace:
    """The space of all instances with a fixed city count and grid bound."""

    n: int
    grid: int

    def __post_init__(self):
        if self.n < 4:
            raise StructuralError(f"instance space needs n >= 4, got {self.n}")
        if self.grid < self.n:
            raise StructuralError(
                f"grid bound {self.grid} too small for n={self.n}"
            )


@dataclass(frozen=True)
class TspInstance:
    """An immutable TSP instance: n cities with integer coordinates in [0, grid)."""

    id: str
    n: int
    grid: int
    cities: tuple[tuple[int, int], ...]
    _coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.cities) != self.n:
            raise StructuralError(
                f"instance {self.id}: declared n={self.n} but "
                f"{len(self.cities)} cities given"
            )
        for i, (x, y) in enumerate(self.cities):
            if not (0 <= x < self.grid and 0 <= y < self.grid):
                raise StructuralError(
                    f"instance {self.id}: city {i} at ({x}, {y}) outside "
                    f"[0, {self.grid})"
                )
        object.__setattr__(
            self, "_coords", np.asarray(self.cities, dtype=np.float64)
        )

    @property
    def coords(self) -> np.ndarray:
        """City coordinates as an (n, 2) float array."""
        return self._coords

    @property
    def content_key(self) -> str:
        """Digest of (n, grid, cities); identical geometry shares one key.

        Used for memoizing solver runs and exact optima, so duplicated
        instances (distinct ids, same cities) are evaluated once.
        """
        payload = json.dumps([self.n, self.grid, list(map(list, self.cities))])
        return hashlib.sha1(payload.encode()).hexdigest()[:16]

    def is_degenerate(self) -> bool:
        """True if all cities coincide (tour optimum 0, PEO undefined)."""
        return len(set(self.cities)) == 1

    def with_id(self, new_id: str) -> "TspInstance":
        return TspInstance(new_id, self.n, self.grid, self.cities)


def distance_matrix(ins: TspInstance) -> np.ndarray:
    """Pairwise Euclidean distances, unrounded doubles."""
    c = ins.coords
    return np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)


def gen_random_instance(
    space: InstanceSpace, rng: np.random.Generator, id: str = ""
) -> TspInstance:
    """Draw an instance uniformly from the space.

    Every coordinate is an independent uniform draw from [0, grid).
    Coincident cities are allowed, but the degenerate all-coincident
    instance is resampled (its optimum is 0 and PEO is undefined).
    """
    while True:
        pts = rng.integers(0, space.grid, size=(space.n, 2))
        cities = tuple((int(x), int(y)) for x, y in pts)
        ins = TspInstance(id or "", space.n, space.grid, cities)
        if not ins.is_degenerate():
            return ins


def crossover_instances(
    a: TspInstance,
    b: TspInstance,
    cro_ins: float,
    rng: np.random.Generator,
) -> tuple[TspInstance, TspInstance]:
    """Uniform crossover over city slots.

    With probability ``cro_ins`` each offspring slot i takes city i from
    one parent (coin-flipped per slot) and the second offspring takes the
    complementary choice; otherwise the offspring are copies of the
    parents. Offspring ids are empty and assigned by the caller.
    """
    if a.n != b.n or a.grid != b.grid:
        raise StructuralError(
            f"crossover parents from different spaces: "
            f"(n={a.n}, grid={a.grid}) vs (n={b.n}, grid={b.grid})"
        )
    if rng.random() >= cro_ins:
        return a.with_id(""), b.with_id("")
    take_a = rng.random(a.n) < 0.5
    c1 = tuple(a.cities[i] if take_a[i] else b.cities[i] for i in range(a.n))
    c2 = tuple(b.cities[i] if take_a[i] else a.cities[i] for i in range(a.n))
    return (
        TspInstance("", a.n, a.grid, c1),
        TspInstance("", a.n, a.grid, c2),
    )


def mutate_instance(
    ins: TspInstance, mu_ins: float, rng: np.random.Generator
) -> TspInstance:
    """Replace each city slot, with probability ``mu_ins``, by a fresh
    uniform coordinate pair. Degenerate results are re-mutated."""
    while True:
        replace = rng.random(ins.n) < mu_ins
        fresh = rng.integers(0, ins.grid, size=(ins.n, 2))
        cities = tuple(
            (int(fresh[i][0]), int(fresh[i][1])) if replace[i] else ins.cities[i]
            for i in range(ins.n)
        )
        out = TspInstance("", ins.n, ins.grid, cities)
        if not out.is_degenerate():
            return out


# ---------------------------------------------------------------------------
# File I/O

def write_instance(ins: TspInstance, path: str | Path) -> None:
    """Write the native single-object JSON format."""
    doc = {"n": ins.n, "grid": ins.grid, "cities": [list(c) for c in ins.cities]}
    Path(path).write_text(json.dumps(doc) + "\n")


def read_instance(path: str | Path, id: str = "") -> TspInstance:
    """Read the native JSON format, validating counts and bounds."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    for key in ("n", "grid", "cities"):
        if key not in doc:
            raise ParseError(f"{path}: missing field '{key}'")
    if not isinstance(doc["n"], int) or not isinstance(doc["grid"], int):
        raise ParseError(f"{path}: fields 'n' and 'grid' must be integers")
    cities = doc["cities"]
    if len(cities) != doc["n"]:
        raise ParseError(
            f"{path}: field 'cities' has {len(cities)} entries, "
            f"declared n={doc['n']}"
        )
    try:
        tup = tuple((int(x), int(y)) for x, y in cities)
    except (TypeError, ValueError):
        raise ParseError(f"{path}: field 'cities' must be [x, y] pairs")
    try:
        return TspInstance(id or path.stem, doc["n"], doc["grid"], tup)
    except StructuralError as e:
        raise ParseError(f"{path}: {e}")


def read_tsplib(path: str | Path, id: str = "") -> TspInstance:
    """Import a TSPLIB EUC_2D file (NODE_COORD_SECTION), read-only.

    Coordinates are truncated to integers; the grid bound is the smallest
    power of ten above the largest coordinate (TSPLIB files carry no bound).
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    dim = None
    coords: list[tuple[int, int]] = []
    in_coords = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line == "EOF":
            in_coords = False
            continue
        if in_coords:
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(
                    f"{path}: line {lineno}: expected 'index x y', got {line!r}"
                )
            try:
                coords.append((int(float(parts[1])), int(float(parts[2]))))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric coordinate")
            continue
        if ":" in line:
            key, _, value = line.partition(":")
            key, value = key.strip(), value.strip()
            if key == "DIMENSION":
                dim = int(value)
            elif key == "EDGE_WEIGHT_TYPE" and value != "EUC_2D":
                raise ParseError(
                    f"{path}: line {lineno}: only EUC_2D is supported, "
                    f"got {value}"
                )
        elif line == "NODE_COORD_SECTION":
            in_coords = True
    if dim is None:
        raise ParseError(f"{path}: missing DIMENSION header")
    if len(coords) != dim:
        raise ParseError(
            f"{path}: DIMENSION={dim} but {len(coords)} coordinate rows"
        )
    top = max(max(x, y) for x, y in coords)
    grid = 10
    while grid <= top:
        grid *= 10
    return TspInstance(id or path.stem, dim, grid, tuple(coords))
