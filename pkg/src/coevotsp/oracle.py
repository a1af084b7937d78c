"""Exact TSP optima (Held-Karp + brute force) and the excess-over-optimum
metric.

Held-Karp is O(n^2 * 2^n) time and O(n * 2^n) memory; the default cap
n_max = 18 keeps a single instance under ~40 MB and a couple of seconds.
Optima are memoized per instance content, and can be imported from a
JSON file for instances beyond the cap.
"""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import CapacityError, ParseError, StructuralError
from .instances import TspInstance, distance_matrix

DEFAULT_N_MAX = 18
BRUTE_FORCE_N_MAX = 9


@dataclass(frozen=True)
class OptimumRecord:
    instance_id: str
    length: float
    method: str  # held_karp | brute_force | external


@njit(cache=True)
def _held_karp(D):
    n = D.shape[0]
    m = n - 1  # cities 1..n-1; city 0 is the fixed start/end
    size = 1 << m
    dp = np.full((size, m), np.inf)
    for j in range(m):
        dp[1 << j, j] = D[0, j + 1]
    for mask in range(1, size):
        if mask & (mask - 1) == 0:
            continue
        for j in range(m):
            bj = 1 << j
            if mask & bj == 0:
                continue
            pm = mask ^ bj
            best = np.inf
            for i in range(m):
                if pm & (1 << i) == 0:
                    continue
                v = dp[pm, i] + D[i + 1, j + 1]
                if v < best:
                    best = v
            dp[mask, j] = best
    best = np.inf
    full = size - 1
    for j in range(m):
        v = dp[full, j] + D[j + 1, 0]
        if v < best:
            best = v
    return best


def held_karp_opt(ins: TspInstance, n_max: int = DEFAULT_N_MAX) -> float:
    """Exact minimum cycle length by dynamic programming over subsets."""
    if ins.n < 4:
        raise StructuralError(f"instance {ins.id}: need n >= 4, got {ins.n}")
    if ins.n > n_max:
        raise CapacityError(
            f"instance {ins.id}: n={ins.n} exceeds the exact-oracle cap "
            f"n_max={n_max}; import external optima instead"
        )
    return float(_held_karp(distance_matrix(ins)))


def brute_force_opt(ins: TspInstance) -> float:
    """Exact minimum by enumerating all (n-1)! directed tours."""
    if ins.n < 4:
        raise StructuralError(f"instance {ins.id}: need n >= 4, got {ins.n}")
    if ins.n > BRUTE_FORCE_N_MAX:
        raise CapacityError(
            f"instance {ins.id}: n={ins.n} exceeds the brute-force cap "
            f"{BRUTE_FORCE_N_MAX}"
        )
    D = distance_matrix(ins)
    n = ins.n
    rest = list(range(1, n))
    best = np.inf
    # Edges are accumulated left-to-right along the path from city 0, the
    # same association the dynamic program uses, so the minima agree
    # bit-for-bit. Both cycle directions are enumerated for the same reason.
    for perm in itertools.permutations(rest):
        total = D[0, perm[0]]
        for a, b in zip(perm, perm[1:]):
            total += D[a, b]
        total += D[perm[-1], 0]
        if total < best:
            best = total
    return float(best)


def peo(tour_length: float, opt_length: float) -> float:
    """Percentage by which a tour exceeds the optimum, clamped at 0."""
    if opt_length <= 0:
        raise StructuralError(
            "optimum must be positive (degenerate all-coincident instance?)"
        )
    # The slack is relative: solver and oracle sum the same edges in
    # different orders, and at coordinate scale 1e6 the rounding gap
    # between two associations of a ~1e7 sum can exceed an absolute 1e-9.
    if tour_length < opt_length - 1e-9 * max(1.0, opt_length):
        raise StructuralError(
            f"tour length {tour_length} below claimed optimum {opt_length}"
        )
    return max(0.0, (tour_length - opt_length) / opt_length * 100.0)


class ExactOracle:
    """Memoizing optimum store (compute-once per instance content).

    External optima imported from a JSON id -> length map take precedence
    and are the only way to cover instances above n_max.
    """

    def __init__(self, n_max: int = DEFAULT_N_MAX):
        self.n_max = n_max
        self._cache: dict[str, OptimumRecord] = {}
        self._external: dict[str, float] = {}
        self._lock = threading.Lock()
        self.computed = 0  # distinct instances solved exactly

    def import_optima(self, path: str | Path) -> int:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
        if not isinstance(doc, dict):
            raise ParseError(f"{path}: expected an id -> length object")
        for k, v in doc.items():
            self._external[k] = float(v)
        return len(doc)

    def optimum(self, ins: TspInstance) -> float:
        ext = self._external.get(ins.id)
        if ext is not None:
            return ext
        key = ins.content_key
        with self._lock:
            rec = self._cache.get(key)
        if rec is not None:
            return rec.length
        length = held_karp_opt(ins, self.n_max)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = OptimumRecord(ins.id, length, "held_karp")
                self.computed += 1
        return length
