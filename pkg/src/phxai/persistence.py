"""Vietoris-Rips persistence for H1 and H2 over Z/2.

A simplex enters the filtration at its diameter (max pairwise distance
among its vertices), so birth and death values are in the same length units
as the input coordinates. Pairs are computed by boundary-matrix column
reduction; `reduce` works per dimension with the clearing optimization and
`reduce_naive` is the slow textbook oracle used to cross-check it. Columns
are kept as Python integers used as bitsets, which makes the Z/2 column
addition a single XOR.

Classes still alive at the truncation radius are dropped: downstream
histograms have finite axes, so unpaired classes can never be featurized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

DEFAULT_MAX_RADIUS = 35.8  # birth cutoff + persistence cutoff of the H1 histogram window

_ENUMERATION_BUDGET = 3_000_000


class SimplexBudgetError(RuntimeError):
    """The cloud would generate more simplices than the configured budget."""


@dataclass(frozen=True)
class Simplex:
    vertices: tuple[int, ...]
    value: float

    @property
    def dimension(self) -> int:
        return len(self.vertices) - 1


@dataclass(frozen=True)
class PersistencePair:
    dimension: int
    birth: float
    death: float
    birth_simplex: int  # global filtration index
    death_simplex: int

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@dataclass
class PersistenceDiagram:
    dimension: int
    pairs: list[PersistencePair]

    def births(self) -> np.ndarray:
        return np.array([p.birth for p in self.pairs])

    def deaths(self) -> np.ndarray:
        return np.array([p.death for p in self.pairs])

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class RepresentativeCycle:
    """Vertex support of a cycle realizing a persistence pair.

    `simplices` holds the chain itself (tuples of vertex ids, all of the
    pair's dimension); its Z/2 boundary is empty.
    """

    pair: PersistencePair
    vertex_set: frozenset[int]
    simplices: tuple[tuple[int, ...], ...]


class Filtration:
    """Simplices of dimension <= max_dim sorted by (value, dimension, vertices).

    Storage is columnar per dimension; `simplex(g)` and iteration expose the
    usual object view. Faces of every simplex precede it in the global order.
    """

    def __init__(self, verts_by_dim, values_by_dim, max_dim: int, max_radius: float,
                 n_points: int):
        self._verts = verts_by_dim    # dim -> (k, dim+1) int array, sorted
        self._values = values_by_dim  # dim -> (k,) float array
        self.max_dim = max_dim
        self.max_radius = max_radius
        self.n_points = n_points
        self._build_global_order()
        self._faces: dict[int, np.ndarray] = {}
        self._reduction = None

    def _build_global_order(self):
        dims = np.concatenate([np.full(len(self._values[p]), p, dtype=np.int32)
                               for p in range(self.max_dim + 1)])
        values = np.concatenate([self._values[p] for p in range(self.max_dim + 1)])
        pad = np.full((len(dims), self.max_dim + 1), -1, dtype=np.int64)
        row = 0
        for p in range(self.max_dim + 1):
            k = len(self._values[p])
            pad[row:row + k, :p + 1] = self._verts[p]
            row += k
        keys = [pad[:, c] for c in range(self.max_dim, -1, -1)] + [dims, values]
        order = np.lexsort(keys)
        self._global_dim = dims[order]
        self._global_value = values[order]
        # per-dim position of each global index, and the inverse map
        pos_in_dim = np.concatenate([np.arange(len(self._values[p]), dtype=np.int64)
                                     for p in range(self.max_dim + 1)])
        self._global_pos = pos_in_dim[order]
        self._global_of = {}
        for p in range(self.max_dim + 1):
            sel = np.flatnonzero(self._global_dim == p)
            g = np.empty(len(self._values[p]), dtype=np.int64)
            g[self._global_pos[sel]] = sel
            self._global_of[p] = g

    def __len__(self) -> int:
        return len(self._global_dim)

    def count(self, dim: int) -> int:
        return len(self._values[dim])

    def simplex(self, g: int) -> Simplex:
        p = int(self._global_dim[g])
        pos = int(self._global_pos[g])
        return Simplex(tuple(int(v) for v in self._verts[p][pos]),
                       float(self._values[p][pos]))

    def __iter__(self):
        return (self.simplex(g) for g in range(len(self)))

    def global_index(self, dim: int, pos: int) -> int:
        return int(self._global_of[dim][pos])

    def value(self, dim: int, pos: int) -> float:
        return float(self._values[dim][pos])

    def faces(self, dim: int) -> np.ndarray:
        """(k, dim+1) array: positions (within dim-1) of each simplex's facets."""
        if dim not in self._faces:
            self._faces[dim] = self._compute_faces(dim)
        return self._faces[dim]

    def _compute_faces(self, dim: int) -> np.ndarray:
        verts = self._verts[dim]
        k = len(verts)
        if dim == 0 or k == 0:
            return np.zeros((k, 0), dtype=np.int64)
        sub_verts = self._verts[dim - 1]
        n = self.n_points
        def encode(v):
            key = v[:, 0].astype(np.int64)
            for c in range(1, v.shape[1]):
                key = key * n + v[:, c]
            return key
        sub_keys = encode(sub_verts)
        sub_order = np.argsort(sub_keys, kind="stable")
        sub_sorted = sub_keys[sub_order]
        out = np.empty((k, dim + 1), dtype=np.int64)
        for drop in range(dim + 1):
            face = np.delete(verts, drop, axis=1)
            loc = np.searchsorted(sub_sorted, encode(face))
            out[:, drop] = sub_order[loc]
        return out


@lru_cache(maxsize=64)
def _combo_array(n: int, k: int) -> np.ndarray:
    return np.array(list(combinations(range(n), k)), dtype=np.int64).reshape(-1, k)


def build_rips(dist: np.ndarray, max_dim: int, max_radius: float,
               max_simplices: int = _ENUMERATION_BUDGET) -> Filtration:
    """Enumerate every simplex of dimension <= max_dim whose diameter is
    <= max_radius, sorted filtration-ready.

    Raises SimplexBudgetError instead of silently truncating when the
    candidate count exceeds `max_simplices`.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if max_dim not in (2, 3):
        raise ValueError("max_dim must be 2 or 3")
    if max_radius <= 0:
        raise ValueError("max_radius must be positive")
    total_candidates = sum(math.comb(n, k) for k in range(2, max_dim + 2))
    if total_candidates > max_simplices:
        raise SimplexBudgetError(
            f"{n} points imply up to {total_candidates} simplices,"
            f" over the budget of {max_simplices}")

    verts_by_dim = {0: np.arange(n, dtype=np.int64)[:, None]}
    values_by_dim = {0: np.zeros(n)}
    for p in range(1, max_dim + 1):
        combos = _combo_array(n, p + 1)
        if len(combos) == 0:
            verts_by_dim[p] = combos
            values_by_dim[p] = np.zeros(0)
            continue
        diam = np.zeros(len(combos))
        for a in range(p + 1):
            for b in range(a + 1, p + 1):
                np.maximum(diam, dist[combos[:, a], combos[:, b]], out=diam)
        keep = diam <= max_radius
        verts, values = combos[keep], diam[keep]
        order = np.lexsort([verts[:, c] for c in range(p, -1, -1)] + [values])
        verts_by_dim[p] = verts[order]
        values_by_dim[p] = values[order]
    return Filtration(verts_by_dim, values_by_dim, max_dim, float(max_radius), n)


# ---------------------------------------------------------------------------
# Reduction

def _pairs_from_block(filtration: Filtration, p: int, skip: set[int]):
    """Reduce the dimension-p column block; rows are (p-1)-simplex positions.

    Columns are stored lazily: a column that claims a free pivot on sight is
    kept as its face tuple, and the int bitset is only materialized when a
    later column collides with it and needs the XOR. In Rips filtrations the
    vast majority of columns never collide, so this skips most big-int work.

    Returns the (pivot row -> column) pairing and a materializer for the
    reduced column bitset of any paired column.
    """
    face_lists = np.sort(filtration.faces(p), axis=1).tolist()
    pivot_to_col: dict[int, int] = {}
    stored: dict[int, object] = {}

    def materialize(j: int) -> int:
        v = stored[j]
        if not isinstance(v, int):
            col = 0
            for r in v:
                col |= 1 << r
            stored[j] = col = int(col)
            return col
        return v

    for j, fr in enumerate(face_lists):
        if j in skip:
            continue
        low = fr[-1]
        k = pivot_to_col.get(low)
        if k is None:
            pivot_to_col[low] = j
            stored[j] = fr
            continue
        col = 0
        for r in fr:
            col |= 1 << r
        while True:
            col ^= materialize(k)
            if not col:
                break
            low = col.bit_length() - 1
            k = pivot_to_col.get(low)
            if k is None:
                pivot_to_col[low] = j
                stored[j] = col
                break
    return pivot_to_col, materialize


def _bits(x: int):
    out = []
    while x:
        low = x & -x
        out.append(low.bit_length() - 1)
        x ^= low
    return out


def reduce(filtration: Filtration) -> list[PersistencePair]:
    """Persistence pairs of dimensions 1 and 2, zero-persistence pairs dropped.

    Works dimension by dimension from the top so that pivots found in the
    (p+1)-block clear known-zero columns of the p-block before they are
    reduced. The reduced death columns are cached on the filtration for
    representative-cycle extraction.
    """
    if filtration._reduction is not None:
        return list(filtration._reduction[0])
    pairs = []
    chains: dict[tuple[int, int], tuple[int, ...]] = {}
    skip: set[int] = set()
    for p in range(filtration.max_dim, 1, -1):
        pivot_to_col, materialize = _pairs_from_block(filtration, p, skip)
        for low, j in pivot_to_col.items():
            birth = filtration.value(p - 1, low)
            death = filtration.value(p, j)
            if death > birth:
                pair = PersistencePair(p - 1, birth, death,
                                       filtration.global_index(p - 1, low),
                                       filtration.global_index(p, j))
                pairs.append(pair)
                chains[(pair.dimension, pair.death_simplex)] = tuple(_bits(materialize(j)))
        skip = set(pivot_to_col.keys())
    pairs.sort(key=lambda q: (q.dimension, q.birth, q.death, q.death_simplex))
    filtration._reduction = (pairs, chains)
    return list(pairs)


def reduce_naive(filtration: Filtration) -> list[PersistencePair]:
    """Textbook left-to-right reduction over the full boundary matrix.

    Slow test oracle: no clearing, no per-dimension blocking; columns are
    plain sets of global row indices.
    """
    m = len(filtration)
    columns: list[set[int]] = []
    for g in range(m):
        p = int(filtration._global_dim[g])
        if p == 0:
            columns.append(set())
            continue
        pos = int(filtration._global_pos[g])
        columns.append({filtration.global_index(p - 1, int(r))
                        for r in filtration.faces(p)[pos]})
    low_of: dict[int, int] = {}
    pairs = []
    for j in range(m):
        col = columns[j]
        while col:
            low = max(col)
            k = low_of.get(low)
            if k is None:
                break
            col ^= columns[k]
        if col:
            low = max(col)
            low_of[low] = j
            dim = int(filtration._global_dim[low])
            birth = float(filtration._global_value[low])
            death = float(filtration._global_value[j])
            if dim in (1, 2) and death > birth:
                pairs.append(PersistencePair(dim, birth, death, low, j))
    pairs.sort(key=lambda q: (q.dimension, q.birth, q.death, q.death_simplex))
    return pairs


def diagram(pairs, dimension: int) -> PersistenceDiagram:
    """Pairs of one dimension, in stable (birth, death) order."""
    if dimension not in (1, 2):
        raise ValueError("dimension must be 1 or 2")
    kept = sorted((p for p in pairs if p.dimension == dimension),
                  key=lambda q: (q.birth, q.death))
    return PersistenceDiagram(dimension, kept)


def representative_cycle(filtration: Filtration, pair: PersistencePair) -> RepresentativeCycle:
    """The cycle killed at the pair's death column: the reduced column's chain.

    An approximation to a tight representative: it is born by the pair's
    birth time and becomes a boundary exactly at the death time.
    """
    reduce(filtration)
    chains = filtration._reduction[1]
    key = (pair.dimension, pair.death_simplex)
    if key not in chains:
        raise KeyError(f"pair {pair} not found in the reduction record")
    positions = chains[key]
    verts = filtration._verts[pair.dimension]
    simplices = tuple(tuple(int(v) for v in verts[pos]) for pos in positions)
    vertex_set = frozenset(v for s in simplices for v in s)
    return RepresentativeCycle(pair, vertex_set, simplices)


def diagrams_to_records(pairs) -> list[dict]:
    return [{"dim": p.dimension, "birth": p.birth, "death": p.death} for p in pairs]
