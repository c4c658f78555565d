"""Sierpinski gasket geometry: cells, vertices, self-similar measure, graph Laplacians.

The gasket is the attractor of the three midpoint contractions of a triangle.
Level-m cells are indexed by words over {1,2,3} in lexicographic order, and
vertices are identified by exact integer barycentric triples over 2^m, so the
whole construction is deterministic and free of floating-point dedup issues.
The planar embedding (corner coordinates) is only used for plotting and for
evaluating user-supplied continuous functions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ResourceLimitError
from .serialize import write_csv

LETTERS = (1, 2, 3)
DEFAULT_LEVEL_CAP = 8

#: default corner embedding; nothing numeric depends on this choice
CORNER_COORDS = ((0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3.0) / 2.0))

Word = tuple[int, ...]


def cell_words(level: int) -> list[Word]:
    """All level-`level` cell words in canonical (lexicographic) order."""
    return list(itertools.product(LETTERS, repeat=level))


def word_index(word: Word) -> int:
    """Lexicographic rank of a word among words of its length."""
    rank = 0
    for letter in word:
        rank = rank * 3 + (letter - 1)
    return rank


@dataclass(frozen=True)
class CellAddress:
    """Address of an N-cell; the empty word addresses the whole gasket."""

    word: Word

    def __post_init__(self):
        if any(letter not in LETTERS for letter in self.word):
            raise DomainError(f"cell word letters must be in {LETTERS}: {self.word}")

    @property
    def level(self) -> int:
        return len(self.word)

    def ancestor(self, n: int) -> "CellAddress":
        if n > self.level:
            raise DomainError(f"no level-{n} ancestor of a level-{self.level} cell")
        return CellAddress(self.word[:n])


def _corner_triple(word: Word, corner: int, level: int) -> tuple[int, int, int]:
    # barycentric numerator of F_word(corner) over denominator 2^level
    num = [0, 0, 0]
    num[corner - 1] = 1
    k = 0
    for letter in reversed(word):
        num[letter - 1] += 1 << k
        k += 1
    scale = 1 << (level - len(word))
    return (num[0] * scale, num[1] * scale, num[2] * scale)


@dataclass
class VertexSet:
    """Level-m vertex complex with exact combinatorics.

    ``bary`` holds integer barycentric triples over 2^m (rows sum to 2^m),
    ``cells[c]`` the three vertex ids of cell c (corner order 1,2,3), and
    ``vertex_cells[v]`` the indices of the cells containing vertex v.
    """

    level: int
    bary: np.ndarray
    coords: np.ndarray
    boundary: tuple[int, int, int]
    cells: np.ndarray
    vertex_cells: tuple[tuple[int, ...], ...]
    interior: np.ndarray = field(repr=False)
    _triple_ids: dict = field(repr=False, default_factory=dict)
    _interior_pos: np.ndarray = field(repr=False, default=None)

    @property
    def n_vertices(self) -> int:
        return self.bary.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_interior(self) -> int:
        return self.interior.shape[0]

    def vertex_id(self, triple) -> int:
        return self._triple_ids[tuple(triple)]

    def interior_position(self, vertex_id: int) -> int:
        """Row of a vertex in the Dirichlet (interior) ordering, or -1."""
        return int(self._interior_pos[vertex_id])

    def cell_range(self, word: Word) -> tuple[int, int]:
        """Contiguous range of level-m cell indices under the N-cell `word`."""
        n = len(word)
        if n > self.level:
            raise DomainError("cell level exceeds vertex-set level")
        width = 3 ** (self.level - n)
        start = word_index(word) * width
        return start, start + width

    def cell_corner_ids(self, word: Word) -> tuple[int, int, int]:
        return tuple(
            self.vertex_id(_corner_triple(word, c, self.level)) for c in LETTERS
        )

    def closed_cell_vertex_ids(self, word: Word) -> np.ndarray:
        start, stop = self.cell_range(word)
        return np.unique(self.cells[start:stop].ravel())

    def cell_interior_positions(self, word: Word) -> np.ndarray:
        """Dirichlet rows of vertices strictly inside the closed cell `word`.

        The three cell corners are excluded: an eigenvector supported on the
        closed cell vanishes there, and excluding them makes the supports of
        vectors localized in adjacent cells exactly disjoint.
        """
        closed = self.closed_cell_vertex_ids(word)
        corners = set(self.cell_corner_ids(word))
        pos = self._interior_pos[[v for v in closed if v not in corners]]
        return np.sort(pos[pos >= 0])


def build_vertices(m: int, cap: int = DEFAULT_LEVEL_CAP) -> VertexSet:
    """Construct the level-m vertex set; ids are deterministic across runs."""
    if m < 0:
        raise DomainError(f"level must be nonnegative, got {m}")
    if m > cap:
        raise ResourceLimitError(f"level {m} exceeds cap {cap}")
    words = cell_words(m)
    corner_triples = [
        tuple(_corner_triple(w, c, m) for c in LETTERS) for w in words
    ]
    triples = sorted({t for cell in corner_triples for t in cell})
    ids = {t: i for i, t in enumerate(triples)}

    n = len(triples)
    bary = np.array(triples, dtype=np.int64)
    a = np.array(CORNER_COORDS)
    coords = (bary.astype(float) @ a) / float(1 << m)
    cells = np.array(
        [[ids[t] for t in cell] for cell in corner_triples], dtype=np.int64
    )
    containing: list[list[int]] = [[] for _ in range(n)]
    for c, cell in enumerate(corner_triples):
        for t in cell:
            containing[ids[t]].append(c)
    boundary = tuple(
        ids[tuple((1 << m) * int(t == i) for t in range(3))] for i in range(3)
    )
    interior = np.array([v for v in range(n) if v not in boundary], dtype=np.int64)
    interior_pos = np.full(n, -1, dtype=np.int64)
    interior_pos[interior] = np.arange(interior.size)

    vs = VertexSet(
        level=m,
        bary=bary,
        coords=coords,
        boundary=boundary,
        cells=cells,
        vertex_cells=tuple(tuple(c) for c in containing),
        interior=interior,
        _triple_ids=ids,
        _interior_pos=interior_pos,
    )
    expected = (3 ** (m + 1) + 3) // 2
    if vs.n_vertices != expected:
        raise ResourceLimitError(
            f"vertex count {vs.n_vertices} != {expected} at level {m}"
        )
    return vs


@dataclass
class SelfSimilarMeasure:
    """The balanced self-similar probability measure sampled on vertices.

    Each level-m cell contributes 3^-(m+1) to each of its three corners, so a
    vertex in k cells carries weight k * 3^-(m+1) and the weights sum to one.
    """

    level: int
    weights: np.ndarray
    cell_counts: np.ndarray
    vertices: VertexSet

    @property
    def interior_weight(self) -> float:
        """Common weight of interior vertices (each lies in two cells)."""
        return 2.0 * 3.0 ** (-(self.level + 1))

    def interior_weights(self) -> np.ndarray:
        return self.weights[self.vertices.interior]

    def cell_mass(self, word: Word) -> float:
        start, stop = self.vertices.cell_range(word)
        return (stop - start) * 3.0 ** (-self.level)


def build_measure(vertices: VertexSet) -> SelfSimilarMeasure:
    counts = np.array([len(c) for c in vertices.vertex_cells], dtype=np.int64)
    weights = counts * 3.0 ** (-(vertices.level + 1))
    return SelfSimilarMeasure(
        level=vertices.level, weights=weights, cell_counts=counts, vertices=vertices
    )


@dataclass
class SimpleFunction:
    """A function constant on level-N cells, one value per cell in word order."""

    level: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (3 ** self.level,):
            raise DomainError(
                f"need {3 ** self.level} cell values, got {self.values.shape}"
            )

    def value_on_word(self, word: Word) -> float:
        if len(word) < self.level:
            raise DomainError("cell coarser than the function's level")
        return float(self.values[word_index(word[: self.level])])

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def min_value(self) -> float:
        return float(np.min(self.values))

    @property
    def max_value(self) -> float:
        return float(np.max(self.values))

    def scaled(self, factor: float) -> "SimpleFunction":
        return SimpleFunction(self.level, self.values * factor)

    def shifted(self, offset: float) -> "SimpleFunction":
        return SimpleFunction(self.level, self.values + offset)


def constant_function(value: float, level: int = 0) -> SimpleFunction:
    return SimpleFunction(level, np.full(3 ** level, float(value)))


def integrate_simple(f: SimpleFunction, k: int = 1) -> float:
    """Integral of f^k against the measure, in closed form."""
    if k < 0:
        raise DomainError(f"power must be nonnegative, got {k}")
    return math.fsum(float(v) ** k for v in f.values) * 3.0 ** (-f.level)


def _per_cell_values(f, vertices: VertexSet) -> np.ndarray:
    """Value of f on each level-m cell (constant there when f is simple)."""
    if f.level > vertices.level:
        raise DomainError(
            f"simple function at level {f.level} finer than vertex set level "
            f"{vertices.level}"
        )
    width = 3 ** (vertices.level - f.level)
    return np.repeat(f.values, width)


def effective_multiplier(f, vertices: VertexSet) -> np.ndarray:
    """Per-vertex diagonal g with sum_x g(x) u(x) v(x) = integral of f*u*v.

    A vertex shared by two cells takes each cell's value with that cell's
    measure contribution 3^-(m+1); this makes the discrete integral of a
    simple function exact.
    """
    m = vertices.level
    g = np.zeros(vertices.n_vertices)
    if isinstance(f, SimpleFunction):
        cell_vals = _per_cell_values(f, vertices)
        np.add.at(g, vertices.cells.ravel(), np.repeat(cell_vals, 3))
        g *= 3.0 ** (-(m + 1))
    else:
        weights = build_measure(vertices).weights
        g = weights * np.asarray(f(vertices.coords[:, 0], vertices.coords[:, 1]))
    return g


def vertex_values(f, vertices: VertexSet) -> np.ndarray:
    """Pointwise samples of f at vertices (cell-averaged for simple f)."""
    if isinstance(f, SimpleFunction):
        acc = np.zeros(vertices.n_vertices)
        cell_vals = _per_cell_values(f, vertices)
        np.add.at(acc, vertices.cells.ravel(), np.repeat(cell_vals, 3))
        counts = np.array([len(c) for c in vertices.vertex_cells], dtype=float)
        return acc / counts
    return np.asarray(f(vertices.coords[:, 0], vertices.coords[:, 1]), dtype=float)


RENORMALIZATION_BASE = 1.5  # the renormalized operator is (3/2) 5^m L_m


def renormalization_factor(m: int) -> float:
    return RENORMALIZATION_BASE * 5.0 ** m


@dataclass
class GraphLaplacian:
    """Dirichlet graph Laplacian on interior vertices (diagonal 4, -1 per edge)."""

    level: int
    matrix: np.ndarray
    renormalized: bool
    factor: float
    vertices: VertexSet

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_dirichlet_laplacian(
    vertices: VertexSet, renormalize: bool = False
) -> GraphLaplacian:
    m = vertices.level
    if m < 1:
        raise DomainError("no interior vertices at level 0, Dirichlet matrix empty")
    n = vertices.n_vertices
    adj = np.zeros((n, n))
    for cell in vertices.cells:
        a, b, c = (int(v) for v in cell)
        adj[a, b] = adj[b, a] = 1.0
        adj[a, c] = adj[c, a] = 1.0
        adj[b, c] = adj[c, b] = 1.0
    lap = 4.0 * np.eye(n) - adj
    interior = vertices.interior
    matrix = lap[np.ix_(interior, interior)]
    factor = renormalization_factor(m) if renormalize else 1.0
    if renormalize:
        matrix = matrix * factor
    return GraphLaplacian(
        level=m,
        matrix=matrix,
        renormalized=renormalize,
        factor=factor,
        vertices=vertices,
    )


def vertices_to_csv(vertices: VertexSet, measure: SelfSimilarMeasure, path) -> None:
    """Debug dump: vertex_id,x,y,weight,is_boundary."""
    rows = []
    boundary = set(vertices.boundary)
    for v in range(vertices.n_vertices):
        rows.append(
            (
                v,
                float(vertices.coords[v, 0]),
                float(vertices.coords[v, 1]),
                float(measure.weights[v]),
                int(v in boundary),
            )
        )
    write_csv(path, ("vertex_id", "x", "y", "weight", "is_boundary"), rows)
