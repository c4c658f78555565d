"""Symbols, compressed operators, matrix functional calculus, spectrum maps.

A symbol acts as multiplication by p(., lam_n) on the eigenspace of lam_n, so
in an eigenbasis the compressed operator P p(x, -Delta) P has column blocks
assembled per eigenspace with that eigenspace's eigenvalue, then symmetrized.
Integrals against the measure are weighted vertex sums, which are exact for
products of simple functions with vectors localized at the same cell level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .decimation import EigenvalueRecord, SpectrumTable
from .errors import ConvergenceError, DomainError, StructuralError
from .eigenbasis import EigenspaceBundle, LocalizedBasis
from .gasket import (
    SelfSimilarMeasure,
    SimpleFunction,
    VertexSet,
    Word,
    cell_words,
    effective_multiplier,
    vertex_values,
)
from .serialize import write_csv, write_json

SYMMETRY_TOL = 1e-12
BLOCK_TOL = 1e-10
CONSTANT_KINDS = ("riesz", "bessel", "constant")


@dataclass
class SymbolSpec:
    """A symbol p(x, lam) with optional declared limit and lower bound.

    kind is one of "constant" (pure function of lam), "multiplication"
    (pure function of x), "separable" (q(lam) + chi(x)) or "tabulated"
    (a simple function per eigenvalue).  limit_q, when declared, may be a
    scalar, a SimpleFunction, or a callable on planar coordinates.
    """

    kind: str
    name: str
    p_lambda: Callable[[float], float] | None = None
    chi: object = None
    entries: tuple = ()
    limit_q: object = None
    lower_bound: float | None = None


def riesz_symbol(beta: float) -> SymbolSpec:
    if beta <= 0:
        raise DomainError(f"riesz exponent must be positive, got {beta}")
    return SymbolSpec(
        kind="constant",
        name=f"riesz(beta={beta:g})",
        p_lambda=lambda lam: 1.0 + lam ** (-beta),
        limit_q=1.0,
        lower_bound=1.0,
    )


def bessel_symbol(beta: float) -> SymbolSpec:
    if beta <= 0:
        raise DomainError(f"bessel exponent must be positive, got {beta}")
    return SymbolSpec(
        kind="constant",
        name=f"bessel(beta={beta:g})",
        p_lambda=lambda lam: 1.0 + (1.0 + lam) ** (-beta),
        limit_q=1.0,
        lower_bound=1.0,
    )


def constant_symbol(
    p: Callable[[float], float],
    limit: float | None = None,
    lower_bound: float | None = None,
    name: str = "constant",
) -> SymbolSpec:
    return SymbolSpec(
        kind="constant", name=name, p_lambda=p, limit_q=limit, lower_bound=lower_bound
    )


def multiplication_symbol(f, name: str | None = None) -> SymbolSpec:
    lower = f.min_value if isinstance(f, SimpleFunction) else None
    return SymbolSpec(
        kind="multiplication",
        name=name or "multiplication",
        chi=f,
        limit_q=f,
        lower_bound=lower,
    )


def separable_symbol(
    q_lambda: Callable[[float], float],
    limit: float,
    chi,
    lower_bound: float | None = None,
    name: str = "separable",
) -> SymbolSpec:
    if isinstance(chi, SimpleFunction):
        limit_q = chi.shifted(limit)
    elif limit == 0.0:
        limit_q = chi
    else:
        limit_q = lambda x, y, _chi=chi, _l=limit: _l + np.asarray(_chi(x, y))
    return SymbolSpec(
        kind="separable",
        name=name,
        p_lambda=q_lambda,
        chi=chi,
        limit_q=limit_q,
        lower_bound=lower_bound,
    )


def tabulated_symbol(entries, limit_q=None, lower_bound=None) -> SymbolSpec:
    entries = tuple(sorted(((float(l), f) for l, f in entries), key=lambda e: e[0]))
    return SymbolSpec(
        kind="tabulated",
        name="tabulated",
        entries=entries,
        limit_q=limit_q,
        lower_bound=lower_bound,
    )


_MAKERS = {
    "riesz": lambda params: riesz_symbol(params["beta"]),
    "bessel": lambda params: bessel_symbol(params["beta"]),
    "constant": lambda params: constant_symbol(**params),
    "multiplication": lambda params: multiplication_symbol(**params),
    "separable": lambda params: separable_symbol(**params),
    "tabulated": lambda params: tabulated_symbol(**params),
}


def make_symbol(kind: str, **params) -> SymbolSpec:
    if kind not in _MAKERS:
        raise DomainError(f"unknown symbol kind {kind!r}")
    return _MAKERS[kind](params)


def _tabulated_lookup(symbol: SymbolSpec, lam: float) -> SimpleFunction:
    for elam, f in symbol.entries:
        if abs(elam - lam) <= 1e-9 * max(1.0, abs(lam)):
            return f
    raise DomainError(f"tabulated symbol has no entry for eigenvalue {lam}")


def symbol_multiplier(
    symbol: SymbolSpec, lam: float, measure: SelfSimilarMeasure
) -> np.ndarray:
    """Per-vertex diagonal realizing integration of p(., lam) u v d-measure."""
    vertices = measure.vertices
    if symbol.kind == "constant":
        return symbol.p_lambda(lam) * measure.weights
    if symbol.kind == "multiplication":
        return effective_multiplier(symbol.chi, vertices)
    if symbol.kind == "separable":
        return symbol.p_lambda(lam) * measure.weights + effective_multiplier(
            symbol.chi, vertices
        )
    if symbol.kind == "tabulated":
        return effective_multiplier(_tabulated_lookup(symbol, lam), vertices)
    raise DomainError(f"unknown symbol kind {symbol.kind!r}")


def symbol_vertex_values(
    symbol: SymbolSpec, lam: float, vertices: VertexSet
) -> np.ndarray:
    """Pointwise samples of p(., lam) at the vertices."""
    n = vertices.n_vertices
    if symbol.kind == "constant":
        return np.full(n, symbol.p_lambda(lam))
    if symbol.kind == "multiplication":
        return vertex_values(symbol.chi, vertices)
    if symbol.kind == "separable":
        return symbol.p_lambda(lam) + vertex_values(symbol.chi, vertices)
    if symbol.kind == "tabulated":
        return vertex_values(_tabulated_lookup(symbol, lam), vertices)
    raise DomainError(f"unknown symbol kind {symbol.kind!r}")


def limit_vertex_values(limit_q, vertices: VertexSet) -> np.ndarray:
    if isinstance(limit_q, (int, float)):
        return np.full(vertices.n_vertices, float(limit_q))
    return vertex_values(limit_q, vertices)


def limit_range(limit_q, vertices: VertexSet) -> tuple[float, float]:
    if isinstance(limit_q, (int, float)):
        return float(limit_q), float(limit_q)
    if isinstance(limit_q, SimpleFunction):
        return limit_q.min_value, limit_q.max_value
    vals = vertex_values(limit_q, vertices)
    return float(np.min(vals)), float(np.max(vals))


def symbol_sup_distance(symbol: SymbolSpec, lam: float, vertices: VertexSet) -> float:
    """Sampled sup distance between p(., lam) and the declared limit."""
    if symbol.limit_q is None:
        raise DomainError(f"symbol {symbol.name} declares no uniform limit")
    p_vals = symbol_vertex_values(symbol, lam, vertices)
    q_vals = limit_vertex_values(symbol.limit_q, vertices)
    return float(np.max(np.abs(p_vals - q_vals)))


@dataclass
class SplitInfo:
    """Column layout of a basis built from a localized split."""

    cell_level: int
    cell_blocks: list[tuple[Word, slice]]
    nonlocalized: slice


@dataclass
class BasisSelection:
    """An ordered subset of eigenbasis vectors, grouped by eigenspace."""

    level: int
    vertices: VertexSet = field(repr=False)
    columns: np.ndarray = field(repr=False)
    records: list[EigenvalueRecord]
    group_slices: list[slice]
    keys: list[tuple[str, int]]
    split: SplitInfo | None = None

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    @property
    def lambdas(self) -> np.ndarray:
        lam = np.empty(self.dim)
        for rec, sl in zip(self.records, self.group_slices):
            lam[sl] = rec.value
        return lam


def selection_from_bundles(bundles: list[EigenspaceBundle]) -> BasisSelection:
    if not bundles:
        raise DomainError("empty eigenbasis selection")
    level = bundles[0].level
    if any(b.level != level for b in bundles):
        raise StructuralError("mixed graph levels in one basis selection")
    columns = np.hstack([b.vectors for b in bundles])
    records, slices, keys = [], [], []
    start = 0
    for b in bundles:
        stop = start + b.dim
        records.append(b.record)
        slices.append(slice(start, stop))
        keys.extend((b.record.key, i) for i in range(b.dim))
        start = stop
    return BasisSelection(
        level=level,
        vertices=bundles[0].vertices,
        columns=columns,
        records=records,
        group_slices=slices,
        keys=keys,
    )


def selection_from_split(split: LocalizedBasis) -> BasisSelection:
    """Basis ordered per-cell localized vectors first, remainder last."""
    bundle = split.bundle
    blocks, cell_blocks = [], []
    start = 0
    for word in cell_words(split.cell_level):
        vecs = split.per_cell[word]
        blocks.append(vecs)
        cell_blocks.append((word, slice(start, start + vecs.shape[1])))
        start += vecs.shape[1]
    blocks.append(split.nonlocalized)
    nonloc = slice(start, start + split.nonlocalized.shape[1])
    columns = np.hstack(blocks)
    keys = [(bundle.record.key, i) for i in range(columns.shape[1])]
    return BasisSelection(
        level=bundle.level,
        vertices=bundle.vertices,
        columns=columns,
        records=[bundle.record],
        group_slices=[slice(0, columns.shape[1])],
        keys=keys,
        split=SplitInfo(
            cell_level=split.cell_level,
            cell_blocks=cell_blocks,
            nonlocalized=nonloc,
        ),
    )


@dataclass
class CompressedOperator:
    """Symmetric matrix of a symbol compressed to an eigenbasis subset."""

    level: int
    matrix: np.ndarray
    keys: list[tuple[str, int]]
    lambda_assignment: np.ndarray
    asymmetry: float
    block_snap: float | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _block_exact(symbol: SymbolSpec, basis: BasisSelection) -> bool:
    return (
        basis.split is not None
        and symbol.kind == "multiplication"
        and isinstance(symbol.chi, SimpleFunction)
        and symbol.chi.level <= basis.split.cell_level
    )


def compress(
    symbol: SymbolSpec, basis: BasisSelection, measure: SelfSimilarMeasure
) -> CompressedOperator:
    """Gamma(a,b) = weighted vertex sum of p(x, lam_b) u_a(x) u_b(x).

    Column blocks use their eigenspace's eigenvalue; the result is symmetrized
    and the asymmetry norm recorded.  When the basis is a localized split and
    the symbol is multiplication by a simple function at the split level or
    coarser, the exact block structure (diagonal per-cell blocks plus a
    trailing non-localized block) is verified and off-block entries snapped
    to exact zero.
    """
    if measure.level != basis.level:
        raise StructuralError(
            f"measure level {measure.level} != basis level {basis.level}"
        )
    interior = basis.vertices.interior
    cols = basis.columns
    raw = np.empty((basis.dim, basis.dim))
    for rec, sl in zip(basis.records, basis.group_slices):
        g = symbol_multiplier(symbol, rec.value, measure)[interior]
        raw[:, sl] = cols.T @ (g[:, None] * cols[:, sl])
    asym = float(np.max(np.abs(raw - raw.T)))
    if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(raw)))):
        raise StructuralError(
            f"compressed operator asymmetry {asym:.3e} exceeds tolerance"
        )
    mat = 0.5 * (raw + raw.T)

    block_snap = None
    if _block_exact(symbol, basis):
        split = basis.split
        allowed = np.zeros_like(mat, dtype=bool)
        for _, sl in split.cell_blocks:
            idx = np.arange(sl.start, sl.stop)
            allowed[idx, idx] = True
        nl = split.nonlocalized
        allowed[nl, nl] = True
        off = np.abs(mat[~allowed])
        block_snap = float(np.max(off)) if off.size else 0.0
        if block_snap > BLOCK_TOL:
            raise StructuralError(
                f"off-block entry {block_snap:.3e} breaks the exact block "
                f"structure (tolerance {BLOCK_TOL:.0e})"
            )
        mat[~allowed] = 0.0
        for word, sl in split.cell_blocks:
            expected = symbol.chi.value_on_word(word)
            dev = np.max(np.abs(np.diag(mat[sl, sl]) - expected)) if sl.stop > sl.start else 0.0
            if dev > BLOCK_TOL:
                raise StructuralError(
                    f"cell {word}: diagonal block deviates from its cell value "
                    f"by {dev:.3e}"
                )
    return CompressedOperator(
        level=basis.level,
        matrix=mat,
        keys=list(basis.keys),
        lambda_assignment=basis.lambdas,
        asymmetry=asym,
        block_snap=block_snap,
    )


def operator_eigenvalues(op: CompressedOperator) -> np.ndarray:
    return np.linalg.eigvalsh(op.matrix)


def trace_F(
    op: CompressedOperator,
    F: Callable[[float], float],
    domain: tuple[float, float] | None = None,
) -> float:
    """Trace of F applied to the operator through its eigenvalues.

    When a validity interval is supplied, every eigenvalue must lie inside
    it; this surfaces the continuity hypothesis as a runtime check.
    """
    sigma = operator_eigenvalues(op)
    if domain is not None:
        lo, hi = domain
        bad = sigma[(sigma < lo) | (sigma > hi)]
        if bad.size:
            raise DomainError(
                f"eigenvalues {bad[:3]} fall outside the declared domain "
                f"[{lo}, {hi}] of F"
            )
    return math.fsum(F(float(s)) for s in sigma)


def trace_power(op: CompressedOperator, k: int) -> float:
    """Trace of the k-th matrix power by direct powering (cross-check path)."""
    if k < 0:
        raise DomainError(f"power must be nonnegative, got {k}")
    if k == 0:
        return float(op.dim)
    acc = np.eye(op.dim)
    for _ in range(k):
        acc = acc @ op.matrix
    return float(np.trace(acc))


def log_det(op: CompressedOperator) -> float:
    sigma = operator_eigenvalues(op)
    if sigma[0] <= 0.0:
        raise DomainError(
            f"log-determinant needs a positive-definite operator; smallest "
            f"eigenvalue is {sigma[0]!r}"
        )
    return math.fsum(math.log(float(s)) for s in sigma)


@dataclass
class SpectralBounds:
    """Interval [A, B] containing every compressed-operator eigenvalue."""

    A: float
    B: float
    lambda_bar: float
    epsilon: float


def spectral_bounds(
    symbol: SymbolSpec,
    table: SpectrumTable,
    epsilon: float,
    basis: BasisSelection,
    measure: SelfSimilarMeasure,
) -> SpectralBounds:
    """Bounds from the declared limit: beyond lambda-bar the symbol is within
    epsilon of q, and the finite head below lambda-bar is diagonalized."""
    if epsilon <= 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if symbol.limit_q is None:
        raise DomainError(f"symbol {symbol.name} declares no uniform limit")
    values = [r.value for r in table.records]
    if not values:
        raise DomainError("empty spectrum table")
    dists = [
        symbol_sup_distance(symbol, v, basis.vertices) for v in values
    ]
    if dists[-1] >= epsilon:
        raise ConvergenceError(
            f"sampled sup-distance to the declared limit is still "
            f"{dists[-1]:.3e} >= {epsilon} at the top of the table; the "
            f"declared limit fails empirically"
        )
    cut = next(
        i for i in range(len(values)) if all(d < epsilon for d in dists[i + 1 :])
    )
    lambda_bar = values[cut]
    head = [idx for idx, rec in enumerate(basis.records) if rec.value <= lambda_bar]
    if head:
        bundles_cols = np.hstack([basis.columns[:, basis.group_slices[i]] for i in head])
        head_sel = BasisSelection(
            level=basis.level,
            vertices=basis.vertices,
            columns=bundles_cols,
            records=[basis.records[i] for i in head],
            group_slices=_repack_slices([basis.group_slices[i] for i in head]),
            keys=[("head", i) for i in range(bundles_cols.shape[1])],
        )
        sigma = operator_eigenvalues(compress(symbol, head_sel, measure))
        head_lo, head_hi = float(sigma[0]), float(sigma[-1])
    else:
        head_lo, head_hi = math.inf, -math.inf
    qmin, qmax = limit_range(symbol.limit_q, basis.vertices)
    return SpectralBounds(
        A=min(qmin - epsilon, head_lo),
        B=max(qmax + epsilon, head_hi),
        lambda_bar=lambda_bar,
        epsilon=epsilon,
    )


def _repack_slices(slices: list[slice]) -> list[slice]:
    out, start = [], 0
    for sl in slices:
        width = sl.stop - sl.start
        out.append(slice(start, start + width))
        start += width
    return out


def spectrum_map(p: Callable[[float], float], table: SpectrumTable) -> np.ndarray:
    """Sorted image of the spectrum under p, expanded by multiplicity."""
    values = []
    for rec in table.records:
        values.extend([p(rec.value)] * rec.multiplicity)
    return np.sort(np.array(values))


def operator_to_csv(op: CompressedOperator, path, sidecar_path) -> None:
    write_csv(
        path,
        tuple(f"c{i}" for i in range(op.dim)),
        (tuple(float(x) for x in row) for row in op.matrix),
    )
    write_json(
        sidecar_path,
        {
            "level": op.level,
            "keys": [list(k) for k in op.keys],
            "lambda_assignment": [float(x) for x in op.lambda_assignment],
            "asymmetry": op.asymmetry,
            "block_snap": op.block_snap,
        },
    )
