import math

import numpy as np
import pytest

from gasket_szego import decimation
from gasket_szego.decimation import enumerate_spectrum
from gasket_szego.eigenbasis import (
    EigenPair,
    build_level_basis,
    group_eigenspaces,
    interior_weight,
    level_cover_cutoff,
    load_bundle,
    localized_split,
    save_bundle,
    solve_graph_spectrum,
)
from gasket_szego.errors import DomainError, MismatchError, StructuralError
from gasket_szego.gasket import build_dirichlet_laplacian, build_vertices


def test_solve_level1():
    lap = build_dirichlet_laplacian(build_vertices(1))
    pairs = solve_graph_spectrum(lap)
    assert [round(p.graph_value, 10) for p in pairs] == [2.0, 5.0, 5.0]


def test_solve_level2_contains_decimated_two_series():
    lap = build_dirichlet_laplacian(build_vertices(2))
    pairs = solve_graph_spectrum(lap)
    assert len(pairs) == 12
    lo, hi = decimation.decimation_preimages(2.0)
    values = np.array([p.graph_value for p in pairs])
    for root in (lo, hi):
        assert np.sum(np.abs(values - root) < 1e-9) == 1


@pytest.mark.parametrize("m", range(1, 5))
def test_trace_identity(m):
    lap = build_dirichlet_laplacian(build_vertices(m))
    pairs = solve_graph_spectrum(lap)
    total = math.fsum(p.graph_value for p in pairs)
    assert total == pytest.approx(float(np.trace(lap.matrix)), rel=1e-9)


def test_solve_rejects_asymmetric():
    lap = build_dirichlet_laplacian(build_vertices(1))
    lap.matrix = lap.matrix.copy()
    lap.matrix[0, 1] = 7.0
    with pytest.raises(StructuralError):
        solve_graph_spectrum(lap)


def test_group_level1_dimensions():
    m = 1
    vertices = build_vertices(m)
    lap = build_dirichlet_laplacian(vertices)
    pairs = solve_graph_spectrum(lap)
    table = enumerate_spectrum(level_cover_cutoff(m))
    bundles = group_eigenspaces(pairs, table, m, vertices)
    dims = sorted(b.dim for b in bundles)
    assert dims == [1, 2]


@pytest.mark.parametrize("m", range(1, 5))
def test_group_completeness_and_orthonormality(m):
    basis = build_level_basis(m)
    assert sum(b.dim for b in basis.bundles) == decimation.interior_dimension(m)
    w = interior_weight(m)
    for bundle in basis.bundles[:6]:
        gram = bundle.vectors.T @ bundle.vectors * w
        assert np.max(np.abs(gram - np.eye(bundle.dim))) <= 1e-10
        assert bundle.dim == bundle.record.multiplicity


def test_seed_bundle_dimension():
    basis = build_level_basis(3)
    bundle = basis.family_bundle(6, 3)
    assert bundle.dim == (3 ** 3 - 3) // 2
    assert bundle.graph_value == pytest.approx(6.0, abs=1e-9)


def test_projector_idempotent(level4):
    bundle = level4.family_bundle(6, 3)
    w = interior_weight(4)
    proj = bundle.vectors @ bundle.vectors.T * w
    assert np.max(np.abs(proj @ proj - proj)) <= 1e-9


def test_group_orphan_detection():
    m = 2
    vertices = build_vertices(m)
    lap = build_dirichlet_laplacian(vertices)
    pairs = solve_graph_spectrum(lap)
    pairs[0] = EigenPair(pairs[0].graph_value + 0.01, pairs[0].vector)
    table = enumerate_spectrum(level_cover_cutoff(m))
    with pytest.raises(MismatchError):
        group_eigenspaces(pairs, table, m, vertices)


def test_group_insufficient_table():
    m = 2
    vertices = build_vertices(m)
    lap = build_dirichlet_laplacian(vertices)
    pairs = solve_graph_spectrum(lap)
    table = enumerate_spectrum(100.0)
    with pytest.raises(MismatchError):
        group_eigenspaces(pairs, table, m, vertices)


@pytest.mark.parametrize(
    "series,birth",
    [(6, 3), (6, 4), (5, 3), (5, 4)],
)
def test_localized_split_counts(level4, series, birth):
    bundle = level4.family_bundle(series, birth)
    for n_level in range(1, birth):
        counts = decimation.localization_counts(series, birth, n_level)
        split = localized_split(bundle, n_level)
        per_cell = {w: v.shape[1] for w, v in split.per_cell.items()}
        assert set(per_cell.values()) == {counts.m_j_N}
        assert split.localized_total == counts.d_j_N
        assert split.nonlocalized.shape[1] == counts.alpha_N


def test_localized_vectors_exactly_zero_outside(level4):
    bundle = level4.family_bundle(6, 3)
    split = localized_split(bundle, 1)
    vertices = level4.vertices
    n = bundle.vectors.shape[0]
    for word, vecs in split.per_cell.items():
        inside = vertices.cell_interior_positions(word)
        mask = np.ones(n, dtype=bool)
        mask[inside] = False
        assert np.all(vecs[mask, :] == 0.0)


def test_localized_split_gram_identity(level4):
    bundle = level4.family_bundle(6, 4)
    split = localized_split(bundle, 2)
    blocks = [v for v in split.per_cell.values() if v.shape[1]]
    blocks.append(split.nonlocalized)
    full = np.hstack(blocks)
    gram = full.T @ full * interior_weight(4)
    assert np.max(np.abs(gram - np.eye(gram.shape[0]))) <= 1e-10


def test_localized_split_preconditions(level4):
    bundle = level4.family_bundle(6, 3)
    with pytest.raises(DomainError):
        localized_split(bundle, 3)
    with pytest.raises(DomainError):
        localized_split(bundle, 0)
    two_series = next(b for b in level4.bundles if b.record.series == 2)
    with pytest.raises(DomainError):
        localized_split(two_series, 1)


def test_split_deterministic(level4):
    bundle = level4.family_bundle(6, 3)
    a = localized_split(bundle, 1)
    b = localized_split(bundle, 1)
    for word in a.per_cell:
        assert np.array_equal(a.per_cell[word], b.per_cell[word])
    assert np.array_equal(a.nonlocalized, b.nonlocalized)


def test_bundle_save_load_bit_exact(tmp_path, level4):
    bundle = level4.family_bundle(6, 3)
    path = tmp_path / "bundle.csv"
    save_bundle(bundle, path)
    loaded = load_bundle(path, level4.vertices)
    assert np.array_equal(loaded.vectors, bundle.vectors)
    assert loaded.record.key == bundle.record.key
    assert loaded.graph_value == bundle.graph_value


def test_level_basis_sorted_by_value(level4):
    values = [b.record.value for b in level4.bundles]
    assert values == sorted(values)
