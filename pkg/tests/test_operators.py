import json
import math

import numpy as np
import pytest

from gasket_szego import decimation, eigenbasis, operators
from gasket_szego.errors import ConvergenceError, DomainError, StructuralError
from gasket_szego.eigenbasis import localized_split
from gasket_szego.gasket import SimpleFunction, constant_function
from gasket_szego.operators import (
    bessel_symbol,
    compress,
    constant_symbol,
    log_det,
    make_symbol,
    multiplication_symbol,
    operator_eigenvalues,
    operator_to_csv,
    riesz_symbol,
    selection_from_bundles,
    selection_from_split,
    separable_symbol,
    spectral_bounds,
    spectrum_map,
    symbol_sup_distance,
    tabulated_symbol,
    trace_F,
    trace_power,
)


def test_riesz_preset():
    sym = riesz_symbol(1.0)
    assert sym.p_lambda(2.0) == pytest.approx(1.5, abs=1e-15)
    assert sym.limit_q == 1.0
    assert sym.lower_bound == 1.0
    with pytest.raises(DomainError):
        riesz_symbol(0.0)
    with pytest.raises(DomainError):
        bessel_symbol(-1.0)


def test_bessel_preset():
    sym = bessel_symbol(2.0)
    assert sym.p_lambda(1.0) == pytest.approx(1.25, abs=1e-15)
    assert sym.limit_q == 1.0


def test_make_symbol_dispatch():
    sym = make_symbol("riesz", beta=1.0)
    assert sym.name == "riesz(beta=1)"
    with pytest.raises(DomainError):
        make_symbol("mystery")


def test_multiplication_constant_limit():
    f = constant_function(2.0, level=1)
    sym = multiplication_symbol(f)
    assert sym.limit_q is f
    assert sym.lower_bound == 2.0


def test_separable_zero_limit_is_chi():
    chi = SimpleFunction(1, [1.0, 2.0, 3.0])
    sym = separable_symbol(lambda lam: 1.0 / lam, 0.0, chi)
    assert isinstance(sym.limit_q, SimpleFunction)
    assert np.array_equal(sym.limit_q.values, chi.values)


def test_identity_symbol_gives_identity_matrix(level4):
    sel = selection_from_bundles(level4.bundles[:5])
    op = compress(constant_symbol(lambda lam: 1.0, limit=1.0), sel, level4.measure)
    assert np.max(np.abs(op.matrix - np.eye(sel.dim))) <= 1e-12


def test_constant_coefficient_on_one_bundle(level4):
    bundle = level4.family_bundle(6, 3)
    sym = riesz_symbol(1.0)
    op = compress(sym, selection_from_bundles([bundle]), level4.measure)
    expect = sym.p_lambda(bundle.record.value)
    assert np.max(np.abs(op.matrix - expect * np.eye(bundle.dim))) <= 1e-12


def test_indicator_block_structure(level4):
    # indicator of the first level-1 cell on a birth-3 eigenspace
    f = SimpleFunction(1, [1.0, 0.0, 0.0])
    bundle = level4.family_bundle(6, 3)
    split = localized_split(bundle, 1)
    sel = selection_from_split(split)
    op = compress(multiplication_symbol(f), sel, level4.measure)
    counts = decimation.localization_counts(6, 3, 1)
    m_cell = counts.m_j_N
    diag = np.diag(op.matrix)
    assert np.allclose(diag[:m_cell], 1.0, atol=1e-12)
    assert np.allclose(diag[m_cell : 3 * m_cell], 0.0, atol=1e-12)
    off = op.matrix[:m_cell, m_cell : 3 * m_cell]
    assert np.all(off == 0.0)
    assert op.block_snap is not None and op.block_snap <= 1e-10


def test_mixed_level_error(level4):
    other = eigenbasis.level_basis(3)
    with pytest.raises(StructuralError):
        compress(
            riesz_symbol(1.0),
            selection_from_bundles(level4.bundles[:2]),
            other.measure,
        )
    with pytest.raises(StructuralError):
        selection_from_bundles([level4.bundles[0], other.bundles[0]])


def test_trace_f_examples(level4):
    bundle = level4.family_bundle(6, 3)
    sel = selection_from_bundles([bundle])
    c_op = compress(constant_symbol(lambda lam: 2.0, limit=2.0), sel, level4.measure)
    assert trace_F(c_op, lambda x: x) == pytest.approx(2.0 * bundle.dim, rel=1e-12)
    # nonnegative F gives a nonnegative trace
    assert trace_F(c_op, lambda x: x ** 2) >= 0.0


def test_trace_f_power_cross_check(level4):
    f = SimpleFunction(1, [0.5, 1.5, 2.5])
    bundle = level4.family_bundle(6, 4)
    sel = selection_from_bundles([bundle])
    op = compress(multiplication_symbol(f), sel, level4.measure)
    for k in range(0, 7):
        via_eigs = trace_F(op, lambda x, _k=k: x ** _k)
        via_power = trace_power(op, k)
        assert via_eigs == pytest.approx(via_power, rel=1e-8, abs=1e-10)


def test_trace_f_linear_and_positive(level4):
    bundle = level4.family_bundle(5, 3)
    sel = selection_from_bundles([bundle])
    f = SimpleFunction(1, [0.3, 1.1, 2.2])
    op = compress(multiplication_symbol(f), sel, level4.measure)
    f1 = lambda x: x ** 2
    f2 = lambda x: 3.0 - x
    a, b = 2.5, -1.25
    combo = trace_F(op, lambda x: a * f1(x) + b * f2(x))
    parts = a * trace_F(op, f1) + b * trace_F(op, f2)
    assert combo == pytest.approx(parts, rel=1e-10, abs=1e-10)
    nonneg = trace_F(op, lambda x: max(0.0, x))
    assert nonneg >= 0.0


def test_trace_f_domain_check(level4):
    bundle = level4.family_bundle(6, 3)
    op = compress(
        constant_symbol(lambda lam: 2.0, limit=2.0),
        selection_from_bundles([bundle]),
        level4.measure,
    )
    assert trace_F(op, lambda x: x, domain=(0.0, 3.0)) == pytest.approx(
        2.0 * bundle.dim
    )
    with pytest.raises(DomainError):
        trace_F(op, lambda x: x, domain=(0.0, 1.0))


def test_log_det_examples(level4):
    bundle = level4.family_bundle(6, 3)
    sel = selection_from_bundles([bundle])
    c_op = compress(constant_symbol(lambda lam: 3.0, limit=3.0), sel, level4.measure)
    assert log_det(c_op) == pytest.approx(bundle.dim * math.log(3.0), rel=1e-12)
    tiny = operators.CompressedOperator(
        level=4,
        matrix=np.diag([2.0, 3.0]),
        keys=[("x", 0), ("x", 1)],
        lambda_assignment=np.array([1.0, 1.0]),
        asymmetry=0.0,
    )
    assert log_det(tiny) == pytest.approx(math.log(6.0), rel=1e-14)
    bad = operators.CompressedOperator(
        level=4,
        matrix=np.diag([2.0, -1.0]),
        keys=[("x", 0), ("x", 1)],
        lambda_assignment=np.array([1.0, 1.0]),
        asymmetry=0.0,
    )
    with pytest.raises(DomainError):
        log_det(bad)


def test_log_det_monotone(level4):
    f = SimpleFunction(1, [1.0, 2.0, 3.0])
    bundle = level4.family_bundle(6, 3)
    sel = selection_from_bundles([bundle])
    lo = compress(multiplication_symbol(f.scaled(0.9)), sel, level4.measure)
    hi = compress(multiplication_symbol(f.scaled(1.1)), sel, level4.measure)
    gap_eigs = np.linalg.eigvalsh(hi.matrix - lo.matrix)
    assert gap_eigs[0] >= -1e-12  # quadratic-form order verified by eigenvalues
    assert log_det(lo) <= log_det(hi)


def test_operator_monotonicity_transfer(level4):
    f = SimpleFunction(1, [1.0, 2.0, 3.0])
    bundle = level4.family_bundle(6, 3)
    sel = selection_from_bundles([bundle])
    lo = compress(multiplication_symbol(f.shifted(-0.25)), sel, level4.measure)
    hi = compress(multiplication_symbol(f.shifted(0.25)), sel, level4.measure)
    lo_eigs = operator_eigenvalues(lo)
    hi_eigs = operator_eigenvalues(hi)
    assert np.all(lo_eigs <= hi_eigs + 1e-10)


def test_spectral_bounds_constant(level4):
    sym = constant_symbol(lambda lam: 2.0, limit=2.0)
    sel = selection_from_bundles(level4.bundles)
    bounds = spectral_bounds(sym, level4.table, 0.1, sel, level4.measure)
    assert bounds.A == pytest.approx(1.9, abs=1e-9)
    assert bounds.B == pytest.approx(2.1, abs=1e-9)


def test_spectral_bounds_riesz(level4):
    sym = riesz_symbol(1.0)
    sel = selection_from_bundles(level4.bundles)
    bounds = spectral_bounds(sym, level4.table, 0.1, sel, level4.measure)
    lam_min = level4.table.records[0].value
    head_top = 1.0 + 1.0 / lam_min
    assert bounds.A == pytest.approx(0.9, abs=1e-9)
    assert bounds.B == pytest.approx(max(1.1, head_top), rel=1e-9)
    # with epsilon below the head spread, the head supplies the top bound
    tight = spectral_bounds(sym, level4.table, 0.01, sel, level4.measure)
    assert tight.B == pytest.approx(head_top, rel=1e-9)
    # every compressed eigenvalue, at any cutoff, lies inside [A, B]
    for upto in (3, 7, len(level4.bundles)):
        op = compress(sym, selection_from_bundles(level4.bundles[:upto]), level4.measure)
        eigs = operator_eigenvalues(op)
        assert eigs[0] >= bounds.A - 1e-12
        assert eigs[-1] <= bounds.B + 1e-12
        assert eigs[0] >= tight.A - 1e-12
        assert eigs[-1] <= tight.B + 1e-12


def test_spectral_bounds_needs_limit(level4):
    sym = constant_symbol(lambda lam: math.sin(lam))
    sel = selection_from_bundles(level4.bundles)
    with pytest.raises(DomainError):
        spectral_bounds(sym, level4.table, 0.1, sel, level4.measure)


def test_spectral_bounds_no_convergence(level4):
    # declared limit far from the symbol: the declaration fails empirically
    sym = constant_symbol(lambda lam: math.sin(lam), limit=5.0)
    sel = selection_from_bundles(level4.bundles)
    with pytest.raises(ConvergenceError):
        spectral_bounds(sym, level4.table, 1e-3, sel, level4.measure)


def test_spectrum_map_identity_and_riesz(level4):
    table = level4.table
    image = spectrum_map(lambda lam: lam, table)
    expanded = np.sort(
        np.concatenate([np.full(r.multiplicity, r.value) for r in table.records])
    )
    assert np.array_equal(image, expanded)
    riesz = spectrum_map(lambda lam: 1.0 + 1.0 / lam, table)
    assert np.all(riesz > 1.0)
    assert riesz[0] == pytest.approx(1.0, abs=1e-2)


def test_spectrum_map_matches_compression(level4):
    # constant-coefficient compressions are diagonal in the eigenbasis
    sym = riesz_symbol(1.0)
    sel = selection_from_bundles(level4.bundles)
    op = compress(sym, sel, level4.measure)
    eigs = operator_eigenvalues(op)
    mapped = np.sort([sym.p_lambda(lam) for lam in sel.lambdas])
    assert np.max(np.abs(eigs - mapped)) <= 1e-10


def test_spectrum_map_increasing_no_accumulation(level4):
    image = spectrum_map(lambda lam: lam ** 2, level4.table)
    assert np.all(np.diff(np.unique(image)) > 1.0)


def test_completion_invariance(level4):
    # any orthonormal completion of the non-localized part gives the same
    # spectral functionals
    f = SimpleFunction(1, [1.0, 2.0, 3.0])
    bundle = level4.family_bundle(6, 4)
    split = localized_split(bundle, 1)
    sel = selection_from_split(split)
    sym = multiplication_symbol(f.shifted(0.5))
    op = compress(sym, sel, level4.measure)

    rng = np.random.default_rng(7)
    alpha = split.nonlocalized.shape[1]
    q, _ = np.linalg.qr(rng.normal(size=(alpha, alpha)))
    rotated = operators.BasisSelection(
        level=sel.level,
        vertices=sel.vertices,
        columns=np.hstack(
            [sel.columns[:, : sel.dim - alpha], split.nonlocalized @ q]
        ),
        records=sel.records,
        group_slices=sel.group_slices,
        keys=sel.keys,
        split=sel.split,
    )
    op2 = compress(sym, rotated, level4.measure)
    for F in (lambda x: x, lambda x: x ** 3, math.exp):
        assert trace_F(op, F) == pytest.approx(trace_F(op2, F), rel=1e-9, abs=1e-9)
    assert log_det(op) == pytest.approx(log_det(op2), rel=1e-9)


def test_tabulated_symbol(level4):
    bundle = level4.family_bundle(6, 3)
    f = SimpleFunction(1, [1.0, 2.0, 3.0])
    sym = tabulated_symbol([(bundle.record.value, f)], limit_q=f)
    sel = selection_from_bundles([bundle])
    op = compress(sym, sel, level4.measure)
    direct = compress(multiplication_symbol(f), sel, level4.measure)
    assert np.max(np.abs(op.matrix - direct.matrix)) <= 1e-14
    with pytest.raises(DomainError):
        compress(sym, selection_from_bundles([level4.family_bundle(6, 4)]), level4.measure)


def test_sup_distance_trend(level4):
    sym = riesz_symbol(1.0)
    values = [r.value for r in level4.table.records]
    dists = [symbol_sup_distance(sym, v, level4.vertices) for v in values]
    assert all(b <= a for a, b in zip(dists, dists[1:]))


def test_operator_csv_dump(tmp_path, level4):
    bundle = level4.family_bundle(6, 3)
    op = compress(
        riesz_symbol(1.0), selection_from_bundles([bundle]), level4.measure
    )
    csv_path = tmp_path / "op.csv"
    meta_path = tmp_path / "op.json"
    operator_to_csv(op, csv_path, meta_path)
    rows = csv_path.read_text().splitlines()
    assert len(rows) == 1 + op.dim
    meta = json.loads(meta_path.read_text())
    assert meta["level"] == 4
    assert len(meta["lambda_assignment"]) == op.dim
