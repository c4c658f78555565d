"""Trace and determinant limit experiments over eigenvalue sequences.

Two families of sweeps: over a single series of eigenspaces indexed by birth
generation, and over full cutoff compressions.  Each sweep produces a
ConvergenceReport carrying the normalized trace (or log-determinant) values,
absolute errors against the limiting integral, and a per-sample split of the
dimension mass by generation of birth.  Trend verdicts are reported, not
asserted; no convergence rate is claimed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import decimation, eigenbasis, operators
from .decimation import EigenvalueRecord
from .errors import DomainError, WindowError
from .gasket import (
    SimpleFunction,
    build_measure,
    build_vertices,
    integrate_simple,
    vertex_values,
)
from .operators import (
    BasisSelection,
    SymbolSpec,
    compress,
    log_det,
    selection_from_bundles,
    symbol_vertex_values,
    trace_F,
)
from .serialize import write_csv, write_json

TARGET_TOL = 1e-10
TARGET_MAX_LEVEL = 8


@dataclass(frozen=True)
class TraceFunction:
    """Named scalar function applied to compressed-operator spectra."""

    name: str
    fn: Callable[[float], float]


def f_identity() -> TraceFunction:
    return TraceFunction("identity", lambda x: x)


def f_power(k: int) -> TraceFunction:
    if k < 0:
        raise DomainError(f"power must be nonnegative, got {k}")
    return TraceFunction(f"power:{k}", lambda x: x ** k)


def f_log() -> TraceFunction:
    return TraceFunction("log", math.log)


def f_polynomial(coeffs) -> TraceFunction:
    coeffs = tuple(float(c) for c in coeffs)

    def fn(x, _c=coeffs):
        acc = 0.0
        for c in reversed(_c):
            acc = acc * x + c
        return acc

    return TraceFunction("polynomial:" + ":".join(repr(c) for c in coeffs), fn)


NAMED_F = {
    "identity": lambda params: f_identity(),
    "power": lambda params: f_power(int(params["k"])),
    "log": lambda params: f_log(),
    "polynomial": lambda params: f_polynomial(params["coeffs"]),
}


def make_trace_function(name: str, **params) -> TraceFunction:
    if name not in NAMED_F:
        raise DomainError(f"unknown trace function {name!r}")
    return NAMED_F[name](params)


def target_integral(limit_q, fn: Callable[[float], float],
                    tol: float = TARGET_TOL,
                    max_level: int = TARGET_MAX_LEVEL) -> tuple[float, dict]:
    """Integral of F(q) against the measure.

    Exact for constants and simple functions.  A continuous q is integrated by
    weighted vertex sums at increasing level with geometric extrapolation;
    the achieved stabilization is reported so trend-only experiments can note
    an unconverged target.
    """
    if limit_q is None:
        raise DomainError("no declared limit to integrate against")
    if isinstance(limit_q, (int, float)):
        return float(fn(float(limit_q))), {"method": "closed-form", "converged": True}
    if isinstance(limit_q, SimpleFunction):
        value = (
            math.fsum(fn(float(a)) for a in limit_q.values)
            * 3.0 ** (-limit_q.level)
        )
        return value, {"method": "simple-exact", "converged": True}
    estimates = []
    for m in range(1, max_level + 1):
        vertices = build_vertices(m)
        weights = build_measure(vertices).weights
        q_vals = vertex_values(limit_q, vertices)
        estimates.append(
            math.fsum(float(w) * fn(float(q)) for w, q in zip(weights, q_vals))
        )
        if len(estimates) >= 2:
            delta = abs(estimates[-1] - estimates[-2])
            if delta <= tol * max(1.0, abs(estimates[-1])):
                return estimates[-1], {
                    "method": "vertex-refinement",
                    "converged": True,
                    "level": m,
                    "delta": delta,
                }
    # geometric extrapolation from the last three refinements
    value = estimates[-1]
    info = {"method": "vertex-refinement", "converged": False, "level": max_level}
    if len(estimates) >= 3:
        d1 = estimates[-2] - estimates[-3]
        d2 = estimates[-1] - estimates[-2]
        if d1 != 0.0 and 0.0 < d2 / d1 < 0.9:
            ratio = d2 / d1
            value = estimates[-1] + d2 * ratio / (1.0 - ratio)
            info["extrapolated"] = True
    info["delta"] = abs(estimates[-1] - estimates[-2])
    return value, info


@dataclass
class Sample:
    index: float
    d: int
    value: float
    abs_error: float
    head_mass: int
    tail_mass: int


@dataclass
class Verdict:
    first_error: float
    last_error: float
    monotone_nonincreasing: bool
    trend_ok: bool


@dataclass
class ConvergenceReport:
    """Sweep output: samples, target, generation split, and a trend verdict."""

    target: float
    samples: list[Sample]
    verdict: Verdict
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        write_csv(
            path,
            ("index", "d", "value", "abs_error", "head_mass", "tail_mass"),
            (
                (s.index, s.d, s.value, s.abs_error, s.head_mass, s.tail_mass)
                for s in self.samples
            ),
        )

    def to_json(self, path) -> None:
        write_json(
            path,
            {
                "target": self.target,
                "samples": [
                    {
                        "index": s.index,
                        "d": s.d,
                        "value": s.value,
                        "abs_error": s.abs_error,
                        "head_mass": s.head_mass,
                        "tail_mass": s.tail_mass,
                    }
                    for s in self.samples
                ],
                "verdict": {
                    "first_error": self.verdict.first_error,
                    "last_error": self.verdict.last_error,
                    "monotone_nonincreasing": self.verdict.monotone_nonincreasing,
                    "trend_ok": self.verdict.trend_ok,
                },
                "metadata": self.metadata,
            },
        )


def compute_verdict(samples: list[Sample]) -> Verdict:
    errors = [s.abs_error for s in samples]
    return Verdict(
        first_error=errors[0],
        last_error=errors[-1],
        monotone_nonincreasing=all(b <= a for a, b in zip(errors, errors[1:])),
        trend_ok=errors[-1] <= errors[0],
    )


def _default_generation_cut(m: int) -> int:
    return (m + 1) // 2


def _series_records(
    basis: eigenbasis.LevelBasis, series: int, j_range
) -> list[EigenvalueRecord]:
    return [basis.family_bundle(series, j).record for j in j_range]


def _check_single_series_args(series, j_range, n_level, m):
    if series not in (5, 6):
        raise DomainError(f"single-series sweeps need series 5 or 6, got {series}")
    j_range = sorted(int(j) for j in j_range)
    if not j_range:
        raise DomainError("empty birth range")
    lo = 1 if series == 5 else 2
    for j in j_range:
        if j > m:
            raise DomainError(f"birth {j} exceeds graph level {m}")
        if j <= n_level:
            raise DomainError(
                f"birth {j} must exceed the approximation level {n_level}"
            )
        if j < lo:
            raise DomainError(f"series {series} has no birth {j}")
    return j_range


def _simple_multiplication_bound(symbol, n_level, k, counts) -> float | None:
    """Exact finite-sample error bound for simple multiplication symbols."""
    if not (
        symbol.kind == "multiplication"
        and isinstance(symbol.chi, SimpleFunction)
        and symbol.chi.level <= n_level
    ):
        return None
    f = symbol.chi
    abs_f = SimpleFunction(f.level, np.abs(f.values))
    return (counts.alpha_N / counts.d_j) * integrate_simple(abs_f, k) + (
        counts.alpha_N ** k / counts.d_j
    ) * f.sup_norm ** k


def szego_trace_single_series(
    symbol: SymbolSpec,
    F: TraceFunction,
    series: int,
    j_range,
    n_level: int,
    m: int,
    f_domain: tuple[float, float] | None = None,
    generation_cut: int | None = None,
    basis: eigenbasis.LevelBasis | None = None,
) -> ConvergenceReport:
    """Normalized trace of F over one series of eigenspace compressions."""
    j_range = _check_single_series_args(series, j_range, n_level, m)
    basis = basis or eigenbasis.level_basis(m)
    target, target_info = target_integral(symbol.limit_q, F.fn)
    cut = generation_cut or _default_generation_cut(m)
    power = _f_power_order(F)
    samples, bounds = [], []
    for j in j_range:
        bundle = basis.family_bundle(series, j)
        sel = selection_from_bundles([bundle])
        gamma = compress(symbol, sel, basis.measure)
        d = bundle.dim
        value = trace_F(gamma, F.fn, domain=f_domain) / d
        head = d if j <= cut else 0
        samples.append(
            Sample(
                index=j,
                d=d,
                value=value,
                abs_error=abs(value - target),
                head_mass=head,
                tail_mass=d - head,
            )
        )
        if power is not None:
            counts = decimation.localization_counts(series, j, n_level)
            bound = _simple_multiplication_bound(symbol, n_level, power, counts)
            if bound is not None:
                bounds.append({"j": j, "bound": bound})
    report = ConvergenceReport(
        target=target,
        samples=samples,
        verdict=compute_verdict(samples),
        metadata={
            "experiment": "szego-trace-single",
            "symbol": symbol.name,
            "F": F.name,
            "series": series,
            "m": m,
            "N": n_level,
            "generation_cut": cut,
            "f_domain": list(f_domain) if f_domain else "evaluability-only",
            "target_info": target_info,
        },
    )
    if bounds:
        report.metadata["simple_function_bounds"] = bounds
    return report


def _f_power_order(F: TraceFunction) -> int | None:
    if F.name == "identity":
        return 1
    if F.name.startswith("power:"):
        return int(F.name.split(":")[1])
    return None


def _cutoff_selection(
    basis: eigenbasis.LevelBasis, cutoff: float
) -> BasisSelection:
    bundles = [b for b in basis.bundles if b.record.value <= cutoff]
    if not bundles:
        raise DomainError(f"no eigenvalues at or below cutoff {cutoff}")
    return selection_from_bundles(bundles)


def check_window(lambda_grid, m: int) -> float:
    window = decimation.resolvable_window(m)
    top = max(lambda_grid)
    if top >= window:
        raise WindowError(
            f"cutoff {top} reaches the resolvable window {window} of level {m}; "
            f"eigenvalues born beyond level {m} would be silently missing"
        )
    return window


def _full_sweep(symbol, lambda_grid, m, basis, cut, target, evaluate,
                precheck=None):
    """Cutoff compressions as leading principal blocks of one full operator."""
    lambda_grid = sorted(float(x) for x in lambda_grid)
    if not lambda_grid:
        raise DomainError("empty cutoff grid")
    window = check_window(lambda_grid, m)
    full = _cutoff_selection(basis, lambda_grid[-1])
    if precheck is not None:
        precheck(full)
    gamma_full = compress(symbol, full, basis.measure)
    values = full.lambdas
    births = np.concatenate(
        [
            np.full(sl.stop - sl.start, rec.birth)
            for rec, sl in zip(full.records, full.group_slices)
        ]
    )
    samples = []
    for cutoff in lambda_grid:
        d = int(np.sum(values <= cutoff))
        if d == 0:
            raise DomainError(
                f"cutoff {cutoff} lies below the smallest eigenvalue"
            )
        sub = operators.CompressedOperator(
            level=gamma_full.level,
            matrix=gamma_full.matrix[:d, :d],
            keys=gamma_full.keys[:d],
            lambda_assignment=values[:d],
            asymmetry=gamma_full.asymmetry,
        )
        value = evaluate(sub) / d
        head = int(np.sum(births[:d] <= cut))
        samples.append(
            Sample(
                index=cutoff,
                d=d,
                value=value,
                abs_error=abs(value - target),
                head_mass=head,
                tail_mass=d - head,
            )
        )
    return samples, window, full


def szego_trace_full(
    symbol: SymbolSpec,
    F: TraceFunction,
    lambda_grid,
    m: int,
    f_domain: tuple[float, float] | None = None,
    generation_cut: int | None = None,
    basis: eigenbasis.LevelBasis | None = None,
) -> ConvergenceReport:
    """Normalized trace of F over full cutoff compressions on a grid."""
    basis = basis or eigenbasis.level_basis(m)
    target, target_info = target_integral(symbol.limit_q, F.fn)
    cut = generation_cut or _default_generation_cut(m)
    samples, window, _ = _full_sweep(
        symbol,
        lambda_grid,
        m,
        basis,
        cut,
        target,
        lambda sub: trace_F(sub, F.fn, domain=f_domain),
    )
    return ConvergenceReport(
        target=target,
        samples=samples,
        verdict=compute_verdict(samples),
        metadata={
            "experiment": "szego-trace-full",
            "symbol": symbol.name,
            "F": F.name,
            "m": m,
            "window": window,
            "generation_cut": cut,
            "f_domain": list(f_domain) if f_domain else "evaluability-only",
            "target_info": target_info,
        },
    )


def _check_positivity(symbol: SymbolSpec, records, vertices) -> None:
    if symbol.lower_bound is None or symbol.lower_bound <= 0.0:
        raise DomainError(
            f"log-determinant sweeps need a declared positive lower bound; "
            f"symbol {symbol.name} has {symbol.lower_bound}"
        )
    worst = math.inf
    for rec in records:
        vals = symbol_vertex_values(symbol, rec.value, vertices)
        worst = min(worst, float(np.min(vals)))
    if worst < symbol.lower_bound - 1e-12:
        raise DomainError(
            f"sampled symbol value {worst} undercuts the declared lower bound "
            f"{symbol.lower_bound}"
        )


def szego_logdet_single_series(
    symbol: SymbolSpec,
    series: int,
    j_range,
    n_level: int,
    m: int,
    generation_cut: int | None = None,
    basis: eigenbasis.LevelBasis | None = None,
) -> ConvergenceReport:
    """Normalized log-determinant over one series of eigenspace compressions."""
    j_range = _check_single_series_args(series, j_range, n_level, m)
    basis = basis or eigenbasis.level_basis(m)
    records = _series_records(basis, series, j_range)
    _check_positivity(symbol, records, basis.vertices)
    target, target_info = target_integral(symbol.limit_q, math.log)
    cut = generation_cut or _default_generation_cut(m)
    samples = []
    for j in j_range:
        bundle = basis.family_bundle(series, j)
        sel = selection_from_bundles([bundle])
        gamma = compress(symbol, sel, basis.measure)
        d = bundle.dim
        value = log_det(gamma) / d
        head = d if j <= cut else 0
        samples.append(
            Sample(j, d, value, abs(value - target), head, d - head)
        )
    return ConvergenceReport(
        target=target,
        samples=samples,
        verdict=compute_verdict(samples),
        metadata={
            "experiment": "szego-logdet-single",
            "symbol": symbol.name,
            "series": series,
            "m": m,
            "N": n_level,
            "generation_cut": cut,
            "target_info": target_info,
        },
    )


def szego_logdet_full(
    symbol: SymbolSpec,
    lambda_grid,
    m: int,
    generation_cut: int | None = None,
    basis: eigenbasis.LevelBasis | None = None,
) -> ConvergenceReport:
    """Normalized log-determinant over full cutoff compressions on a grid."""
    basis = basis or eigenbasis.level_basis(m)
    target, target_info = target_integral(symbol.limit_q, math.log)
    cut = generation_cut or _default_generation_cut(m)
    samples, window, _ = _full_sweep(
        symbol,
        lambda_grid,
        m,
        basis,
        cut,
        target,
        log_det,
        precheck=lambda full: _check_positivity(
            symbol, full.records, basis.vertices
        ),
    )
    return ConvergenceReport(
        target=target,
        samples=samples,
        verdict=compute_verdict(samples),
        metadata={
            "experiment": "szego-logdet-full",
            "symbol": symbol.name,
            "m": m,
            "window": window,
            "generation_cut": cut,
            "target_info": target_info,
        },
    )


def logdet_sandwich(
    symbol: SymbolSpec,
    f_approx: SimpleFunction,
    epsilon: float,
    series: int,
    j_range,
    m: int,
    basis: eigenbasis.LevelBasis | None = None,
) -> list[dict]:
    """Determinant sandwich against scaled simple approximants.

    Wherever the sampled ratio p(x, lam_j)/f(x) lies strictly inside
    (1-eps, 1+eps), the log-determinant of the compression must sit between
    the log-determinants of the compressions of (1-eps) f and (1+eps) f.
    """
    if epsilon <= 0 or epsilon >= 1:
        raise DomainError(f"epsilon must be in (0, 1), got {epsilon}")
    basis = basis or eigenbasis.level_basis(m)
    lo_sym = operators.multiplication_symbol(f_approx.scaled(1.0 - epsilon))
    hi_sym = operators.multiplication_symbol(f_approx.scaled(1.0 + epsilon))
    f_vals = vertex_values(f_approx, basis.vertices)
    out = []
    for j in sorted(j_range):
        bundle = basis.family_bundle(series, j)
        sel = selection_from_bundles([bundle])
        p_vals = symbol_vertex_values(symbol, bundle.record.value, basis.vertices)
        ratios = p_vals / f_vals
        holds = bool(np.all((1.0 - epsilon < ratios) & (ratios < 1.0 + epsilon)))
        entry = {"j": j, "ratio_condition": holds}
        if holds:
            entry["lower"] = log_det(compress(lo_sym, sel, basis.measure))
            entry["value"] = log_det(compress(symbol, sel, basis.measure))
            entry["upper"] = log_det(compress(hi_sym, sel, basis.measure))
            entry["sandwiched"] = entry["lower"] <= entry["value"] <= entry["upper"]
        out.append(entry)
    return out


def plot_error_svg(report: ConvergenceReport, path) -> None:
    """Minimal deterministic SVG of abs_error vs index on a log scale."""
    samples = [s for s in report.samples if s.abs_error > 0.0]
    width, height, margin = 480, 320, 40
    if not samples:
        body = "<text x='240' y='160'>all errors are exactly zero</text>"
    else:
        xs = [s.index for s in samples]
        ys = [math.log10(s.abs_error) for s in samples]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        xr = (x1 - x0) or 1.0
        yr = (y1 - y0) or 1.0
        pts = " ".join(
            "%.2f,%.2f"
            % (
                margin + (x - x0) / xr * (width - 2 * margin),
                height - margin - (y - y0) / yr * (height - 2 * margin),
            )
            for x, y in zip(xs, ys)
        )
        body = (
            f"<polyline fill='none' stroke='black' points='{pts}'/>"
            f"<text x='{margin}' y='{height - 8}'>index {x0:g} to {x1:g}; "
            f"log10 abs_error {y0:.2f} to {y1:.2f}</text>"
        )
    svg = (
        f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' "
        f"height='{height}'>{body}</svg>\n"
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
