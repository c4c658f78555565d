"""Generalized Schrodinger operators and their eigenvalue clusters.

H = p(-Delta) + [chi] is assembled in the full level-m eigenbasis, where
p(-Delta) is diagonal and [chi] is the compressed multiplication operator.
Clusters are the portions of the spectrum inside windows around p(lam_j) for
a separated eigenvalue family; each cluster's recentered empirical measure is
realized through the spectral projection onto its eigenvectors, whose
projected matrix also furnishes the moment/trace cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import eigenbasis, operators, szego
from .decimation import EigenvalueRecord
from .errors import DomainError, NumericError, StructuralError
from .gasket import SimpleFunction, VertexSet, vertex_values
from .serialize import write_csv

WINDOW_SLACK = 1e-9
LOWER_BOUND_TOL = 1e-9
MOMENT_RTOL = 1e-8


def _chi_range(chi, vertices: VertexSet) -> tuple[float, float]:
    if isinstance(chi, SimpleFunction):
        return chi.min_value, chi.max_value
    vals = vertex_values(chi, vertices)
    return float(np.min(vals)), float(np.max(vals))


def sup_difference(chi1, chi2, vertices: VertexSet) -> float:
    """Sup norm of chi1 - chi2 (exact for simple functions)."""
    if isinstance(chi1, SimpleFunction) and isinstance(chi2, SimpleFunction):
        level = max(chi1.level, chi2.level)
        v1 = np.repeat(chi1.values, 3 ** (level - chi1.level))
        v2 = np.repeat(chi2.values, 3 ** (level - chi2.level))
        return float(np.max(np.abs(v1 - v2)))
    d1 = vertex_values(chi1, vertices)
    d2 = vertex_values(chi2, vertices)
    return float(np.max(np.abs(d1 - d2)))


@dataclass
class SchrodingerMatrix:
    """p(-Delta) + [chi] in the full eigenbasis at one graph level.

    The diagonal part and the potential compression are kept separately so
    cluster projections can be formed without the eps*norm(H) rounding floor
    of the assembled matrix (the diagonal is recentered before multiplying).
    """

    level: int
    basis: operators.BasisSelection = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    diagonal: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)
    p: Callable[[float], float]
    chi: object
    p_name: str
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def projected_cluster(self, cols: np.ndarray, center: float) -> np.ndarray:
        """V^T (H - center) V assembled from the recentered parts."""
        shifted = (self.diagonal - center)[:, None] * cols
        out = cols.T @ shifted + cols.T @ (self.potential @ cols)
        return 0.5 * (out + out.T)


def build_schrodinger(
    p: Callable[[float], float],
    chi,
    m: int,
    p_name: str = "p",
    basis: eigenbasis.LevelBasis | None = None,
) -> SchrodingerMatrix:
    base = basis or eigenbasis.level_basis(m)
    sel = operators.selection_from_bundles(base.bundles)
    m_chi = operators.compress(
        operators.multiplication_symbol(chi), sel, base.measure
    ).matrix
    diag = np.array([p(float(lam)) for lam in sel.lambdas])
    matrix = m_chi + np.diag(diag)
    try:
        values, vectors = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericError(f"Schrodinger eigensolve failed: {exc}") from exc
    chi_min, _ = _chi_range(chi, base.vertices)
    floor = float(np.min(diag)) + chi_min
    if values[0] < floor - LOWER_BOUND_TOL:
        raise StructuralError(
            f"smallest eigenvalue {values[0]} undercuts the bound "
            f"min p + min chi = {floor}"
        )
    return SchrodingerMatrix(
        level=base.level,
        basis=sel,
        matrix=matrix,
        diagonal=diag,
        potential=m_chi,
        p=p,
        chi=chi,
        p_name=p_name,
        eigenvalues=values,
        eigenvectors=vectors,
    )


@dataclass
class ClusterMeasure:
    """Recentered point masses of one eigenvalue cluster."""

    j: int
    center: float
    positions: np.ndarray
    d_j: int
    projected: np.ndarray = field(repr=False)
    raw_positions: np.ndarray = field(repr=False)

    @property
    def weight(self) -> float:
        return 1.0 / self.d_j

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(float(pos), self.weight) for pos in self.positions]


@dataclass
class ClusterReport:
    clusters: list[ClusterMeasure]
    counts: dict[int, int]
    threshold_j: int
    windows: dict[int, tuple[float, float]]


def identify_clusters(
    schrodinger: SchrodingerMatrix,
    family: list[EigenvalueRecord],
    chi_range: tuple[float, float] | None = None,
    tau: float = WINDOW_SLACK,
) -> ClusterReport:
    """Locate the spectral clusters around p(lam_j) for a separated family.

    Windows must be pairwise disjoint.  The threshold generation is the
    smallest birth from which every later window holds exactly its
    eigenspace dimension; a family with no such birth is an error.  Cluster
    positions are the eigenvalues of the projected matrix
    V^T (H - center) V over the windowed eigenvectors, which refines the raw
    dense positions well below the window scale.
    """
    if not family:
        raise DomainError("empty eigenvalue family")
    if chi_range is None:
        chi_range = _chi_range(schrodinger.chi, schrodinger.basis.vertices)
    lo_off, hi_off = chi_range
    family = sorted(family, key=lambda r: r.value)
    centers = [schrodinger.p(r.value) for r in family]
    windows = [
        (c + lo_off - tau, c + hi_off + tau) for c in centers
    ]
    for (a_lo, a_hi), (b_lo, b_hi) in zip(windows, windows[1:]):
        if a_hi >= b_lo:
            raise DomainError(
                f"cluster windows [{a_lo}, {a_hi}] and [{b_lo}, {b_hi}] overlap"
            )
    nu = schrodinger.eigenvalues
    counts: dict[int, int] = {}
    members: dict[int, np.ndarray] = {}
    for rec, (w_lo, w_hi) in zip(family, windows):
        idx = np.nonzero((nu >= w_lo) & (nu <= w_hi))[0]
        counts[rec.birth] = int(idx.size)
        members[rec.birth] = idx
    births = [r.birth for r in family]
    threshold = None
    for start in range(len(births)):
        if all(
            counts[r.birth] == r.multiplicity for r in family[start:]
        ):
            threshold = births[start]
            break
    if threshold is None:
        deficits = {
            r.birth: counts[r.birth] - r.multiplicity for r in family
        }
        raise StructuralError(
            f"no generation threshold: cluster count deficits {deficits}"
        )
    clusters = []
    for rec, center in zip(family, centers):
        if rec.birth < threshold or counts[rec.birth] != rec.multiplicity:
            continue
        idx = members[rec.birth]
        v = schrodinger.eigenvectors[:, idx]
        projected = schrodinger.projected_cluster(v, center)
        positions = np.linalg.eigvalsh(projected)
        slack = tau + 1e-9
        if positions[0] < lo_off - slack or positions[-1] > hi_off + slack:
            raise StructuralError(
                f"cluster {rec.birth}: positions escape "
                f"[{lo_off}, {hi_off}] by more than {slack}"
            )
        clusters.append(
            ClusterMeasure(
                j=rec.birth,
                center=center,
                positions=positions,
                d_j=rec.multiplicity,
                projected=projected,
                raw_positions=nu[idx] - center,
            )
        )
    return ClusterReport(
        clusters=clusters,
        counts=counts,
        threshold_j=threshold,
        windows={r.birth: w for r, w in zip(family, windows)},
    )


def cluster_moments(
    psi: ClusterMeasure, k_max: int, cross_check: bool = True
) -> list[float]:
    """Moments of the cluster measure, checked against the trace formula."""
    if k_max < 0:
        raise DomainError(f"k_max must be nonnegative, got {k_max}")
    moments = [
        math.fsum(w * pos ** k for pos, w in psi.atoms)
        for k in range(k_max + 1)
    ]
    if cross_check:
        power = np.eye(psi.projected.shape[0])
        for k in range(k_max + 1):
            trace_value = float(np.trace(power)) / psi.d_j
            if abs(trace_value - moments[k]) > MOMENT_RTOL * max(
                1.0, abs(moments[k]), abs(trace_value)
            ):
                raise StructuralError(
                    f"moment {k} disagrees with the projected trace: "
                    f"{moments[k]} vs {trace_value}"
                )
            power = power @ psi.projected
    return moments


def weak_limit_check(
    chi,
    p: Callable[[float], float],
    j_range,
    F: szego.TraceFunction,
    m: int,
    p_name: str = "p",
    basis: eigenbasis.LevelBasis | None = None,
) -> szego.ConvergenceReport:
    """Cluster averages of F against the potential's pullback integral."""
    base = basis or eigenbasis.level_basis(m)
    j_range = sorted(int(j) for j in j_range)
    family = decimation_family(j_range, base)
    schrodinger = build_schrodinger(p, chi, m, p_name, base)
    report = identify_clusters(schrodinger, family)
    target, target_info = szego.target_integral(chi, F.fn)
    cut = (m + 1) // 2
    by_birth = {c.j: c for c in report.clusters}
    samples = []
    for j in j_range:
        if j not in by_birth:
            raise StructuralError(
                f"birth {j} below the cluster threshold {report.threshold_j}"
            )
        psi = by_birth[j]
        value = math.fsum(w * F.fn(pos) for pos, w in psi.atoms)
        head = psi.d_j if j <= cut else 0
        samples.append(
            szego.Sample(
                index=j,
                d=psi.d_j,
                value=value,
                abs_error=abs(value - target),
                head_mass=head,
                tail_mass=psi.d_j - head,
            )
        )
    return szego.ConvergenceReport(
        target=target,
        samples=samples,
        verdict=szego.compute_verdict(samples),
        metadata={
            "experiment": "cluster-weak-limit",
            "F": F.name,
            "p": p_name,
            "m": m,
            "threshold_j": report.threshold_j,
            "target_info": target_info,
        },
    )


def decimation_family(j_range, base: eigenbasis.LevelBasis) -> list[EigenvalueRecord]:
    """Separated-family records restricted to the requested births."""
    from .decimation import separated_sequence

    family = separated_sequence(max(j_range)).records
    wanted = set(j_range)
    records = [r for r in family if r.birth in wanted]
    missing = wanted - {r.birth for r in records}
    if missing:
        raise DomainError(f"births {sorted(missing)} not in the 5-fold family")
    for rec in records:
        if rec.birth > base.level:
            raise DomainError(
                f"birth {rec.birth} not resolvable at level {base.level}"
            )
    return records


def lipschitz_check(
    p: Callable[[float], float],
    chi1,
    chi2,
    m: int,
    basis: eigenbasis.LevelBasis | None = None,
) -> float:
    """Max sorted-eigenvalue displacement; must not exceed the sup distance."""
    base = basis or eigenbasis.level_basis(m)
    h1 = build_schrodinger(p, chi1, m, basis=base)
    h2 = build_schrodinger(p, chi2, m, basis=base)
    displacement = float(np.max(np.abs(h1.eigenvalues - h2.eigenvalues)))
    bound = sup_difference(chi1, chi2, base.vertices) + 1e-9
    if displacement > bound:
        raise StructuralError(
            f"eigenvalue displacement {displacement} exceeds the potential "
            f"sup-distance bound {bound}"
        )
    return displacement


def random_simple_perturbation(
    rng: np.random.Generator, level: int, delta: float
) -> SimpleFunction:
    """A simple function of sup norm exactly delta."""
    values = rng.uniform(-1.0, 1.0, 3 ** level)
    peak = float(np.max(np.abs(values)))
    return SimpleFunction(level, values * (delta / peak))


@dataclass
class SeparationReport:
    ok: bool
    increasing_ok: bool
    sharp_c: float
    worst_pair: tuple[float, float] | None
    worst_margin: float


def separation_check(
    p: Callable[[float], float],
    lambda_family,
    c: float,
    beta: float,
    lambda_bar: float,
) -> SeparationReport:
    """Pairwise growth condition |p(a)-p(b)| >= c |a-b|^beta above lambda_bar."""
    fam = sorted(float(x) for x in lambda_family)
    if any(x < lambda_bar for x in fam):
        raise DomainError("family members must be at least lambda_bar")
    values = [p(x) for x in fam]
    increasing_ok = all(b > a for a, b in zip(values, values[1:]))
    worst_pair, worst_margin, sharp_c = None, math.inf, math.inf
    for i in range(len(fam)):
        for k in range(i + 1, len(fam)):
            gap = abs(values[k] - values[i])
            need = c * abs(fam[k] - fam[i]) ** beta
            margin = gap - need
            sharp_c = min(sharp_c, gap / abs(fam[k] - fam[i]) ** beta)
            if margin < worst_margin:
                worst_margin = margin
                worst_pair = (fam[i], fam[k])
    return SeparationReport(
        ok=worst_margin >= 0.0 and increasing_ok,
        increasing_ok=increasing_ok,
        sharp_c=sharp_c,
        worst_pair=worst_pair,
        worst_margin=worst_margin,
    )


def clusters_to_csv(clusters: list[ClusterMeasure], path) -> None:
    rows = []
    for psi in clusters:
        for pos, w in psi.atoms:
            rows.append((psi.j, psi.center, pos, w))
    write_csv(path, ("j", "center", "position", "weight"), rows)


def moments_to_csv(
    clusters: list[ClusterMeasure], k_max: int, target_fn, path
) -> None:
    """Moment table: per cluster and power, the moment and its target error."""
    rows = []
    for psi in clusters:
        moments = cluster_moments(psi, k_max)
        for k, moment in enumerate(moments):
            target = target_fn(k)
            rows.append((psi.j, k, moment, target, abs(moment - target)))
    write_csv(path, ("j", "k", "moment", "target", "abs_error"), rows)
