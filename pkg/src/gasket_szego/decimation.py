"""Exact enumeration of the Dirichlet spectrum via spectral decimation.

Graph eigenvalues at consecutive levels are related by lam_prev = lam*(5-lam).
Dirichlet eigenvalues are born with seed graph value 2 (birth 1, simple),
5 (any birth j, multiplicity (3^(j-1)+3)/2), or 6 (birth j >= 2, multiplicity
(3^j-3)/2), and continue upward through either root of the inverse relation.
The only constraint is at a 6 seed: its contracting preimage is the forbidden
value 2, so the first step after a 6 birth must take the expanding root 3.
A record's numeric eigenvalue is the renormalized limit (3/2) 5^m lam_m along
an eventually-contracting branch sequence.

Every structural claim here is validated wholesale against the dense
eigensolve of the graph Laplacians (see the test suite): the truncated record
multiset reproduces the level-m spectrum elementwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    ConvergenceError,
    DomainError,
    ResourceLimitError,
)
from .serialize import append_footer, write_csv

CONTRACTING = "-"
EXPANDING = "+"

DEFAULT_TOL = 1e-12
MAX_STEPS = 60
DEFAULT_RECORD_CAP = 200_000
PRUNE_SAFETY = 2.0

_SEEDS = (2, 5, 6)


def series_multiplicity(series: int, birth: int) -> int:
    if series == 2:
        if birth != 1:
            raise DomainError("2-series eigenvalues all have birth 1")
        return 1
    if series == 5:
        if birth < 1:
            raise DomainError(f"5-series birth must be >= 1, got {birth}")
        return (3 ** (birth - 1) + 3) // 2
    if series == 6:
        if birth < 2:
            raise DomainError(f"6-series birth must be >= 2, got {birth}")
        return (3 ** birth - 3) // 2
    raise DomainError(f"series must be one of {_SEEDS}, got {series}")


def decimation_preimages(lambda_prev: float) -> tuple[float, float]:
    """Both roots of lam*(5-lam) = lambda_prev, contracting root first.

    The contracting root lies in [0, 5/2); it is evaluated in the
    cancellation-free form 2*lambda_prev / (5 + sqrt(25 - 4*lambda_prev)).
    """
    if lambda_prev > 25.0 / 4.0:
        raise DomainError(
            f"no real decimation preimages for {lambda_prev} > 25/4"
        )
    disc = math.sqrt(25.0 - 4.0 * lambda_prev)
    return 2.0 * lambda_prev / (5.0 + disc), (5.0 + disc) / 2.0


def _apply_branch(lam: float, sign: str, explicit: bool) -> float:
    lo, hi = decimation_preimages(lam)
    if sign == CONTRACTING:
        # the contracting preimage of 6 is the forbidden seed value 2
        if lam == 6.0:
            if explicit:
                raise DomainError(
                    "contracting branch from seed 6 lands on the forbidden "
                    "value 2; the first step after a 6 birth must expand"
                )
            return hi
        return lo
    if sign == EXPANDING:
        return hi
    raise DomainError(f"branch sign must be '+' or '-', got {sign!r}")


def _normalize_branches(series: int, branches) -> tuple[str, ...]:
    branches = tuple(branches)
    if any(s not in (CONTRACTING, EXPANDING) for s in branches):
        raise DomainError(f"branch signs must be '+'/'-': {branches}")
    if series == 6:
        if not branches:
            branches = (EXPANDING,)
        elif branches[0] != EXPANDING:
            raise DomainError("a 6-series record must expand at its first step")
    return branches


def renormalized_value(level: int, lam: float) -> float:
    return 1.5 * 5.0 ** level * lam


def eigenvalue_limit(
    series: int,
    birth: int,
    branches=(),
    tol: float = DEFAULT_TOL,
    max_steps: int = MAX_STEPS,
    with_trace: bool = False,
):
    """Renormalized limit (3/2) 5^m lam_m of a branch-labelled eigenvalue.

    Explicit `branches` are applied after birth; past them the iteration takes
    the contracting root, along which the renormalized value increases to its
    limit.  Stops when successive values agree to `tol` relatively.
    """
    series_multiplicity(series, birth)  # validates the pair
    if tol <= 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    branches = _normalize_branches(series, branches)
    lam = float(series)
    level = birth
    trace = [lam]
    prev = renormalized_value(level, lam)
    for step in range(max_steps):
        explicit = step < len(branches)
        sign = branches[step] if explicit else CONTRACTING
        lam = _apply_branch(lam, sign, explicit)
        level += 1
        trace.append(lam)
        value = renormalized_value(level, lam)
        if not explicit and abs(value - prev) < tol * abs(value):
            if with_trace:
                return value, tuple(trace)
            return value
        prev = value
    raise ConvergenceError(
        f"renormalized eigenvalue did not stabilize to {tol} within "
        f"{max_steps} steps (series {series}, birth {birth}, "
        f"{len(branches)} explicit branches)"
    )


@dataclass(frozen=True)
class EigenvalueRecord:
    """One Dirichlet eigenvalue of the renormalized limit operator."""

    series: int
    birth: int
    branches: tuple[str, ...]
    graph_values: tuple[float, ...]
    value: float
    multiplicity: int

    @property
    def key(self) -> str:
        return f"{self.series}:{self.birth}:{''.join(self.branches)}"

    def graph_value_at(self, m: int) -> float:
        """Graph eigenvalue lam_m of this record's level-m truncation."""
        if m < self.birth:
            raise DomainError(
                f"record born at level {self.birth} is absent at level {m}"
            )
        steps = m - self.birth
        if steps < len(self.graph_values):
            return self.graph_values[steps]
        lam = self.graph_values[-1]
        for _ in range(steps - len(self.graph_values) + 1):
            lam = _apply_branch(lam, CONTRACTING, explicit=False)
        return lam


def make_record(
    series: int, birth: int, branches=(), tol: float = DEFAULT_TOL
) -> EigenvalueRecord:
    branches = _normalize_branches(series, branches)
    value, trace = eigenvalue_limit(series, birth, branches, tol, with_trace=True)
    return EigenvalueRecord(
        series=series,
        birth=birth,
        branches=branches,
        graph_values=trace,
        value=value,
        multiplicity=series_multiplicity(series, birth),
    )


@dataclass
class SpectrumTable:
    """All eigenvalue records with value <= cutoff, sorted ascending."""

    records: list[EigenvalueRecord]
    cutoff: float

    @property
    def d_lambda(self) -> int:
        return sum(r.multiplicity for r in self.records)

    def count_upto(self, lam: float) -> int:
        return sum(r.multiplicity for r in self.records if r.value <= lam)

    def values(self) -> list[float]:
        return [r.value for r in self.records]


def _sort_key(record: EigenvalueRecord):
    return (record.value, record.series, record.birth, record.branches)


def enumerate_spectrum(
    cutoff: float,
    record_cap: int = DEFAULT_RECORD_CAP,
    safety: float = PRUNE_SAFETY,
    tol: float = DEFAULT_TOL,
) -> SpectrumTable:
    """Every Dirichlet eigenvalue <= cutoff, once per record with multiplicity.

    Depth-first search over branch prefixes.  The partial renormalized value
    (3/2) 5^m lam_m never decreases along any branch, so a subtree whose
    expanding child already exceeds safety*cutoff cannot contain further
    records; each emitted record is then filtered by its exact limit.
    """
    if cutoff <= 0:
        raise DomainError(f"cutoff must be positive, got {cutoff}")
    records: list[EigenvalueRecord] = []

    def emit(series, birth, branches):
        rec = make_record(series, birth, branches, tol)
        if rec.value <= cutoff:
            records.append(rec)
            if len(records) > record_cap:
                raise ResourceLimitError(
                    f"spectrum enumeration exceeded the record cap {record_cap} "
                    f"below cutoff {cutoff}"
                )
            return True
        return False

    def visit(series, birth, branches, lam, level):
        canonical = not branches or branches[-1] == EXPANDING
        if canonical:
            emit(series, birth, branches)
        lo, hi = decimation_preimages(lam)
        if lam == 6.0:
            lo = hi  # forced step, single child
        partial_plus = renormalized_value(level + 1, hi)
        if partial_plus > safety * cutoff:
            # every deeper record contains an expanding step at least this
            # large, so the whole subtree lies above the cutoff
            return
        visit(series, birth, branches + (EXPANDING,), hi, level + 1)
        if lam != 6.0:
            visit(series, birth, branches + (CONTRACTING,), lo, level + 1)

    for series in _SEEDS:
        birth = 1 if series in (2, 5) else 2
        while True:
            minimal = make_record(series, birth, (), tol)
            if minimal.value > cutoff:
                break
            if series == 6:
                # canonical root already contains the forced expanding step
                visit(series, birth, (EXPANDING,), 3.0, birth + 1)
            else:
                visit(series, birth, (), float(series), birth)
            if series == 2:
                break
            birth += 1

    records.sort(key=_sort_key)
    return SpectrumTable(records=records, cutoff=cutoff)


@dataclass(frozen=True)
class GraphEigenvalue:
    """A level-m graph eigenvalue with its canonical record."""

    graph_value: float
    series: int
    birth: int
    prefix: tuple[str, ...]
    multiplicity: int
    record: EigenvalueRecord


def _canonical_from_prefix(series: int, prefix: tuple[str, ...]) -> tuple[str, ...]:
    trimmed = prefix
    while trimmed and trimmed[-1] == CONTRACTING:
        trimmed = trimmed[:-1]
    if series == 6 and not trimmed:
        trimmed = (EXPANDING,)
    return trimmed


def truncated_graph_spectrum(m: int, tol: float = DEFAULT_TOL) -> list[GraphEigenvalue]:
    """All level-m Dirichlet graph eigenvalues predicted by decimation.

    One entry per distinct eigenvalue, carrying its multiplicity and the
    canonical (trailing-contraction trimmed) record.  The multiset expanded by
    multiplicity has exactly (3^(m+1)-3)/2 elements.
    """
    if m < 1:
        raise DomainError(f"graph spectra start at level 1, got {m}")
    out: list[GraphEigenvalue] = []
    for series in _SEEDS:
        births = (
            (1,)
            if series == 2
            else range(1, m + 1)
            if series == 5
            else range(2, m + 1)
        )
        for birth in births:
            steps = m - birth
            if series == 6:
                prefixes = (
                    [()]
                    if steps == 0
                    else [
                        (EXPANDING,) + rest
                        for rest in _sign_strings(steps - 1)
                    ]
                )
            else:
                prefixes = _sign_strings(steps)
            for prefix in prefixes:
                lam = float(series)
                for step, sign in enumerate(prefix):
                    lam = _apply_branch(lam, sign, explicit=True)
                record = make_record(
                    series, birth, _canonical_from_prefix(series, prefix), tol
                )
                out.append(
                    GraphEigenvalue(
                        graph_value=lam,
                        series=series,
                        birth=birth,
                        prefix=prefix,
                        multiplicity=record.multiplicity,
                        record=record,
                    )
                )
    out.sort(key=lambda g: (g.graph_value, g.series, g.birth, g.prefix))
    return out


def interior_dimension(m: int) -> int:
    return (3 ** (m + 1) - 3) // 2


@dataclass(frozen=True)
class LocalizationCounts:
    """Eigenspace bookkeeping at approximation level N (level N < birth)."""

    series: int
    birth: int
    level: int
    d_j: int
    d_j_N: int
    alpha_N: int
    m_j_N: int


def localization_counts(series: int, birth: int, level: int) -> LocalizationCounts:
    """Closed-form localized / non-localized counts for a 5- or 6-series space.

    For the 5-series the non-localized count is defined as d_j - d_j^N =
    (3^N+3)/2, which is what the dense eigensolve confirms; the per-cell and
    localized totals are (3^(j-N-1)-1)/2 and (3^(j-1)-3^N)/2.
    """
    if series not in (5, 6):
        raise DomainError(f"localization applies to series 5 and 6, got {series}")
    if not 1 <= level < birth:
        raise DomainError(
            f"approximation level must satisfy 1 <= N < birth, got N={level}, "
            f"birth={birth}"
        )
    d_j = series_multiplicity(series, birth)
    if series == 6:
        d_j_N = (3 ** birth - 3 ** (level + 1)) // 2
        m_j_N = (3 ** (birth - level) - 3) // 2
    else:
        d_j_N = (3 ** (birth - 1) - 3 ** level) // 2
        m_j_N = (3 ** (birth - level - 1) - 1) // 2
    return LocalizationCounts(
        series=series,
        birth=birth,
        level=level,
        d_j=d_j,
        d_j_N=d_j_N,
        alpha_N=d_j - d_j_N,
        m_j_N=m_j_N,
    )


@dataclass
class SeparatedFamily:
    """The 5-fold 6-series family and each member's gap to the rest."""

    records: list[EigenvalueRecord]
    gaps: list[float]


def separated_sequence(j_max: int, tol: float = DEFAULT_TOL) -> SeparatedFamily:
    """6-series records of births 2..max(2, j_max) with 5-fold scaling.

    Each member is the smallest 6-series eigenvalue of its birth (forced
    expanding step, then all-contracting), so consecutive values scale by
    exactly 5.  Gaps to the nearest other eigenvalue come from a full
    enumeration around the family.
    """
    if j_max < 1:
        raise DomainError(f"j_max must be >= 1, got {j_max}")
    births = range(2, max(2, j_max) + 1)
    records = [make_record(6, j, (EXPANDING,), tol) for j in births]
    table = enumerate_spectrum(6.0 * records[-1].value, tol=tol)
    gaps = []
    for rec in records:
        others = [
            abs(other.value - rec.value)
            for other in table.records
            if other.key != rec.key
        ]
        gaps.append(min(others))
    return SeparatedFamily(records=records, gaps=gaps)


def resolvable_window(m: int, tol: float = DEFAULT_TOL) -> float:
    """Largest cutoff whose spectrum is fully resolvable at graph level m.

    A record is resolvable when its canonical branch string fits within the
    m - birth free steps.  The infimum of non-resolvable values is attained
    either at the smallest birth-(m+1) record or at a record of birth <= m
    whose single expanding step sits one level beyond the truncation.
    """
    candidates = [eigenvalue_limit(5, m + 1, (), tol)]
    candidates.append(
        eigenvalue_limit(2, 1, (CONTRACTING,) * (m - 1) + (EXPANDING,), tol)
    )
    for j in range(1, m + 1):
        candidates.append(
            eigenvalue_limit(5, j, (CONTRACTING,) * (m - j) + (EXPANDING,), tol)
        )
    for j in range(2, m + 1):
        if j < m:
            branches = (
                (EXPANDING,) + (CONTRACTING,) * (m - j - 1) + (EXPANDING,)
            )
        else:
            branches = (EXPANDING, EXPANDING)
        candidates.append(eigenvalue_limit(6, j, branches, tol))
    return min(candidates)


def spectrum_to_csv(table: SpectrumTable, path) -> None:
    rows = [
        (r.value, r.series, r.birth, r.multiplicity, "".join(r.branches))
        for r in table.records
    ]
    write_csv(path, ("value", "series", "birth", "multiplicity", "branches"), rows)
    append_footer(path, f"# d_lambda,{table.d_lambda}")


def _sign_strings(length: int) -> list[tuple[str, ...]]:
    if length == 0:
        return [()]
    shorter = _sign_strings(length - 1)
    return [s + (EXPANDING,) for s in shorter] + [
        s + (CONTRACTING,) for s in shorter
    ]
