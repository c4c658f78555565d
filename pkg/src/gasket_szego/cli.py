"""Batch front end: JSON-configured experiments with CSV/JSON/SVG artifacts.

Single-process, deterministic-output tool.  Numeric output is formatted at 17
significant digits and all orderings are canonical, so re-running a config
reproduces every CSV byte-for-byte.  `GASKET_SZEGO_THREADS` caps BLAS
threading; it is applied before numpy is imported.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, GasketError

COMMANDS = ("spectrum", "basis", "szego-trace", "szego-det", "clusters", "validate")

_KNOWN_KEYS = {
    "command", "m", "cutoff", "lambda_grid", "mode", "series", "j_range",
    "N", "k_max", "symbol", "F", "p", "chi", "seed", "tolerances",
    "records", "dump_vertices", "dump_operator", "generation_cut",
}


@dataclass
class RunConfig:
    """Fully serializable description of one batch run."""

    command: str
    m: int = 5
    cutoff: float | None = None
    lambda_grid: list | None = None
    mode: str = "single"
    series: int = 6
    j_range: list = field(default_factory=list)
    N: int = 1
    k_max: int = 4
    symbol: dict | None = None
    F: dict = field(default_factory=lambda: {"name": "identity"})
    p: dict = field(default_factory=lambda: {"kind": "identity"})
    chi: dict | None = None
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    dump_vertices: bool = False
    dump_operator: bool = False
    generation_cut: int | None = None
    plot: bool = False

    @staticmethod
    def from_dict(raw: dict, command: str | None = None, plot: bool = False):
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        unknown = set(raw) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        cfg_command = raw.get("command", command)
        if cfg_command is None:
            raise ConfigError("command", "missing")
        if command is not None and cfg_command != command:
            raise ConfigError(
                "command",
                f"config says {cfg_command!r} but the CLI asked for {command!r}",
            )
        if cfg_command not in COMMANDS:
            raise ConfigError("command", f"must be one of {COMMANDS}")
        cfg = RunConfig(command=cfg_command, plot=plot)
        _assign_int(cfg, raw, "m", minimum=0)
        _assign_int(cfg, raw, "N", minimum=1)
        _assign_int(cfg, raw, "k_max", minimum=0)
        _assign_int(cfg, raw, "seed", minimum=0)
        _assign_int(cfg, raw, "series", choices=(5, 6))
        if "generation_cut" in raw:
            _assign_int(cfg, raw, "generation_cut", minimum=1)
        if "cutoff" in raw:
            cfg.cutoff = _number(raw, "cutoff")
        if "lambda_grid" in raw:
            grid = raw["lambda_grid"]
            if not isinstance(grid, list) or not grid:
                raise ConfigError("lambda_grid", "must be a non-empty list")
            cfg.lambda_grid = [_number({"x": g}, "x", f"lambda_grid[{i}]")
                               for i, g in enumerate(grid)]
        if "mode" in raw:
            if raw["mode"] not in ("single", "full"):
                raise ConfigError("mode", "must be 'single' or 'full'")
            cfg.mode = raw["mode"]
        if "j_range" in raw:
            jr = raw["j_range"]
            if not isinstance(jr, list) or not all(isinstance(j, int) for j in jr):
                raise ConfigError("j_range", "must be a list of integers")
            cfg.j_range = jr
        for key in ("symbol", "F", "p", "chi", "tolerances"):
            if key in raw:
                if not isinstance(raw[key], dict):
                    raise ConfigError(key, "must be an object")
                setattr(cfg, key, raw[key])
        if "records" in raw:
            if not isinstance(raw["records"], list):
                raise ConfigError("records", "must be a list of record keys")
            cfg.records = [str(k) for k in raw["records"]]
        for key in ("dump_vertices", "dump_operator"):
            if key in raw:
                if not isinstance(raw[key], bool):
                    raise ConfigError(key, "must be a boolean")
                setattr(cfg, key, raw[key])
        _validate_requirements(cfg)
        return cfg

    def echo(self) -> dict:
        out = {
            "command": self.command,
            "m": self.m,
            "mode": self.mode,
            "series": self.series,
            "j_range": self.j_range,
            "N": self.N,
            "k_max": self.k_max,
            "F": self.F,
            "p": self.p,
            "seed": self.seed,
            "tolerances": self.tolerances,
        }
        for key in ("cutoff", "lambda_grid", "symbol", "chi", "generation_cut"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def _assign_int(cfg, raw, key, minimum=None, choices=None):
    if key not in raw:
        return
    value = raw[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(key, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {value}")
    if choices is not None and value not in choices:
        raise ConfigError(key, f"must be one of {choices}, got {value}")
    setattr(cfg, key, value)


def _number(raw, key, label=None):
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(label or key, f"must be a number, got {value!r}")
    return float(value)


def _validate_requirements(cfg: RunConfig) -> None:
    if cfg.command == "spectrum" and cfg.cutoff is None:
        raise ConfigError("cutoff", "required by the spectrum command")
    if cfg.command in ("szego-trace", "szego-det"):
        if cfg.symbol is None:
            raise ConfigError("symbol", f"required by {cfg.command}")
        if cfg.mode == "full" and cfg.lambda_grid is None:
            raise ConfigError("lambda_grid", "required in full mode")
        if cfg.mode == "single" and not cfg.j_range:
            raise ConfigError("j_range", "required in single mode")
    if cfg.command == "clusters":
        if cfg.chi is None:
            raise ConfigError("chi", "required by the clusters command")
        if not cfg.j_range:
            raise ConfigError("j_range", "required by the clusters command")


def _parse_simple(d: dict, fld: str):
    from .gasket import SimpleFunction

    if not isinstance(d, dict) or "level" not in d or "values" not in d:
        raise ConfigError(fld, "simple function needs 'level' and 'values'")
    try:
        return SimpleFunction(int(d["level"]), [float(v) for v in d["values"]])
    except GasketError as exc:
        raise ConfigError(fld, str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(fld, str(exc)) from exc


def parse_symbol(d: dict, fld: str = "symbol"):
    from . import operators

    kind = d.get("kind")
    try:
        if kind in ("riesz", "bessel"):
            beta = d.get("beta")
            if not isinstance(beta, (int, float)):
                raise ConfigError(f"{fld}.beta", "required number")
            return operators.make_symbol(kind, beta=float(beta))
        if kind == "constant":
            value = d.get("value")
            if not isinstance(value, (int, float)):
                raise ConfigError(f"{fld}.value", "required number")
            value = float(value)
            return operators.constant_symbol(
                lambda lam: value,
                limit=value,
                lower_bound=value if value > 0 else None,
                name=f"constant({value:g})",
            )
        if kind == "multiplication":
            return operators.multiplication_symbol(
                _parse_simple(d.get("chi"), f"{fld}.chi")
            )
        if kind == "separable":
            q = d.get("q")
            if not isinstance(q, dict):
                raise ConfigError(f"{fld}.q", "required object")
            q_fn, q_name, limit = _parse_q(q, f"{fld}.q")
            chi = _parse_simple(d.get("chi"), f"{fld}.chi")
            lower = d.get("lower_bound")
            return operators.separable_symbol(
                q_fn,
                limit,
                chi,
                lower_bound=float(lower) if lower is not None else None,
                name=f"separable({q_name}+chi)",
            )
        if kind == "tabulated":
            entries = d.get("entries")
            if not isinstance(entries, list) or not entries:
                raise ConfigError(f"{fld}.entries", "required non-empty list")
            parsed = [
                (float(lam), _parse_simple(fd, f"{fld}.entries[{i}]"))
                for i, (lam, fd) in enumerate(entries)
            ]
            limit = d.get("limit")
            if isinstance(limit, dict):
                limit = _parse_simple(limit, f"{fld}.limit")
            return operators.tabulated_symbol(parsed, limit_q=limit)
    except GasketError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(fld, str(exc)) from exc
    raise ConfigError(f"{fld}.kind", f"unknown symbol kind {kind!r}")


def _parse_q(q: dict, fld: str):
    form = q.get("form")
    if form == "power":
        beta = q.get("beta")
        if not isinstance(beta, (int, float)) or beta <= 0:
            raise ConfigError(f"{fld}.beta", "required positive number")
        beta = float(beta)
        return (lambda lam: lam ** (-beta)), f"lam^-{beta:g}", 0.0
    if form == "constant":
        value = q.get("value")
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{fld}.value", "required number")
        value = float(value)
        return (lambda lam: value), f"{value:g}", value
    raise ConfigError(f"{fld}.form", f"unknown q form {form!r}")


def parse_trace_function(d: dict, fld: str = "F"):
    from . import szego

    name = d.get("name")
    try:
        params = {k: v for k, v in d.items() if k != "name"}
        return szego.make_trace_function(name, **params)
    except GasketError as exc:
        raise ConfigError(fld, str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(fld, str(exc)) from exc


def parse_p(d: dict, fld: str = "p"):
    kind = d.get("kind", "identity")
    if kind == "identity":
        return (lambda lam: lam), "identity"
    if kind == "power":
        exponent = d.get("exponent")
        if not isinstance(exponent, (int, float)):
            raise ConfigError(f"{fld}.exponent", "required number")
        exponent = float(exponent)
        return (lambda lam: lam ** exponent), f"power({exponent:g})"
    if kind == "affine":
        scale = float(d.get("scale", 1.0))
        offset = float(d.get("offset", 0.0))
        return (lambda lam: scale * lam + offset), f"affine({scale:g},{offset:g})"
    raise ConfigError(f"{fld}.kind", f"unknown p kind {kind!r}")


def _configure_threads() -> None:
    cap = os.environ.get("GASKET_SZEGO_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def run(config: RunConfig, out_dir, config_text: str | None = None) -> int:
    """Execute one config; writes artifacts plus a manifest, returns 0."""
    from .serialize import sha256_file, write_json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    started = time.perf_counter()
    handler = _HANDLERS[config.command]
    outputs = handler(config, out_dir)
    timings["total_seconds"] = time.perf_counter() - started

    echo_path = out_dir / "config.json"
    if config_text is not None:
        echo_path.write_text(config_text, encoding="utf-8")
    else:
        write_json(echo_path, config.echo())
    manifest = {
        "command": config.command,
        "config": config.echo(),
        "package_version": _package_version(),
        "python_version": platform.python_version(),
        "numpy_version": _numpy_version(),
        "renormalization": "(3/2)*5^m",
        "threads_cap": os.environ.get("GASKET_SZEGO_THREADS"),
        "timings": timings,
        "outputs": {
            name: {
                "sha256": sha256_file(out_dir / name),
                "bytes": (out_dir / name).stat().st_size,
            }
            for name in sorted(outputs)
        },
    }
    write_json(out_dir / "manifest.json", manifest)
    return 0


def _package_version() -> str:
    from . import __version__

    return __version__


def _numpy_version() -> str:
    import numpy

    return numpy.__version__


def _cmd_spectrum(config: RunConfig, out_dir: Path) -> list[str]:
    from . import decimation

    table = decimation.enumerate_spectrum(config.cutoff)
    decimation.spectrum_to_csv(table, out_dir / "spectrum.csv")
    return ["spectrum.csv"]


def _sanitize(key: str) -> str:
    return key.replace(":", "_").replace("+", "p").replace("-", "m")


def _cmd_basis(config: RunConfig, out_dir: Path) -> list[str]:
    from . import eigenbasis, gasket
    from .serialize import write_csv

    basis = eigenbasis.build_level_basis(config.m)
    rows = [
        (b.record.key, b.graph_value, b.dim, b.record.value, b.record.multiplicity)
        for b in basis.bundles
    ]
    write_csv(
        out_dir / "bundles.csv",
        ("record", "graph_value", "dim", "value", "multiplicity"),
        rows,
    )
    outputs = ["bundles.csv"]
    for key in config.records:
        bundle = basis.bundle_for(key)
        name = f"bundle_{_sanitize(key)}.csv"
        eigenbasis.save_bundle(bundle, out_dir / name)
        outputs.append(name)
    if config.dump_vertices:
        gasket.vertices_to_csv(
            basis.vertices, basis.measure, out_dir / "vertices.csv"
        )
        outputs.append("vertices.csv")
    return outputs


def _szego_report(config: RunConfig, out_dir: Path, determinant: bool) -> list[str]:
    from . import eigenbasis, operators, szego

    symbol = parse_symbol(config.symbol)
    basis = eigenbasis.level_basis(config.m)
    if determinant:
        if config.mode == "single":
            report = szego.szego_logdet_single_series(
                symbol, config.series, config.j_range, config.N, config.m,
                generation_cut=config.generation_cut, basis=basis,
            )
        else:
            report = szego.szego_logdet_full(
                symbol, config.lambda_grid, config.m,
                generation_cut=config.generation_cut, basis=basis,
            )
    else:
        F = parse_trace_function(config.F)
        if config.mode == "single":
            report = szego.szego_trace_single_series(
                symbol, F, config.series, config.j_range, config.N, config.m,
                generation_cut=config.generation_cut, basis=basis,
            )
        else:
            report = szego.szego_trace_full(
                symbol, F, config.lambda_grid, config.m,
                generation_cut=config.generation_cut, basis=basis,
            )
    report.to_csv(out_dir / "report.csv")
    report.to_json(out_dir / "report.json")
    outputs = ["report.csv", "report.json"]
    if config.plot:
        szego.plot_error_svg(report, out_dir / "report.svg")
        outputs.append("report.svg")
    if config.dump_operator and config.mode == "single":
        bundle = basis.family_bundle(config.series, config.j_range[-1])
        sel = operators.selection_from_bundles([bundle])
        op = operators.compress(symbol, sel, basis.measure)
        operators.operator_to_csv(
            op, out_dir / "operator.csv", out_dir / "operator_meta.json"
        )
        outputs.extend(["operator.csv", "operator_meta.json"])
    return outputs


def _cmd_szego_trace(config: RunConfig, out_dir: Path) -> list[str]:
    return _szego_report(config, out_dir, determinant=False)


def _cmd_szego_det(config: RunConfig, out_dir: Path) -> list[str]:
    return _szego_report(config, out_dir, determinant=True)


def _cmd_clusters(config: RunConfig, out_dir: Path) -> list[str]:
    from . import clusters as cl
    from . import eigenbasis, szego

    p_fn, p_name = parse_p(config.p)
    chi = _parse_simple(config.chi, "chi")
    base = eigenbasis.level_basis(config.m)
    family = cl.decimation_family(config.j_range, base)
    schrodinger = cl.build_schrodinger(p_fn, chi, config.m, p_name, base)
    report = cl.identify_clusters(schrodinger, family)
    cl.clusters_to_csv(report.clusters, out_dir / "clusters.csv")

    from .gasket import SimpleFunction, integrate_simple

    cl.moments_to_csv(
        report.clusters,
        config.k_max,
        lambda k: integrate_simple(chi, k),
        out_dir / "moments.csv",
    )
    weak = cl.weak_limit_check(
        chi, p_fn, config.j_range, szego.f_identity(), config.m, p_name, base
    )
    weak.to_csv(out_dir / "weak_limit.csv")
    weak.to_json(out_dir / "weak_limit.json")
    outputs = ["clusters.csv", "moments.csv", "weak_limit.csv", "weak_limit.json"]
    if config.plot:
        szego.plot_error_svg(weak, out_dir / "weak_limit.svg")
        outputs.append("weak_limit.svg")
    return outputs


def _cmd_validate(config: RunConfig, out_dir: Path) -> list[str]:
    import numpy as np

    from . import decimation, eigenbasis, operators
    from .gasket import (
        SimpleFunction,
        build_dirichlet_laplacian,
        build_vertices,
        integrate_simple,
    )
    from .serialize import fmt, write_csv

    m = config.m
    rows: list[tuple[str, str, str]] = []

    def check(name: str, ok: bool, detail: str) -> None:
        rows.append((name, "PASS" if ok else "FAIL", detail))

    for level in range(1, m + 1):
        vertices = build_vertices(level)
        lap = build_dirichlet_laplacian(vertices)
        dense = np.linalg.eigvalsh(lap.matrix)
        predicted = decimation.truncated_graph_spectrum(level)
        expanded = np.sort(
            np.concatenate(
                [np.full(g.multiplicity, g.graph_value) for g in predicted]
            )
        )
        count_ok = expanded.size == dense.size == decimation.interior_dimension(level)
        rel = float(
            np.max(np.abs(dense - expanded) / np.maximum(1.0, np.abs(expanded)))
        ) if count_ok else float("nan")
        check(
            f"decimation-oracle-m{level}",
            count_ok and rel <= 1e-8,
            f"count={dense.size};max_rel_diff={fmt(rel)}",
        )

    for level in range(1, min(m + 2, 8) + 1):
        total = sum(g.multiplicity for g in decimation.truncated_graph_spectrum(level))
        check(
            f"multiplicity-sum-m{level}",
            total == decimation.interior_dimension(level),
            f"sum={total};dim={decimation.interior_dimension(level)}",
        )

    basis = eigenbasis.level_basis(m)
    for series in (6, 5):
        lo = 2
        for birth in range(lo, min(m, 5) + 1):
            bundle = basis.family_bundle(series, birth)
            for n_level in range(1, birth):
                counts = decimation.localization_counts(series, birth, n_level)
                try:
                    split = eigenbasis.localized_split(bundle, n_level)
                    ok = split.localized_total == counts.d_j_N
                    detail = (
                        f"per_cell={counts.m_j_N};localized={split.localized_total};"
                        f"alpha={split.nonlocalized.shape[1]}"
                    )
                except GasketError as exc:
                    ok, detail = False, str(exc)
                check(f"localization-s{series}-j{birth}-N{n_level}", ok, detail)

    if m >= 3:
        birth = min(m, 4)
        f = SimpleFunction(1, [1.0, 2.0, 3.0])
        bundle = basis.family_bundle(6, birth)
        split = eigenbasis.localized_split(bundle, 1)
        sel = operators.selection_from_split(split)
        op = operators.compress(
            operators.multiplication_symbol(f), sel, basis.measure
        )
        counts = decimation.localization_counts(6, birth, 1)
        loc = counts.d_j_N
        r_block = op.matrix[:loc, :loc]
        ok = op.block_snap is not None and op.block_snap <= 1e-10
        detail = f"block_snap={fmt(op.block_snap)}"
        for k in (1, 2, 3):
            lhs = float(np.trace(np.linalg.matrix_power(r_block, k)))
            rhs = counts.d_j_N * integrate_simple(f, k)
            ok = ok and abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))
            detail += f";trace_R^{k}_dev={fmt(abs(lhs - rhs))}"
        check(f"block-exactness-j{birth}-N1", ok, detail)

    # seeded eigenvalue-stability trials; deterministic given (config, seed)
    from . import clusters

    trial_m = min(m, 4)
    if trial_m >= 2:
        rng = np.random.default_rng(config.seed)
        base_chi = SimpleFunction(1, [0.8, 1.0, 1.2])
        trial_basis = eigenbasis.level_basis(trial_m)
        for trial in range(10):
            delta = float(rng.uniform(0.01, 1.0))
            eta = clusters.random_simple_perturbation(rng, 1, delta)
            chi2 = SimpleFunction(1, base_chi.values + eta.values)
            disp = clusters.lipschitz_check(
                lambda lam: lam, base_chi, chi2, trial_m, basis=trial_basis
            )
            check(
                f"lipschitz-trial-{trial}",
                disp <= delta + 1e-9,
                f"delta={fmt(delta)};displacement={fmt(disp)}",
            )

    write_csv(out_dir / "validate.csv", ("check", "status", "detail"), rows)
    failures = [r for r in rows if r[1] == "FAIL"]
    if failures:
        raise GasketError(
            f"{len(failures)} validation checks failed, first: {failures[0]}"
        )
    return ["validate.csv"]


_HANDLERS = {
    "spectrum": _cmd_spectrum,
    "basis": _cmd_basis,
    "szego-trace": _cmd_szego_trace,
    "szego-det": _cmd_szego_det,
    "clusters": _cmd_clusters,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    _configure_threads()
    parser = argparse.ArgumentParser(
        prog="gasket-szego",
        description="Spectral experiments on the Sierpinski gasket",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--plot", action="store_true", help="also write SVG plots")
    args = parser.parse_args(argv)

    try:
        config_text = Path(args.config).read_text(encoding="utf-8")
        raw = json.loads(config_text)
    except OSError as exc:
        print(f"config: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config: invalid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        config = RunConfig.from_dict(raw, command=args.command, plot=args.plot)
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config, Path(args.out), config_text=config_text)
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    except GasketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
