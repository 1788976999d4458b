"""Command-line driver for refinement studies."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import COLUMNS, StudyReport, StudyRow, error_energy, error_l2_p, error_l2_u, get_case, CASES
from .exceptions import CapacityError, ConfigurationError, WGError
from .mesh import GridFamily, build_grid, dump_mesh
from .system import apply_boundary, assemble, estimate_dofs, solve
from .weak_ops import weak_curl_degree

log = logging.getLogger("wgmaxwell")

DEFAULT_MAX_DOFS = 2_000_000


@dataclass(frozen=True)
class StudyConfig:
    family: str = "triangle"
    k: int = 1
    r: int | None = None
    levels: tuple = (1, 4)
    case: str = "e1"
    nu: float = 1.0
    tol: float = 1e-9
    out: str | None = None
    format: str = "table"
    dump_mesh: str | None = None
    dump_matrix: str | None = None
    plotdata: str | None = None
    method: str = "condensed"
    max_dofs: int = DEFAULT_MAX_DOFS

    @property
    def level_list(self) -> list[int]:
        return list(range(self.levels[0], self.levels[1] + 1))


def _parse_levels(text: str) -> tuple:
    text = str(text).strip()
    for sep in ("..", ":", "-"):
        if sep in text:
            a, b = text.split(sep, 1)
            break
    else:
        a = b = text
    try:
        lo, hi = int(a), int(b)
    except ValueError:
        raise ConfigurationError(f"levels: expected A..B, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise ConfigurationError(f"levels: need 1 <= A <= B, got {text!r}")
    return lo, hi


def _optional_int(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return int(text)


_CONVERTERS = {
    "family": lambda s: GridFamily.parse(s).value,
    "k": int,
    "r": _optional_int,
    "levels": _parse_levels,
    "case": str,
    "nu": float,
    "tol": float,
    "out": str,
    "format": str,
    "dump_mesh": str,
    "dump_matrix": str,
    "plotdata": str,
    "method": str,
    "max_dofs": int,
}


def _convert(key: str, value):
    try:
        return _CONVERTERS[key](value)
    except ConfigurationError as exc:
        msg = str(exc)
        raise ConfigurationError(msg if msg.startswith(f"{key}:") else f"{key}: {msg}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key}: invalid value {value!r} ({exc})") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    text = Path(path).read_text()
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigurationError(f"{path}:{n}: unknown key {key!r}")
        values[key] = _convert(key, value)
    return values


def validate(config: StudyConfig) -> StudyConfig:
    if config.k < 1:
        raise ConfigurationError(f"k: must be >= 1, got {config.k}")
    if not config.nu > 0:
        raise ConfigurationError(f"nu: must be positive, got {config.nu}")
    if not config.tol > 0:
        raise ConfigurationError(f"tol: must be positive, got {config.tol}")
    if config.format not in ("csv", "table"):
        raise ConfigurationError(f"format: expected csv or table, got {config.format!r}")
    if config.method not in ("condensed", "direct"):
        raise ConfigurationError(f"method: expected condensed or direct, got {config.method!r}")
    if config.case not in CASES:
        raise ConfigurationError(f"case: unknown case {config.case!r}")
    if config.max_dofs < 1:
        raise ConfigurationError("max_dofs: must be positive")
    try:
        weak_curl_degree(config.family, config.k, config.r)
    except ConfigurationError as exc:
        raise ConfigurationError(f"r: {exc}") from None
    return config


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgmaxwell", description="Weak Galerkin Maxwell refinement studies on the unit square.")
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--family", help="triangle, pentagon or sgrid")
    p.add_argument("--k", help="polynomial degree (>= 1)")
    p.add_argument("--r", help="weak-curl degree override")
    p.add_argument("--levels", help="inclusive level range A..B")
    p.add_argument("--case", help="manufactured solution (default e1)")
    p.add_argument("--nu", help="coefficient nu > 0")
    p.add_argument("--tol", help="relative residual tolerance")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", help="csv or table")
    p.add_argument("--dump-mesh", dest="dump_mesh", help="write each mesh to this path")
    p.add_argument("--dump-matrix", dest="dump_matrix", help="write each reduced matrix (row col value)")
    p.add_argument("--plotdata", help="directory for log10(h) / log10(error) files")
    p.add_argument("--method", help="condensed or direct")
    p.add_argument("--max-dofs", dest="max_dofs", help="refuse levels above this DoF estimate")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_config(argv=None, config_file=None) -> StudyConfig:
    """Build a validated config; flags override file values."""
    args = build_parser().parse_args(argv)
    values = {}
    path = config_file if config_file is not None else args.config
    if path is not None:
        values.update(read_config_file(path))
    for key in _CONVERTERS:
        raw = getattr(args, key, None)
        if raw is not None:
            values[key] = _convert(key, raw)
    return validate(StudyConfig(**values))


# ---------------------------------------------------------------------------
# running


def estimate_level_dofs(family, level: int, k: int) -> int:
    """Exact DoF count of ``build_grid(family, level)`` without building it."""
    # cell sides are never split, so each cell adds (E_1 - 4) inner edges
    base = build_grid(family, 1)
    n = 2 ** (level - 1)
    cells = n * n
    n_edges = cells * (base.n_edges - 4) + 2 * n * (n + 1)
    return estimate_dofs(base.n_elements * cells, n_edges, k)


def _level_path(template: str, level: int) -> Path:
    if "{level}" in template:
        return Path(template.format(level=level))
    p = Path(template)
    return p.with_name(f"{p.stem}_L{level}{p.suffix}")


def dump_matrix(K, path) -> None:
    K = K.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {K.shape[0]} {K.shape[1]} {K.nnz}\n")
        for i, j, v in zip(K.row, K.col, K.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")


class StageError(WGError):
    def __init__(self, stage: str, level: int, cause: Exception):
        super().__init__(f"stage {stage} failed at level {level}: {cause}")
        self.stage, self.level, self.cause = stage, level, cause


def run_level(config: StudyConfig, level: int, case=None) -> StudyRow:
    case = get_case(config.case) if case is None else case
    stage = "mesh"
    t0 = time.perf_counter()
    try:
        ndof = estimate_level_dofs(config.family, level, config.k)
        if ndof > config.max_dofs:
            raise CapacityError(f"{ndof} DoFs exceed the cap of {config.max_dofs}")
        mesh = build_grid(config.family, level)
        if config.dump_mesh:
            dump_mesh(mesh, _level_path(config.dump_mesh, level))
        stage = "assemble"
        system = assemble(mesh, config.k, config.r, config.nu, case)
        stage = "boundary"
        reduced = apply_boundary(system, case)
        if config.dump_matrix:
            dump_matrix(reduced.K, _level_path(config.dump_matrix, level))
        stage = "solve"
        sol = solve(reduced, method=config.method, tol=config.tol)
        stage = "errors"
        row = StudyRow(
            level,
            float(mesh.h),
            int(system.dofmap.total),
            error_l2_u(sol, case),
            error_energy(sol, case),
            error_l2_p(sol, case),
            sol.residual,
            time.perf_counter() - t0,
        )
    except (WGError, MemoryError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        diag = getattr(exc, "diagnostics", None)
        if diag:
            log.error("diagnostics: %s", diag)
        raise StageError(stage, level, exc) from exc
    log.info(
        "level %d: ndof=%d residual=%.1e (%.1fs)", level, row.ndof, row.residual, row.seconds
    )
    return row


def run_study(config: StudyConfig, stream=None) -> StudyReport:
    """Run all levels; write the report to ``config.out`` (or ``stream``)."""
    config = validate(config)
    r = weak_curl_degree(config.family, config.k, config.r)
    report = StudyReport(GridFamily.parse(config.family).value, config.k, r, config.case)
    case = get_case(config.case)
    for level in config.level_list:
        try:
            report.rows.append(run_level(config, level, case))
        except StageError as exc:
            report.failure = str(exc)
            log.error("%s", exc)
            break
    text = render_csv(report) if config.format == "csv" else render_table(report)
    if config.out:
        Path(config.out).write_text(text)
    else:
        (stream or sys.stdout).write(text)
    if config.plotdata and len(report.rows) >= 2:
        emit_plotdata(report, config.plotdata)
    return report


# ---------------------------------------------------------------------------
# output


CSV_HEADER = ["level", "h", "ndof", "err_u_l2", "ord_u_l2", "err_energy", "ord_energy", "err_p_l2", "ord_p_l2"]


def _sci(x: float) -> str:
    return f"{x:.10e}"


def _order(o) -> str:
    return "" if o is None or (isinstance(o, float) and math.isnan(o)) else f"{o:.6f}"


def render_csv(report: StudyReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    orders = {c: report.orders(c) for c in COLUMNS}
    for i, row in enumerate(report.rows):
        w.writerow(
            [row.level, _sci(row.h), row.ndof]
            + [item for c in COLUMNS for item in (_sci(getattr(row, c)), _order(orders[c][i]))]
        )
    if report.failure:
        w.writerow(["FAILED", report.failure])
    return buf.getvalue()


def _table_fmt(x: float) -> str:
    """0.121E-03 style."""
    if x == 0 or not math.isfinite(x):
        return f"{x:.3E}"
    e = math.floor(math.log10(abs(x))) + 1
    m = x / 10.0**e
    if round(abs(m), 3) >= 1.0:
        m, e = m / 10, e + 1
    return f"{m:.3f}E{e:+03d}"


def render_table(report: StudyReport) -> str:
    head = ["Grid", "ndof", "||u-u0||", "O(h^r)", "|||u-uh|||", "O(h^r)", "||p-p0||", "O(h^r)"]
    orders = {c: report.orders(c) for c in COLUMNS}
    body = []
    for i, row in enumerate(report.rows):
        cells = [str(row.level), str(row.ndof)]
        for c in COLUMNS:
            o = orders[c][i]
            cells += [_table_fmt(getattr(row, c)), "" if o is None or math.isnan(o) else f"{o:.1f}"]
        body.append(cells)
    widths = [max(len(r[j]) for r in [head] + body) for j in range(len(head))]
    lines = [f"# {report.family}, k={report.k}, r={report.r}, case {report.case}"]
    lines.append("  ".join(h.rjust(w) for h, w in zip(head, widths)))
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body]
    if report.failure:
        lines.append(f"FAILED: {report.failure}")
    return "\n".join(lines) + "\n"


def emit_plotdata(report: StudyReport, path) -> list[Path]:
    """Write ``log10(h) log10(error)`` pairs, one file per error column."""
    rows = [r for r in report.rows]
    if len(rows) < 2:
        raise ConfigurationError("plot data needs at least two levels")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for c in COLUMNS:
        target = out / f"{report.family}_k{report.k}_{c}.dat"
        with open(target, "w") as fh:
            fh.write(f"# log10(h) log10({c})\n")
            for r in rows:
                fh.write(f"{math.log10(r.h):.12e} {math.log10(getattr(r, c)):.12e}\n")
        written.append(target)
    return written


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    verbose = "-v" in argv or "--verbose" in argv
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        config = parse_config(argv)
    except ConfigurationError as exc:
        print(f"wgmaxwell: usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"wgmaxwell: cannot read config: {exc}", file=sys.stderr)
        return 2
    report = run_study(config)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
