"""Config files, score-distribution CSVs and deterministic CSV output."""
from __future__ import annotations

import csv
import io
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analysis import Problem
from .core import (
    RENORMALIZE_TOL,
    SUM_TOL,
    GroupSpec,
    ModelError,
    RenormalizationWarning,
    ScoreDistribution,
)
from .objectives import OutcomeFn, UtilityFn
from .solvers import SoftPenalty

CSV_HEADER = ("score", "group", "pmf", "repay_prob")


class ConfigError(ValueError):
    """The config or input data failed validation."""


def fmt(value) -> str:
    """Round-trip text form: 17 significant digits for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path | None, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write rows with ``\\n`` line endings; return the text as well."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


@dataclass(frozen=True)
class ScoreTable:
    """Per-group distributions read from a CSV file."""

    scores: np.ndarray
    groups: dict[str, tuple[np.ndarray, np.ndarray]]
    renormalized: tuple[str, ...] = ()


def ingest_distribution_csv(path) -> ScoreTable:
    """Read ``score,group,pmf,repay_prob`` rows.

    Every group must list the same evenly spaced scores.  Masses within
    1e-6 of summing to one are rescaled with a warning.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ConfigError(f"expected header {','.join(CSV_HEADER)!r}")
        data: dict[str, dict[float, tuple[float, float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ConfigError(f"line {lineno}: expected 4 fields")
            try:
                score, pmf, rho = float(row[0]), float(row[2]), float(row[3])
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from exc
            group = row[1].strip()
            if not (np.isfinite(score) and np.isfinite(pmf) and np.isfinite(rho)):
                raise ConfigError(f"line {lineno}: non-finite value")
            if pmf < 0 or not 0 <= rho <= 1:
                raise ConfigError(f"line {lineno}: pmf must be >= 0 and repay_prob in [0, 1]")
            rows = data.setdefault(group, {})
            if score in rows:
                raise ConfigError(f"line {lineno}: duplicate score {row[0]} for group {group!r}")
            rows[score] = (pmf, rho)
    if not data:
        raise ConfigError("no data rows")
    all_scores = sorted(set().union(*data.values()))
    grid = np.array(all_scores)
    if grid.size >= 2:
        steps = np.diff(grid)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ConfigError("missing score: the score grid is not evenly spaced")
    groups, renorm = {}, []
    for name, rows in data.items():
        missing = [s for s in all_scores if s not in rows]
        if missing:
            raise ConfigError(f"missing score {fmt(missing[0])} for group {name!r}")
        pmf = np.array([rows[s][0] for s in all_scores])
        rho = np.array([rows[s][1] for s in all_scores])
        total = pmf.sum()
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ConfigError(f"group {name!r}: pmf sums to {fmt(total)}")
        if abs(total - 1.0) > SUM_TOL:
            warnings.warn(f"group {name!r}: pmf sums to {fmt(total)}; renormalizing",
                          RenormalizationWarning, stacklevel=2)
            renorm.append(name)
        groups[name] = (pmf / total, rho)
    return ScoreTable(grid, groups, tuple(renorm))


def write_distribution_csv(path, table: ScoreTable) -> str:
    scores = [int(s) if float(s).is_integer() else float(s) for s in table.scores]
    rows = [(s, name, p, r)
            for name, (pmf, rho) in table.groups.items()
            for s, p, r in zip(scores, pmf, rho)]
    return write_csv(path, CSV_HEADER, rows)


@dataclass(frozen=True)
class ProblemConfig:
    """A parsed config file."""

    problem: Problem
    labels: np.ndarray
    criteria: tuple[str, ...] = ("maxutil", "demparity", "eqopt")
    outcome_tolerance: float | None = None
    lam: float | None = None
    sweep: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    name: str = ""


def _vec(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"[{where}] missing key {key!r}")
    try:
        arr = np.array(table[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {key}: {exc}") from exc
    if arr.ndim != 1:
        raise ConfigError(f"[{where}] {key} must be a list of numbers")
    return arr


def _num(table: dict, key: str, where: str, default=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"[{where}] missing key {key!r}")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"[{where}] {key} must be a number")
    return float(v)


def _groups_from(cfg: dict, base: Path) -> tuple[list, np.ndarray]:
    if "data" in cfg:
        d = cfg["data"]
        csv_path = base / str(d.get("csv", ""))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RenormalizationWarning)
            table = ingest_distribution_csv(csv_path)
        names = (d.get("group_a"), d.get("group_b"))
        for n in names:
            if n not in table.groups:
                raise ConfigError(f"[data] group {n!r} not found in {csv_path.name}")
        g_a = _num(d, "proportion_a", "data")
        specs = [(n, *table.groups[n], p) for n, p in zip(names, (g_a, 1.0 - g_a))]
        return specs, table.scores
    specs = []
    for key in ("group_a", "group_b"):
        if key not in cfg:
            raise ConfigError(f"missing [{key}] table")
        t = cfg[key]
        specs.append((str(t.get("name", key[-1].upper())), _vec(t, "pmf", key),
                      _vec(t, "rho", key), _num(t, "proportion", key)))
    C = specs[0][1].size
    labels = np.array(cfg.get("grid", {}).get("labels", np.arange(1, C + 1)), dtype=float)
    return specs, labels


def _read_toml(path: Path) -> dict:
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def data_csv_path(config_path) -> Path:
    """Score CSV referenced by a config's ``[data]`` table."""
    path = Path(config_path)
    cfg = _read_toml(path)
    if "csv" not in cfg.get("data", {}):
        raise ConfigError("config has no [data] csv entry")
    return path.parent / str(cfg["data"]["csv"])


def load_config(path) -> ProblemConfig:
    """Parse and validate a TOML config."""
    path = Path(path)
    cfg = _read_toml(path)
    specs, labels = _groups_from(cfg, path.parent)
    try:
        groups = tuple(GroupSpec(ScoreDistribution(pmf), rho, prop, name)
                       for name, pmf, rho, prop in specs)
        if labels.size != groups[0].C or groups[0].C != groups[1].C:
            raise ConfigError("score grid sizes disagree")
        if abs(groups[0].proportion + groups[1].proportion - 1.0) > SUM_TOL:
            raise ConfigError("group proportions must sum to 1")
        u_cfg = cfg.get("utility", {})
        if "values" in u_cfg:
            utility = UtilityFn(_vec(u_cfg, "values", "utility"))
        else:
            up, um = _num(u_cfg, "u_plus", "utility"), _num(u_cfg, "u_minus", "utility")
            utility = tuple(UtilityFn.affine(g.rho, up, um) for g in groups)
        o_cfg = cfg.get("outcome", {})
        dn = _vec(o_cfg, "delta_n", "outcome") if "delta_n" in o_cfg else None
        if "values" in o_cfg:
            outcome = OutcomeFn(_vec(o_cfg, "values", "outcome"), dn)
        else:
            cp, cm = _num(o_cfg, "c_plus", "outcome"), _num(o_cfg, "c_minus", "outcome")
            clamp = bool(o_cfg.get("clamp", False))
            outcome = tuple(OutcomeFn(OutcomeFn.affine(g.rho, cp, cm, clamp, labels).delta_p, dn)
                            for g in groups)
        s_cfg = cfg.get("soft", {})
        kind = str(s_cfg.get("penalty", "abs"))
        if kind == "table":
            penalty = SoftPenalty("table", tuple(_vec(s_cfg, "points", "soft")),
                                  tuple(_vec(s_cfg, "values", "soft")))
        else:
            penalty = SoftPenalty(kind)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    solve_cfg = cfg.get("solve", {})
    criteria = tuple(solve_cfg.get("criteria", ("maxutil", "demparity", "eqopt")))
    tol = solve_cfg.get("outcome_tolerance")
    sweep = dict(cfg.get("sweep", {}))
    if "values" not in sweep and {"start", "stop", "num"} <= sweep.keys():
        sweep["values"] = list(np.linspace(sweep["start"], sweep["stop"], int(sweep["num"])))
    return ProblemConfig(
        problem=Problem(groups, utility, outcome, penalty),
        labels=labels,
        criteria=criteria,
        outcome_tolerance=None if tol is None else float(tol),
        lam=None if "lambda" not in s_cfg else _num(s_cfg, "lambda", "soft"),
        sweep=sweep,
        verify=dict(cfg.get("verify", {})),
        name=str(cfg.get("name", path.stem)),
    )
