"""Parameter sweeps over scenarios and the analysis of their pooled rows.

A sweep spec is a JSON object. Every list-valued key is a grid axis and
the grid is their product, enumerated in a fixed axis order:

    {"base": {...}, "size": 16,
     "pairs": [["san jose", "bangalore"]],   # [majority city, minority city]
     "minority_count": [0, 1, 2, 3, 4, 5],
     "pi": [5, 10, 20, 30], "solution_enabled": [false, true], "seeds": [1]}

With ``pairs`` the distribution of each point is built from the pair and
``minority_count``; without it the base distribution is used unchanged.
"""

from __future__ import annotations

import csv
import itertools
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .config import ScenarioConfig
from .errors import ConfigError, DomainError
from .geodata import canonical_city, load_default_dataset
from .metrics import pearson
from .report import ROW_FIELDS, RunReport, build_report, report_csv, report_json, rows_to_csv
from .simnet import run_epochs

log = logging.getLogger(__name__)

AXES = ("pairs", "minority_count", "pi", "solution_enabled", "seeds")
SPEC_KEYS = set(AXES) | {"base", "size"}

SWEEP_COLUMNS = (["run", "majority_city", "minority_city", "minority_count", "pi",
                  "solution_enabled", "seed", "role"] + ROW_FIELDS
                 + ["blockchain_gdi", "jailed_minority_count", "gdi_decrease"])


@dataclass(frozen=True)
class GridPoint:
    index: int
    config: ScenarioConfig
    majority_city: str = ""
    minority_city: str = ""
    minority_count: Optional[int] = None


def _axis(spec, key, default):
    values = spec.get(key, default)
    if not isinstance(values, list):
        raise ConfigError(f"sweep axis {key!r} must be a list")
    if not values:
        raise ConfigError(f"sweep axis {key!r} is empty")
    return values


def expand_grid(spec: Mapping[str, Any], base: Optional[Mapping[str, Any]] = None) -> list[GridPoint]:
    unknown = set(spec) - SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown sweep keys: {', '.join(sorted(unknown))}")
    merged = dict(base or {})
    merged.update(spec.get("base", {}))
    pairs = spec.get("pairs")
    if pairs is None:
        if "minority_count" in spec:
            raise ConfigError("minority_count needs city pairs")
        if "distribution" not in merged:
            raise ConfigError("sweep without pairs needs a base distribution")
        pairs_axis = [None]
        counts_axis = [None]
    else:
        pairs_axis = _axis(spec, "pairs", None)
        for p in pairs_axis:
            if not (isinstance(p, list) and len(p) == 2 and canonical_city(p[0]) != canonical_city(p[1])):
                raise ConfigError(f"pair {p!r} must be two distinct city names")
        size = spec.get("size", 16)
        if not isinstance(size, int) or size < 4:
            raise ConfigError("sweep size must be an integer >= 4")
        top = (size + 1) // 2 - 1
        counts_axis = _axis(spec, "minority_count", list(range(1, top + 1)))
        for m in counts_axis:
            if not isinstance(m, int) or not 0 <= m <= top:
                raise ConfigError(f"minority_count {m!r} outside 0..{top} for size {size}")
    pis = _axis(spec, "pi", [merged.get("pi", 5.0)])
    solutions = _axis(spec, "solution_enabled", [merged.get("solution_enabled", False)])
    seeds = _axis(spec, "seeds", [merged.get("seed", 0)])

    points = []
    for pair, m, pi, sol, seed in itertools.product(pairs_axis, counts_axis, pis, solutions, seeds):
        d = dict(merged, pi=pi, solution_enabled=sol, seed=seed)
        maj = mino = ""
        if pair is not None:
            maj, mino = canonical_city(pair[0]), canonical_city(pair[1])
            dist = {maj: spec.get("size", 16) - m}
            if m:
                dist[mino] = m
            d["distribution"] = dist
        points.append(GridPoint(len(points), ScenarioConfig.from_dict(d), maj, mino, m))
    return points


_DATASETS: dict = {}


def _dataset(config: ScenarioConfig):
    key = (config.cities_path, config.pings_path)
    if key not in _DATASETS:
        _DATASETS[key] = load_default_dataset(*key)
    return _DATASETS[key]


def run_point(point: GridPoint) -> RunReport:
    registry, matrix = _dataset(point.config)
    return build_report(run_epochs(point.config, registry, matrix))


def run_grid(points: Sequence[GridPoint], workers: int = 1) -> list[RunReport]:
    """Reports in grid order, whatever order the workers finish in."""
    if workers <= 1 or len(points) <= 1:
        return [run_point(p) for p in points]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, points))


def sweep_rows(point: GridPoint, report: RunReport) -> list[dict]:
    flagged = sum(r.minority for r in report.rows)
    rows = []
    for r in report.rows:
        if point.majority_city:
            role = ("majority" if r.city == point.majority_city
                    else "minority" if r.city == point.minority_city else "other")
        else:
            role = "minority" if r.minority else "majority" if r.majority else "other"
        rows.append(dict(
            asdict(r),
            run=point.index,
            majority_city=point.majority_city,
            minority_city=point.minority_city,
            minority_count=point.minority_count if point.minority_count is not None else flagged,
            pi=point.config.pi,
            solution_enabled=point.config.solution_enabled,
            seed=point.config.seed,
            role=role,
            blockchain_gdi=report.blockchain_gdi,
            jailed_minority_count=len(report.jailed_minorities),
            gdi_decrease=report.gdi_decrease,
        ))
    return rows


def run_sweep(spec: Mapping[str, Any], base: Optional[Mapping[str, Any]] = None,
              out_dir=None, workers: int = 1) -> list[dict]:
    points = expand_grid(spec, base)
    reports = run_grid(points, workers)
    rows = []
    for point, report in zip(points, reports):
        rows.extend(sweep_rows(point, report))
        if out_dir is not None:
            run_dir = Path(out_dir) / "runs" / f"{point.index:04d}"
            run_dir.mkdir(parents=True, exist_ok=True)
            (run_dir / "report.csv").write_text(report_csv(report), encoding="utf-8")
            (run_dir / "report.json").write_text(report_json(report), encoding="utf-8")
    if out_dir is not None:
        Path(out_dir, "sweep.csv").write_text(rows_to_csv(rows, SWEEP_COLUMNS), encoding="utf-8")
    return rows


# -- analysis ------------------------------------------------------------

_NUMERIC = {"gdi_full", "gdi_quorum", "mean_liveliness", "blockchain_gdi", "gdi_decrease", "pi"}
_INTEGER = {"run", "minority_count", "seed", "validator_id", "jailed_minority_count"}

CORRELATION_PAIRS = (("gdi_quorum", "mean_liveliness"), ("gdi_full", "mean_liveliness"),
                     ("gdi_quorum", "gdi_full"))


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"gdi_full", "gdi_quorum", "mean_liveliness", "role", "minority_count"} - set(
            reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing columns {', '.join(sorted(missing))}")
        rows = []
        for line, rec in enumerate(reader, start=2):
            try:
                for k in _NUMERIC & rec.keys():
                    rec[k] = float(rec[k])
                for k in _INTEGER & rec.keys():
                    rec[k] = int(rec[k])
            except ValueError as exc:
                raise ConfigError(f"{path}:{line}: {exc}") from None
            rows.append(rec)
    return rows


def _quartiles(values):
    if len(values) == 1:
        return values[0], values[0], values[0]
    q1, med, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return q1, med, q3


def analyze_rows(rows: Sequence[Mapping[str, Any]]) -> dict:
    correlations = []
    for x, y in CORRELATION_PAIRS:
        xs = [r[x] for r in rows]
        ys = [r[y] for r in rows]
        entry = {"x": x, "y": y, "n": len(rows)}
        try:
            entry["r"], entry["p"] = pearson(xs, ys)
        except DomainError as exc:
            entry["flag"] = str(exc)
            log.warning("correlation %s/%s skipped: %s", x, y, exc)
        correlations.append(entry)

    by_count: dict[int, dict[str, list[float]]] = {}
    for r in rows:
        by_count.setdefault(r["minority_count"], {}).setdefault(r["role"], []).append(
            r["mean_liveliness"])
    minority_table = []
    majority_table = []
    for count in sorted(by_count):
        groups = by_count[count]
        if groups.get("minority"):
            values = sorted(groups["minority"])
            q1, med, q3 = _quartiles(values)
            minority_table.append({"minority_count": count, "n": len(values), "q1": q1,
                                   "median": med, "q3": q3, "min": values[0], "max": values[-1]})
        if groups.get("majority"):
            values = groups["majority"]
            majority_table.append({"minority_count": count, "n": len(values),
                                   "mean": statistics.fmean(values),
                                   "median": statistics.median(values)})
    return {"rows": len(rows), "correlations": correlations,
            "minority_liveliness": minority_table, "majority_liveliness": majority_table}


def format_analysis(result: Mapping[str, Any]) -> str:
    lines = [f"rows: {result['rows']}"]
    for c in result["correlations"]:
        if "r" in c:
            lines.append(f"pearson({c['x']}, {c['y']}): r={c['r']:.6f} p={c['p']:.3g}")
        else:
            lines.append(f"pearson({c['x']}, {c['y']}): skipped ({c['flag']})")
    if result["minority_liveliness"]:
        lines.append("minority liveliness by count: count n q1 median q3")
        for t in result["minority_liveliness"]:
            lines.append(f"  {t['minority_count']} {t['n']} {t['q1']:.2f} {t['median']:.2f} {t['q3']:.2f}")
    if result["majority_liveliness"]:
        lines.append("majority liveliness by count: count n mean median")
        for t in result["majority_liveliness"]:
            lines.append(f"  {t['minority_count']} {t['n']} {t['mean']:.2f} {t['median']:.2f}")
    return "\n".join(lines)
