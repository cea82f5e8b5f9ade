"""Run reports: one row per validator of the initial set, CSV and JSON.

Both file formats carry the same values. Floats are written with
``repr`` so a parse of either file gives back the exact doubles, and
output bytes depend only on the run.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional

from .metrics import gdi_decrease_after_jailing, gdi_report, mean_liveliness
from .simnet import RunResult


@dataclass(frozen=True)
class ValidatorRow:
    validator_id: int
    city: str
    gdi_full: float
    gdi_quorum: float
    mean_liveliness: float
    active_epochs: int
    jailed_epochs: int
    times_jailed: int
    minority: bool
    majority: bool
    exempted: bool


@dataclass(frozen=True)
class RunReport:
    rows: tuple[ValidatorRow, ...]
    blockchain_gdi: float
    minority_cities: tuple[str, ...]
    majority_city: Optional[str]
    seed: int
    config: dict
    trace_hash: str
    safety_ok: bool
    blocks_committed: tuple[int, ...]
    jailed_minorities: tuple[int, ...]
    gdi_decrease: float
    warnings: tuple[str, ...] = ()

    def run_fields(self) -> dict[str, Any]:
        d = asdict(self)
        del d["rows"]
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


ROW_FIELDS = [f.name for f in fields(ValidatorRow)]
_ROW_TYPES = {f.name: f.type for f in fields(ValidatorRow)}


def build_report(result: RunResult) -> RunReport:
    V = result.validators
    gdi = gdi_report(V)
    per_epoch: dict[int, list[float]] = {v.validator_id: [] for v in V}
    times_jailed = dict.fromkeys(per_epoch, 0)
    exempted = dict.fromkeys(per_epoch, False)
    jailed_minorities = set()
    warnings = []
    for log in result.epochs:
        rep = log.report
        warnings.extend(rep.warnings)
        for r in rep.rows:
            per_epoch[r.validator_id].append(r.liveliness)
            if r.jailed:
                times_jailed[r.validator_id] += 1
                if r.minority:
                    jailed_minorities.add(r.validator_id)
            if r.exempted:
                exempted[r.validator_id] = True

    n_epochs = len(result.epochs)
    rows = []
    for v in V:
        values = per_epoch[v.validator_id]
        rows.append(ValidatorRow(
            validator_id=v.validator_id,
            city=v.city,
            gdi_full=gdi.gdi_full[v.validator_id],
            gdi_quorum=gdi.gdi_quorum[v.validator_id],
            # jailed epochs have no liveliness; a validator is always active in epoch 0
            mean_liveliness=mean_liveliness(values),
            active_epochs=len(values),
            jailed_epochs=n_epochs - len(values),
            times_jailed=times_jailed[v.validator_id],
            minority=v.city in gdi.minority_cities,
            majority=v.city == gdi.majority_city,
            exempted=exempted[v.validator_id],
        ))
    return RunReport(
        rows=tuple(rows),
        blockchain_gdi=gdi.blockchain_gdi,
        minority_cities=tuple(sorted(gdi.minority_cities)),
        majority_city=gdi.majority_city,
        seed=result.config.seed,
        config=result.config.to_dict(),
        trace_hash=result.trace_hash,
        safety_ok=result.safety_ok,
        blocks_committed=tuple(log.blocks_committed for log in result.epochs),
        jailed_minorities=tuple(sorted(jailed_minorities)),
        gdi_decrease=gdi_decrease_after_jailing(V, jailed_minorities),
        warnings=tuple(warnings),
    )


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(text: str, kind):
    if kind in (bool, "bool"):
        if text not in ("true", "false"):
            raise ValueError(f"not a boolean: {text!r}")
        return text == "true"
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()


def report_csv(report: RunReport) -> str:
    return rows_to_csv((asdict(r) for r in report.rows), ROW_FIELDS)


def report_json(report: RunReport) -> str:
    doc = {"run": report.run_fields(), "validators": [asdict(r) for r in report.rows]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def epochs_csv(result: RunResult) -> str:
    columns = ["epoch", "validator_id", "city", "blocks_signed", "blocks_committed", "liveliness",
               "gdi_full", "gdi_quorum", "minority", "majority", "nominated", "vouches",
               "exempted", "jailed"]
    rows = []
    for log in result.epochs:
        for r in log.report.rows:
            d = asdict(r)
            d["epoch"] = log.epoch
            rows.append(d)
    return rows_to_csv(rows, columns)


def write_report(result: RunResult, out_dir) -> RunReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = build_report(result)
    (out / "report.csv").write_text(report_csv(report), encoding="utf-8")
    (out / "report.json").write_text(report_json(report), encoding="utf-8")
    (out / "epochs.csv").write_text(epochs_csv(result), encoding="utf-8")
    return report


def read_report_csv(path) -> list[ValidatorRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ROW_FIELDS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [ValidatorRow(**{k: parse_value(v, _ROW_TYPES[k]) for k, v in rec.items()})
                for rec in reader]


def read_report_json(path) -> tuple[dict, list[ValidatorRow]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return doc["run"], [ValidatorRow(**r) for r in doc["validators"]]


def summary_table(report: RunReport) -> str:
    lines = [f"{'id':>4}  {'city':<14}{'GDI_Q km':>12}{'live %':>9}  flags"]
    for r in report.rows:
        flags = " ".join(name for name, on in (("minority", r.minority), ("majority", r.majority),
                                               ("exempt", r.exempted)) if on)
        if r.times_jailed:
            flags = f"{flags} jailed x{r.times_jailed}".strip()
        lines.append(f"{r.validator_id:>4}  {r.city:<14}{r.gdi_quorum:>12.1f}"
                     f"{r.mean_liveliness:>9.2f}  {flags}")
    mu = ", ".join(report.minority_cities) or "-"
    lines.append(f"blockchain GDI {report.blockchain_gdi:.1f} km; minority: {mu}; "
                 f"majority: {report.majority_city or '-'}; committed per epoch: "
                 f"{list(report.blocks_committed)}")
    return "\n".join(lines)
