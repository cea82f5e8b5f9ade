"""Command-line entry point: ``geodec simulate|sweep|analyze|gdi|netem-export``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ScenarioConfig, build_validators
from .errors import ConfigError, GeoDecError
from .experiments import analyze_rows, format_analysis, read_sweep_csv, run_sweep
from .geodata import (DATA_DIR_ENV, canonical_city, default_data_dir, export_netem_script,
                      load_cities, load_default_dataset)
from .metrics import ValidatorProfile, gdi_report
from .report import summary_table, write_report
from .simnet import run_epochs

log = logging.getLogger("geodec")

# flag name -> (ScenarioConfig field, type)
_OVERRIDES = {
    "delta_ms": float, "epoch_count": int, "pi": float, "timeout_ms": float,
    "processing_delay_ms": float, "jitter_ms": float, "seed": int, "jail_duration": int,
    "vote_race": str, "cities_path": str, "pings_path": str,
}


def parse_distribution(text: str) -> dict[str, int]:
    """``"san jose=8,helsinki=7"`` -> ``{"san jose": 8, "helsinki": 7}``."""
    dist = {}
    for part in text.split(","):
        if not part.strip():
            continue
        city, sep, count = part.rpartition("=")
        if not sep:
            raise ConfigError(f"distribution entry {part!r} is not city=count")
        try:
            dist[canonical_city(city)] = int(count)
        except ValueError:
            raise ConfigError(f"distribution entry {part!r}: count is not an integer") from None
    if not dist:
        raise ConfigError("empty distribution")
    return dist


def _add_scenario_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("scenario overrides")
    g.add_argument("--distribution", help='validator counts, e.g. "san jose=8,helsinki=7,singapore=1"')
    for name, kind in _OVERRIDES.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)
    g.add_argument("--solution-enabled", dest="solution_enabled", default=None,
                   action=argparse.BooleanOptionalAction, help="exempt vouched minorities from jailing")


def _overrides(args) -> dict:
    d = {k: getattr(args, k) for k in list(_OVERRIDES) + ["solution_enabled"]
         if getattr(args, k) is not None}
    if args.distribution:
        d["distribution"] = parse_distribution(args.distribution)
    return d


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def _base_config(args) -> dict:
    data = _read_json(args.config) if args.config else {}
    data.update(_overrides(args))
    return data


def _dataset(config: ScenarioConfig):
    return load_default_dataset(config.cities_path, config.pings_path)


def cmd_simulate(args) -> int:
    config = ScenarioConfig.from_dict(_base_config(args))
    registry, matrix = _dataset(config)
    result = run_epochs(config, registry, matrix)
    report = write_report(result, args.out_dir)
    print(summary_table(report))
    print(f"reports written to {args.out_dir}")
    if not result.safety_ok:
        log.error("safety violation: replicas committed conflicting blocks")
        return 1
    return 0


def cmd_sweep(args) -> int:
    spec = _read_json(args.spec)
    rows = run_sweep(spec, _base_config(args), args.out_dir, args.workers)
    runs = len({r["run"] for r in rows})
    print(f"{runs} runs, {len(rows)} validator rows written to {Path(args.out_dir, 'sweep.csv')}")
    return 0


def cmd_analyze(args) -> int:
    result = analyze_rows(read_sweep_csv(args.dataset))
    print(format_analysis(result))
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def _read_validator_file(path, registry) -> list[ValidatorProfile]:
    profiles = []
    seen = set()
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["validator_id", "city"]:
            raise ConfigError(f"{path}: header must be validator_id,city")
        for line, rec in enumerate(reader, start=2):
            city = canonical_city(rec["city"] or "")
            if city not in registry:
                raise ConfigError(f"{path}:{line}: unknown city {rec['city']!r}")
            try:
                vid = int(rec["validator_id"])
            except (TypeError, ValueError):
                raise ConfigError(f"{path}:{line}: bad validator id {rec['validator_id']!r}") from None
            if vid in seen:
                raise ConfigError(f"{path}:{line}: duplicate validator id {vid}")
            seen.add(vid)
            profiles.append(ValidatorProfile(vid, city, registry[city].coords))
    if not profiles:
        raise ConfigError(f"{path}: no validators")
    return profiles


def cmd_gdi(args) -> int:
    registry = load_cities(args.cities or default_data_dir() / "cities.csv")
    V = _read_validator_file(args.validators, registry)
    rep = gdi_report(V)
    doc = {
        "blockchain_gdi": rep.blockchain_gdi,
        "minority_cities": sorted(rep.minority_cities),
        "majority_city": rep.majority_city,
        "validators": [{"validator_id": v.validator_id, "city": v.city,
                        "gdi_full": rep.gdi_full[v.validator_id],
                        "gdi_quorum": rep.gdi_quorum[v.validator_id],
                        "minority": v.city in rep.minority_cities} for v in V],
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        mu = ", ".join(doc["minority_cities"]) or "-"
        print(f"blockchain GDI {rep.blockchain_gdi:.1f} km; minority: {mu}; "
              f"majority: {rep.majority_city or '-'}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_netem_export(args) -> int:
    config = ScenarioConfig.from_dict(_base_config(args))
    registry, matrix = _dataset(config)
    validators = build_validators(config.distribution, registry, matrix)
    ips = {}
    try:
        fh = open(args.ip_map, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {args.ip_map}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["validator_id", "ip"]:
            raise ConfigError(f"{args.ip_map}: header must be validator_id,ip")
        for line, rec in enumerate(reader, start=2):
            try:
                ips[int(rec["validator_id"])] = rec["ip"]
            except (TypeError, ValueError):
                raise ConfigError(f"{args.ip_map}:{line}: bad validator id") from None
    missing = [v.validator_id for v in validators if v.validator_id not in ips]
    if missing:
        raise ConfigError(f"no ip address for validator(s) {missing}")
    script = export_netem_script(matrix, {v.validator_id: (v.city, ips[v.validator_id])
                                          for v in validators})
    if args.out:
        Path(args.out).write_text(script, encoding="utf-8")
    else:
        sys.stdout.write(script)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geodec",
        description="Geo-distributed HotStuff simulator and validator diversity metrics.",
        epilog=f"Dataset directory defaults to ${DATA_DIR_ENV}, else the bundled sample.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and write its report")
    p.add_argument("config", nargs="?", help="scenario JSON")
    p.add_argument("--out-dir", default="out")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a grid of scenarios")
    p.add_argument("spec", help="sweep spec JSON")
    p.add_argument("--config", help="base scenario JSON")
    p.add_argument("--out-dir", default="sweep-out")
    p.add_argument("--workers", type=int, default=1)
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="correlations and liveliness quartiles of a sweep")
    p.add_argument("dataset", help="sweep.csv from the sweep command")
    p.add_argument("--out", help="write the analysis as JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gdi", help="GDI report for a validator_id,city file")
    p.add_argument("validators")
    p.add_argument("--cities", help="cities CSV (default: dataset directory)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gdi)

    p = sub.add_parser("netem-export", help="per-pair one-way delays for netem")
    p.add_argument("config", help="scenario JSON")
    p.add_argument("ip_map", help="CSV with header validator_id,ip")
    p.add_argument("--out")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_netem_export)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be at least 1")
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s: %(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING, force=True)
    try:
        return args.func(args)
    except (GeoDecError, OSError) as exc:
        print(f"geodec: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
