"""City coordinates, ping ingestion and the inter-city latency matrix.

Everything here is a pure transformation: files go in, immutable
records come out.
"""

from __future__ import annotations

import csv
import ipaddress
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError, CoverageError, DatasetError, ValidationError

log = logging.getLogger(__name__)

DATA_DIR_ENV = "GEODEC_DATA_DIR"

CITIES_HEADER = ["city", "latitude", "longitude"]
PINGS_HEADER = ["source", "destination", "timestamp", "avg"]


def canonical_city(name: str) -> str:
    return " ".join(name.strip().lower().split())


@dataclass(frozen=True)
class CityRecord:
    city_id: str
    latitude: float
    longitude: float

    def __post_init__(self):
        if not self.city_id:
            raise ValidationError("city id must be non-empty")
        if not (-90.0 <= self.latitude <= 90.0) or math.isnan(self.latitude):
            raise ValidationError(f"latitude {self.latitude} of {self.city_id!r} outside [-90, 90]")
        if not (-180.0 < self.longitude <= 180.0):
            raise ValidationError(f"longitude {self.longitude} of {self.city_id!r} outside (-180, 180]")

    @property
    def coords(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)


class CityRegistry(Mapping[str, CityRecord]):
    """Read-only mapping of canonical city id to its record."""

    def __init__(self, records: Iterable[CityRecord] = ()):
        self._records: dict[str, CityRecord] = {}
        for rec in records:
            if rec.city_id in self._records:
                raise DatasetError(f"duplicate city id {rec.city_id!r}")
            self._records[rec.city_id] = rec

    def __getitem__(self, key: str) -> CityRecord:
        return self._records[canonical_city(key)]

    def __contains__(self, key) -> bool:
        return isinstance(key, str) and canonical_city(key) in self._records

    def __iter__(self):
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __repr__(self) -> str:
        return f"CityRegistry({len(self)} cities)"


@dataclass(frozen=True)
class PingSample:
    source: str
    destination: str
    timestamp: datetime
    rtt_avg: float

    def __post_init__(self):
        if self.source == self.destination:
            raise ValidationError(f"ping sample from {self.source!r} to itself")
        if not math.isfinite(self.rtt_avg) or self.rtt_avg <= 0:
            raise ValidationError(f"rtt {self.rtt_avg!r} must be finite and positive")


@dataclass(frozen=True)
class LatencyMatrix:
    """Symmetric, complete round-trip times (ms) over ``cities``."""

    cities: tuple[str, ...]
    rtt: Mapping[tuple[str, str], float]
    pruned: tuple[str, ...] = ()
    dropped_samples: int = 0

    def __contains__(self, city) -> bool:
        return city in self.cities

    def get(self, a: str, b: str) -> float:
        if a == b:
            if a not in self.cities:
                raise KeyError(a)
            return 0.0
        return self.rtt[(a, b)]


def _open_text(path):
    try:
        return open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot open {path}: {exc}") from exc


def _read_rows(path, header):
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if [h.strip().lower() for h in first] != header:
            raise DatasetError(f"{path}: expected header {','.join(header)}, got {','.join(first)}")
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            yield reader.line_num, row


def load_cities(path) -> CityRegistry:
    records = []
    seen = set()
    for lineno, row in _read_rows(path, CITIES_HEADER):
        if len(row) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        name = canonical_city(row[0])
        try:
            lat, lon = float(row[1]), float(row[2])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-numeric coordinate") from None
        try:
            rec = CityRecord(name, lat, lon)
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        if name in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate city id {name!r}")
        seen.add(name)
        records.append(rec)
    return CityRegistry(records)


def _parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def read_ping_samples(path) -> list[PingSample]:
    samples = []
    for lineno, row in _read_rows(path, PINGS_HEADER):
        if len(row) != 4:
            raise DatasetError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        try:
            ts = _parse_timestamp(row[2])
            rtt = float(row[3])
            samples.append(PingSample(canonical_city(row[0]), canonical_city(row[1]), ts, rtt))
        except (ValueError, ValidationError) as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return samples


def ingest_ping_dataset(path, registry: CityRegistry) -> LatencyMatrix:
    """Average all samples per ordered pair and complete the matrix.

    Samples naming a city missing from ``registry`` are dropped and
    counted in ``LatencyMatrix.dropped_samples``.
    """
    sums: dict[tuple[str, str], list[float]] = defaultdict(lambda: [0.0, 0])
    dropped = 0
    for s in read_ping_samples(path):
        if s.source not in registry or s.destination not in registry:
            dropped += 1
            continue
        acc = sums[(s.source, s.destination)]
        acc[0] += s.rtt_avg
        acc[1] += 1
    if dropped:
        log.warning("%s: dropped %d samples naming unknown cities", path, dropped)
    if not sums:
        raise DatasetError(f"{path}: no usable ping samples")
    raw = {pair: total / count for pair, (total, count) in sums.items()}
    m = finalize_matrix(raw)
    return LatencyMatrix(m.cities, m.rtt, m.pruned, dropped)


def _missing_pairs(cities, rtt):
    missing = []
    for i, a in enumerate(cities):
        for b in cities[i + 1:]:
            if (a, b) not in rtt:
                missing.append((a, b))
    return missing


def finalize_matrix(raw: Mapping[tuple[str, str], float]) -> LatencyMatrix:
    """Symmetrize by mean, then greedily prune until complete.

    Pruning removes the city in the most missing pairs; ties go to the
    lexicographically larger id.
    """
    sym: dict[tuple[str, str], float] = {}
    cities = set()
    for (a, b), v in raw.items():
        if a == b:
            continue
        cities.update((a, b))
        if (a, b) in sym:
            continue
        back = raw.get((b, a))
        value = v if back is None else (v + back) / 2.0
        sym[(a, b)] = sym[(b, a)] = value

    alive = sorted(cities)
    pruned = []
    while True:
        missing = _missing_pairs(alive, sym)
        if not missing:
            break
        counts: dict[str, int] = defaultdict(int)
        for a, b in missing:
            counts[a] += 1
            counts[b] += 1
        victim = max(counts, key=lambda c: (counts[c], c))
        alive.remove(victim)
        pruned.append(victim)
    if pruned:
        log.warning("pruned cities lacking pairwise delays: %s", ", ".join(pruned))
    if len(alive) < 2:
        raise CoverageError(f"only {len(alive)} city survives matrix completion")
    keep = set(alive)
    rtt = {k: v for k, v in sym.items() if k[0] in keep and k[1] in keep}
    return LatencyMatrix(tuple(alive), rtt, tuple(pruned))


def one_way_delay(m: LatencyMatrix, a: str, b: str) -> float:
    if a not in m.cities or b not in m.cities:
        unknown = a if a not in m.cities else b
        raise KeyError(f"city {unknown!r} not in latency matrix")
    if a == b:
        return 0.0
    return m.rtt[(a, b)] / 2.0


def export_netem_script(m: LatencyMatrix, assignment: Mapping[object, tuple[str, str]]) -> str:
    """One ``<src_ip> <dst_ip> <delay_ms>`` line per ordered validator pair."""
    by_ip = {}
    for validator, (city, ip) in assignment.items():
        try:
            addr = ipaddress.ip_address(ip.strip())
        except ValueError:
            raise ConfigError(f"validator {validator}: invalid ip address {ip!r}") from None
        if addr in by_ip:
            raise ConfigError(f"duplicate ip address {addr}")
        if city not in m.cities:
            raise ConfigError(f"validator {validator}: city {city!r} not in latency matrix")
        by_ip[addr] = city
    addrs = sorted(by_ip, key=lambda a: (a.version, a))
    lines = []
    for src in addrs:
        for dst in addrs:
            if src != dst:
                lines.append(f"{src} {dst} {one_way_delay(m, by_ip[src], by_ip[dst]):.1f}")
    return "\n".join(lines) + ("\n" if lines else "")


def default_data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("geodec") / "data"))


def load_default_dataset(cities_path=None, pings_path=None) -> tuple[CityRegistry, LatencyMatrix]:
    data = default_data_dir()
    registry = load_cities(cities_path or data / "cities.csv")
    matrix = ingest_ping_dataset(pings_path or data / "pings.csv", registry)
    return registry, matrix
