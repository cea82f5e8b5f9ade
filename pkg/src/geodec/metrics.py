"""Liveliness, great-circle distance and geospatial diversity (GDI).

Distances are in kilometres, liveliness in percent. A validator set is
any sequence of :class:`ValidatorProfile`; ids must be unique within it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from scipy.special import betainc

from .errors import DomainError

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class ValidatorProfile:
    validator_id: int
    city: str
    coords: tuple[float, float]

    def __post_init__(self):
        lat, lon = self.coords
        if self.validator_id < 0:
            raise DomainError(f"validator id {self.validator_id} is negative")
        if not (-90.0 <= lat <= 90.0 and -180.0 < lon <= 180.0):
            raise DomainError(f"validator {self.validator_id}: coordinates {self.coords} out of range")


@dataclass(frozen=True)
class LivelinessRecord:
    validator_id: int
    blocks_signed: int
    blocks_committed_total: int

    def __post_init__(self):
        if not 0 <= self.blocks_signed <= self.blocks_committed_total:
            raise DomainError(
                f"validator {self.validator_id}: signed {self.blocks_signed} "
                f"> committed {self.blocks_committed_total}")

    @property
    def liveliness(self) -> float:
        return liveliness(self.blocks_signed, self.blocks_committed_total)


@dataclass(frozen=True)
class GdiReport:
    gdi_full: Mapping[int, float]
    gdi_quorum: Mapping[int, float]
    blockchain_gdi: float
    minority_cities: frozenset
    majority_city: Optional[str]


def haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    h = (math.sin((lat2 - lat1) / 2.0) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2)
    # rounding can push h a hair past 1 for antipodes
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


def quorum_cardinality(n: int) -> int:
    """ceil(2n/3), without the n >= 4 precondition of the protocol."""
    return (2 * n + 2) // 3


def _check_unique(V: Sequence[ValidatorProfile]):
    ids = [v.validator_id for v in V]
    if len(set(ids)) != len(ids):
        raise DomainError("validator ids must be unique")


def _distance_table(V: Sequence[ValidatorProfile]) -> dict[tuple[str, str], float]:
    coords = {}
    for v in V:
        coords.setdefault(v.city, v.coords)
    table = {}
    for a, ca in coords.items():
        for b, cb in coords.items():
            table[(a, b)] = 0.0 if a == b else haversine(ca, cb)
    return table


def _member(v_k: ValidatorProfile, V: Sequence[ValidatorProfile]):
    if not any(v.validator_id == v_k.validator_id for v in V):
        raise DomainError(f"validator {v_k.validator_id} is not in the set")


def gdi_full(v_k: ValidatorProfile, V: Sequence[ValidatorProfile]) -> float:
    _member(v_k, V)
    return math.fsum(haversine(v.coords, v_k.coords) for v in V if v.validator_id != v_k.validator_id)


def _nearest_quorum_sum(k, V, dist):
    ranked = sorted(V, key=lambda v: (dist[(k.city, v.city)], v.validator_id))
    near = ranked[:quorum_cardinality(len(V))]
    # co-located validators must get bit-identical sums, so add in sorted order
    return math.fsum(dist[(k.city, v.city)] for v in near)


def gdi_quorum(v_k: ValidatorProfile, V: Sequence[ValidatorProfile]) -> float:
    """Distance sum to the ceil(2|V|/3) validators nearest ``v_k`` (itself included)."""
    _member(v_k, V)
    return _nearest_quorum_sum(v_k, V, _distance_table(V))


def all_gdi(V: Sequence[ValidatorProfile]) -> tuple[dict[int, float], dict[int, float]]:
    """(gdi_full, gdi_quorum) for every validator, sharing one distance table."""
    _check_unique(V)
    dist = _distance_table(V)
    full, quorum = {}, {}
    cache = {}
    for v in V:
        if v.city not in cache:
            f = math.fsum(dist[(v.city, u.city)] for u in V)
            cache[v.city] = (f, _nearest_quorum_sum(v, V, dist))
        full[v.validator_id], quorum[v.validator_id] = cache[v.city]
    return full, quorum


def blockchain_gdi(V: Sequence[ValidatorProfile]) -> float:
    if not V:
        raise DomainError("blockchain GDI of an empty validator set")
    _, quorum = all_gdi(V)
    return math.fsum(quorum.values()) / len(V)


def percentile_rank(n: int) -> int:
    """1-based nearest rank of the 67th percentile, ceil(0.67 n) in exact arithmetic."""
    return (67 * n + 99) // 100


def select_minorities(gdi: Mapping[int, float], city_of: Mapping[int, str]) -> set[str]:
    """Minority cities from per-validator GDI values.

    Threshold is the nearest-rank 67th percentile; a city qualifies only
    if every one of its validators is strictly above it. Qualifying
    cities are dropped, lowest maximum GDI first (ties by ascending
    name), until their validators number at most floor(|V|/3).
    """
    n = len(gdi)
    if n < 4:
        raise DomainError(f"minority detection needs at least 4 validators, got {n}")
    values = sorted(gdi.values())
    threshold = values[percentile_rank(n) - 1]
    members: dict[str, list[int]] = {}
    for vid, city in city_of.items():
        members.setdefault(city, []).append(vid)
    cities = {c for c, vids in members.items() if all(gdi[v] > threshold for v in vids)}
    cap = n // 3
    while sum(len(members[c]) for c in cities) > cap:
        weakest = min(cities, key=lambda c: (max(gdi[v] for v in members[c]), c))
        cities.remove(weakest)
    return cities


def detect_minorities(V: Sequence[ValidatorProfile]) -> set[str]:
    if len(V) < 4:
        raise DomainError(f"minority detection needs at least 4 validators, got {len(V)}")
    _, quorum = all_gdi(V)
    return select_minorities(quorum, {v.validator_id: v.city for v in V})


def detect_majority(V: Sequence[ValidatorProfile]) -> Optional[str]:
    if not V:
        raise DomainError("majority of an empty validator set")
    need = quorum_cardinality(len(V))
    city, count = Counter(v.city for v in V).most_common(1)[0]
    return city if count >= need else None


def gdi_report(V: Sequence[ValidatorProfile]) -> GdiReport:
    full, quorum = all_gdi(V)
    minorities = (select_minorities(quorum, {v.validator_id: v.city for v in V})
                  if len(V) >= 4 else set())
    return GdiReport(
        gdi_full=full,
        gdi_quorum=quorum,
        blockchain_gdi=math.fsum(quorum.values()) / len(V),
        minority_cities=frozenset(minorities),
        majority_city=detect_majority(V),
    )


def liveliness(signed: int, committed: int) -> float:
    if signed < 0 or committed < 0:
        raise DomainError("block counts must be non-negative")
    if signed > committed:
        raise DomainError(f"signed blocks ({signed}) exceed committed blocks ({committed})")
    if committed == 0:
        return 0.0
    return 100.0 * signed / committed


def mean_liveliness(per_epoch: Iterable[float]) -> float:
    values = list(per_epoch)
    if not values:
        raise DomainError("mean liveliness of no epochs")
    return math.fsum(values) / len(values)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Pearson r with a two-tailed Student-t p-value.

    Uses single-pass co-moment updates rather than the two-pass form.
    """
    n = len(xs)
    if n != len(ys):
        raise DomainError(f"length mismatch: {n} vs {len(ys)}")
    if n < 3:
        raise DomainError(f"correlation needs at least 3 points, got {n}")
    mx = my = 0.0
    sxx = syy = sxy = 0.0
    for i, (x, y) in enumerate(zip(xs, ys), start=1):
        dx = x - mx
        mx += dx / i
        dy = y - my
        my += dy / i
        sxx += dx * (x - mx)
        syy += dy * (y - my)
        sxy += dx * (y - my)
    if sxx <= 0.0 or syy <= 0.0:
        raise DomainError("correlation undefined: zero variance")
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t2 = r * r * df / (1.0 - r * r)
    # P(|T| > t) for T ~ Student-t(df)
    p = float(betainc(df / 2.0, 0.5, df / (df + t2)))
    return r, min(1.0, max(0.0, p))


def gdi_decrease_after_jailing(V: Sequence[ValidatorProfile], jailed: Iterable[int]) -> float:
    """Percent drop in blockchain GDI once ``jailed`` ids leave the set."""
    jailed = set(jailed)
    ids = {v.validator_id for v in V}
    if not jailed <= ids:
        raise DomainError(f"jailed ids {sorted(jailed - ids)} not in the set")
    remaining = [v for v in V if v.validator_id not in jailed]
    if not remaining:
        raise DomainError("cannot jail the entire validator set")
    before = blockchain_gdi(V)
    if before == 0.0:
        return 0.0
    return 100.0 * (before - blockchain_gdi(remaining)) / before
