"""Regenerate the bundled sample cities/pings CSVs.

The RTT values are synthetic: great-circle distance over fibre at
~200 km/ms, inflated by a per-pair route stretch, plus a fixed
last-mile cost and small hourly noise. They are shaped like public
inter-city ping tables but are not measurements.

    python scripts/make_sample_dataset.py src/geodec/data
"""

import csv
import math
import random
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

CITIES = {
    "amsterdam": (52.3676, 4.9041),
    "bangalore": (12.9716, 77.5946),
    "chicago": (41.8781, -87.6298),
    "dallas": (32.7767, -96.7970),
    "dubai": (25.2048, 55.2708),
    "frankfurt": (50.1109, 8.6821),
    "helsinki": (60.1699, 24.9384),
    "hong kong": (22.3193, 114.1694),
    "johannesburg": (-26.2041, 28.0473),
    "london": (51.5074, -0.1278),
    "melbourne": (-37.8136, 144.9631),
    "montreal": (45.5017, -73.5673),
    "mumbai": (19.0760, 72.8777),
    "munich": (48.1351, 11.5820),
    "new york": (40.7128, -74.0060),
    "paris": (48.8566, 2.3522),
    "san jose": (37.3382, -121.8863),
    "sao paulo": (-23.5505, -46.6333),
    "seoul": (37.5665, 126.9780),
    "singapore": (1.3521, 103.8198),
    "stockholm": (59.3293, 18.0686),
    "sydney": (-33.8688, 151.2093),
    "tokyo": (35.6762, 139.6503),
    "toronto": (43.6532, -79.3832),
    "vancouver": (49.2827, -123.1207),
}

# Listed with partial coverage so ingestion has something to prune.
SPARSE = {"lagos": (6.5244, 3.3792)}

FIBRE_KM_PER_MS = 200.0
SAMPLES_PER_PAIR = 3


def _distance_km(a, b):
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * 6371.0 * math.asin(math.sqrt(h))


def main(out_dir):
    out = Path(out_dir)
    rng = random.Random(20230417)
    coords = {**CITIES, **SPARSE}
    with open(out / "cities.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["city", "latitude", "longitude"])
        for name in sorted(coords):
            w.writerow([name, *coords[name]])

    start = datetime(2023, 4, 17, tzinfo=timezone.utc)
    names = sorted(CITIES)
    rows = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            stretch = rng.uniform(1.3, 1.8)
            base = 2 * _distance_km(CITIES[a], CITIES[b]) / FIBRE_KM_PER_MS * stretch + 4.0
            for k in range(SAMPLES_PER_PAIR):
                ts = (start + timedelta(hours=k)).isoformat()
                src, dst = (a, b) if rng.random() < 0.5 else (b, a)
                rows.append([src, dst, ts, round(base * rng.uniform(0.97, 1.03), 3)])
    for other in ("london", "paris", "frankfurt"):
        d = 2 * _distance_km(SPARSE["lagos"], CITIES[other]) / FIBRE_KM_PER_MS * 1.6 + 4.0
        rows.append(["lagos", other, start.isoformat(), round(d, 3)])
    rows.append(["nowhere", "london", start.isoformat(), 12.0])
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(out / "pings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "destination", "timestamp", "avg"])
        w.writerows(rows)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/geodec/data")
