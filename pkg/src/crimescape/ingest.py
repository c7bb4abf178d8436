"""Crime and ACS ingestion: parse, categorize, assign to tracts, rate per 1,000.

City feeds differ in schema, so column mappings and the offense-category map
are configuration, not code.
"""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import DataError
from .geo import GeoPoint, TractBoundary, point_in_polygon, polygon_area_km2

CATEGORY_PERSONAL = "personal"
CATEGORY_PROPERTY = "property"
CATEGORY_OTHER = "other"
CATEGORIES = (CATEGORY_PERSONAL, CATEGORY_PROPERTY, CATEGORY_OTHER)

# First match wins; descriptions are matched case-insensitively as substrings.
DEFAULT_CATEGORY_MAP: list[tuple[str, str]] = [
    ("assault", CATEGORY_PERSONAL),
    ("battery", CATEGORY_PERSONAL),
    ("homicide", CATEGORY_PERSONAL),
    ("robbery", CATEGORY_PROPERTY),
    ("property destruction", CATEGORY_PROPERTY),
    ("criminal damage", CATEGORY_PROPERTY),
    ("theft", CATEGORY_PROPERTY),
    ("burglary", CATEGORY_PROPERTY),
]

DEFAULT_DATE_WINDOW = (datetime(2016, 1, 1), datetime(2017, 1, 1))

SOCIO_VARIABLES = (
    "pct_below_poverty",
    "pct_black",
    "pct_white",
    "pct_employed",
    "pct_age_10_20",
    "pct_bachelors_or_higher",
    "population_density",
)
PERCENT_VARIABLES = SOCIO_VARIABLES[:-1]

TRACT_STATS_HEADER = [
    "tract_id", "population",
    "count_total", "count_personal", "count_property", "count_other",
    "rate_total", "rate_personal", "rate_property",
    "excluded", "exclusion_reason",
]


@dataclass
class CrimeSchema:
    """Column mapping for one city's crime CSV."""

    id_column: str
    datetime_column: str
    datetime_format: str
    lat_column: str
    lon_column: str
    description_column: str


@dataclass
class CrimeRecord:
    event_id: str
    timestamp: datetime
    location: GeoPoint
    raw_description: str
    category: str


@dataclass
class CrimeParseResult:
    records: list[CrimeRecord]
    dropped: Counter
    total_rows: int

    @property
    def n_dropped(self) -> int:
        return sum(self.dropped.values())


@dataclass
class TractStats:
    tract_id: str
    population: float
    counts: dict[str, int]
    rates: dict[str, float] | None
    area_km2: float
    excluded: bool
    exclusion_reason: str = ""

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class SocioProfile:
    tract_id: str
    variables: dict[str, float]
    population: float


@dataclass
class AcsVariableMap:
    """Names of the ACS CSV columns backing each socio variable."""

    tract_id_column: str = "tract_id"
    population_column: str = "population"
    columns: dict[str, str] = field(default_factory=dict)


@dataclass
class AcsParseResult:
    profiles: list[SocioProfile]
    rejected: list[tuple[str, str]]
    unknown_tracts: list[str]


def categorize_crime(raw_description: str, category_map: list[tuple[str, str]]) -> str:
    """First case-insensitive substring match wins; no match is 'other'."""
    desc = raw_description.lower()
    for pattern, category in category_map:
        if pattern.lower() in desc:
            return category
    return CATEGORY_OTHER


def parse_crime_csv(
    csv_text: str,
    schema: CrimeSchema,
    category_map: list[tuple[str, str]] | None = None,
    date_window: tuple[datetime, datetime] | None = DEFAULT_DATE_WINDOW,
) -> CrimeParseResult:
    """Parse one city's crime CSV into validated records.

    Rows with unparseable coordinates or dates, or outside the date window
    (start inclusive, end exclusive), are dropped and counted per reason.
    More than 50% dropped rows aborts: the schema is likely wrong.
    """
    if category_map is None:
        category_map = DEFAULT_CATEGORY_MAP
    reader = csv.DictReader(io.StringIO(csv_text))
    header = reader.fieldnames or []
    for col in (schema.id_column, schema.datetime_column, schema.lat_column,
                schema.lon_column, schema.description_column):
        if col not in header:
            raise DataError(f"crime CSV missing configured column {col!r}")

    records: list[CrimeRecord] = []
    dropped: Counter = Counter()
    total = 0
    for row in reader:
        total += 1
        try:
            ts = datetime.strptime(row[schema.datetime_column], schema.datetime_format)
        except (ValueError, TypeError):
            dropped["bad_datetime"] += 1
            continue
        if date_window is not None and not (date_window[0] <= ts < date_window[1]):
            dropped["outside_window"] += 1
            continue
        try:
            lat = float(row[schema.lat_column])
            lon = float(row[schema.lon_column])
            loc = GeoPoint(lon=lon, lat=lat)
        except (ValueError, TypeError):
            dropped["bad_coordinates"] += 1
            continue
        desc = row[schema.description_column] or ""
        records.append(CrimeRecord(
            event_id=row[schema.id_column],
            timestamp=ts,
            location=loc,
            raw_description=desc,
            category=categorize_crime(desc, category_map),
        ))
    n_dropped = sum(dropped.values())
    if total > 0 and n_dropped > total / 2:
        raise DataError(
            f"{n_dropped}/{total} rows dropped ({dict(dropped)}); schema likely wrong"
        )
    return CrimeParseResult(records=records, dropped=dropped, total_rows=total)


def assign_crimes_to_tracts(
    records: list[CrimeRecord], boundaries: list[TractBoundary]
) -> tuple[dict[str, Counter], int]:
    """Count records per (tract, category); ties on shared edges go to the
    first containing tract in sorted tract_id order.

    Returns (counts by tract, number of records outside every tract).
    """
    ordered = sorted(boundaries, key=lambda b: b.tract_id)
    counts: dict[str, Counter] = {b.tract_id: Counter() for b in ordered}
    if not records:
        return counts, 0

    lons = np.array([r.location.lon for r in records])
    lats = np.array([r.location.lat for r in records])
    assigned = np.zeros(len(records), dtype=bool)
    for b in ordered:
        bb = b.bbox()
        candidate = np.flatnonzero(
            ~assigned
            & (lons >= bb.min_lon) & (lons <= bb.max_lon)
            & (lats >= bb.min_lat) & (lats <= bb.max_lat)
        )
        for i in candidate:
            if point_in_polygon(records[i].location, b):
                counts[b.tract_id][records[i].category] += 1
                assigned[i] = True
    unassigned = int((~assigned).sum())
    return counts, unassigned


def compute_rates(counts: dict[str, int], population: float) -> dict[str, float] | None:
    """Crimes per 1,000 persons per category plus total; None when population
    is zero (the tract is excluded, not errored)."""
    if population < 0:
        raise ValueError("population must be >= 0")
    if population == 0:
        return None
    rates = {c: 1000.0 * counts.get(c, 0) / population for c in CATEGORIES}
    rates["total"] = 1000.0 * sum(counts.get(c, 0) for c in CATEGORIES) / population
    return rates


def make_tract_stats(
    tract_id: str,
    counts: dict[str, int],
    population: float,
    area_km2: float,
) -> TractStats:
    total = sum(counts.get(c, 0) for c in CATEGORIES)
    if population == 0:
        return TractStats(tract_id, population, dict(counts), None, area_km2,
                          excluded=True, exclusion_reason="zero population")
    rates = compute_rates(counts, population)
    if total == 0:
        return TractStats(tract_id, population, dict(counts), rates, area_km2,
                          excluded=True, exclusion_reason="no reported crimes")
    return TractStats(tract_id, population, dict(counts), rates, area_km2, excluded=False)


def build_tract_stats(
    boundaries: list[TractBoundary],
    counts: dict[str, Counter],
    populations: dict[str, float],
) -> list[TractStats]:
    """One TractStats per boundary; tracts absent from the ACS population map
    count as zero population."""
    out = []
    for b in sorted(boundaries, key=lambda x: x.tract_id):
        out.append(make_tract_stats(
            b.tract_id,
            dict(counts.get(b.tract_id, {})),
            populations.get(b.tract_id, 0.0),
            polygon_area_km2(b),
        ))
    return out


def parse_acs_csv(
    csv_text: str,
    variable_map: AcsVariableMap,
    boundaries: list[TractBoundary],
) -> AcsParseResult:
    """Parse ACS socioeconomic rows keyed by tract id.

    Percentages are range-checked to [0, 100]; population density is computed
    from the tract polygon area. Rows for tracts without a boundary are
    reported, not errored.
    """
    missing = [v for v in PERCENT_VARIABLES if v not in variable_map.columns]
    if missing:
        raise DataError(f"ACS variable map missing columns for {missing}")
    reader = csv.DictReader(io.StringIO(csv_text))
    header = reader.fieldnames or []
    if variable_map.tract_id_column not in header:
        raise DataError(f"ACS CSV missing tract id column {variable_map.tract_id_column!r}")
    needed = [variable_map.population_column] + [variable_map.columns[v] for v in PERCENT_VARIABLES]
    for col in needed:
        if col not in header:
            raise DataError(f"ACS CSV missing configured column {col!r}")

    areas = {b.tract_id: polygon_area_km2(b) for b in boundaries}
    profiles: list[SocioProfile] = []
    rejected: list[tuple[str, str]] = []
    unknown: list[str] = []
    for row in reader:
        tract_id = str(row[variable_map.tract_id_column])
        if tract_id not in areas:
            unknown.append(tract_id)
            continue
        try:
            population = float(row[variable_map.population_column])
            values = {v: float(row[variable_map.columns[v]]) for v in PERCENT_VARIABLES}
        except (ValueError, TypeError):
            rejected.append((tract_id, "unparseable numeric value"))
            continue
        if population < 0 or not math.isfinite(population):
            rejected.append((tract_id, "invalid population"))
            continue
        bad = [v for v, x in values.items() if not (0.0 <= x <= 100.0)]
        if bad:
            rejected.append((tract_id, f"percentage outside [0, 100]: {bad}"))
            continue
        area = areas[tract_id]
        values["population_density"] = population / area if area > 0 else 0.0
        profiles.append(SocioProfile(tract_id=tract_id, variables=values, population=population))
    return AcsParseResult(profiles=profiles, rejected=rejected, unknown_tracts=unknown)


def write_tract_stats_csv(stats: list[TractStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACT_STATS_HEADER)
    for s in sorted(stats, key=lambda s: s.tract_id):
        rates = s.rates or {}
        w.writerow([
            s.tract_id,
            repr(float(s.population)),
            s.total,
            s.counts.get(CATEGORY_PERSONAL, 0),
            s.counts.get(CATEGORY_PROPERTY, 0),
            s.counts.get(CATEGORY_OTHER, 0),
            repr(rates["total"]) if rates else "",
            repr(rates[CATEGORY_PERSONAL]) if rates else "",
            repr(rates[CATEGORY_PROPERTY]) if rates else "",
            int(s.excluded),
            s.exclusion_reason,
        ])
    return buf.getvalue()


def read_tract_stats_csv(csv_text: str) -> list[TractStats]:
    reader = csv.DictReader(io.StringIO(csv_text))
    if reader.fieldnames != TRACT_STATS_HEADER:
        raise DataError("unexpected tract stats CSV header")
    out = []
    for row in reader:
        counts = {
            CATEGORY_PERSONAL: int(row["count_personal"]),
            CATEGORY_PROPERTY: int(row["count_property"]),
            CATEGORY_OTHER: int(row["count_other"]),
        }
        rates = None
        if row["rate_total"] != "":
            rates = {
                "total": float(row["rate_total"]),
                CATEGORY_PERSONAL: float(row["rate_personal"]),
                CATEGORY_PROPERTY: float(row["rate_property"]),
                CATEGORY_OTHER: (
                    1000.0 * counts[CATEGORY_OTHER] / float(row["population"])
                ),
            }
        out.append(TractStats(
            tract_id=row["tract_id"],
            population=float(row["population"]),
            counts=counts,
            rates=rates,
            area_km2=0.0,
            excluded=bool(int(row["excluded"])),
            exclusion_reason=row["exclusion_reason"],
        ))
    return out
