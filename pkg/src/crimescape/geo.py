"""Web Mercator tile math, polygon geometry, and tract boundary parsing.

Tiles follow the slippy-map convention: at zoom z the world is a 2^z by 2^z
grid, x grows eastward, y grows southward. All geometry is lon/lat degrees.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

from .errors import DataError

# atan(sinh(pi)) in degrees; latitudes at or beyond this have no tile.
MERCATOR_LAT_LIMIT = 85.05112877980659
KM_PER_DEGREE = 111.32
MAX_ZOOM = 22

Ring = list[tuple[float, float]]


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinates ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if not -MERCATOR_LAT_LIMIT < self.lat < MERCATOR_LAT_LIMIT:
            raise ValueError(
                f"latitude {self.lat} outside Web Mercator range "
                f"(+-{MERCATOR_LAT_LIMIT})"
            )


@dataclass(frozen=True)
class TileCoord:
    zoom: int
    x: int
    y: int

    def __post_init__(self):
        if self.zoom < 0:
            raise ValueError(f"zoom {self.zoom} < 0")
        n = 1 << self.zoom
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise ValueError(f"tile ({self.x}, {self.y}) out of range at zoom {self.zoom}")


@dataclass(frozen=True)
class BBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        if self.min_lon > self.max_lon or self.min_lat > self.max_lat:
            raise ValueError("bbox min exceeds max")

    def contains(self, lon: float, lat: float) -> bool:
        return (self.min_lon <= lon <= self.max_lon
                and self.min_lat <= lat <= self.max_lat)

    def contains_strict(self, lon: float, lat: float) -> bool:
        return (self.min_lon < lon < self.max_lon
                and self.min_lat < lat < self.max_lat)


@dataclass
class TractBoundary:
    """One census tract: one or more polygon parts, each [outer, *holes]."""

    tract_id: str
    parts: list[list[Ring]] = field(default_factory=list)

    def __post_init__(self):
        for rings in self.parts:
            for ring in rings:
                if len(ring) < 4:
                    raise ValueError(
                        f"tract {self.tract_id}: ring with {len(ring)} points (need >= 4)"
                    )
                if ring[0] != ring[-1]:
                    raise ValueError(f"tract {self.tract_id}: ring not closed")
        for rings in self.parts:
            if _ring_self_intersects(rings[0]):
                warnings.warn(
                    f"tract {self.tract_id}: outer ring self-intersects", stacklevel=2
                )

    @property
    def rings(self) -> list[Ring]:
        """Rings of the first part (outer first, then holes)."""
        return self.parts[0] if self.parts else []

    def all_rings(self) -> list[Ring]:
        return [ring for rings in self.parts for ring in rings]

    def bbox(self) -> BBox:
        lons = [p[0] for rings in self.parts for p in rings[0]]
        lats = [p[1] for rings in self.parts for p in rings[0]]
        return BBox(min(lons), min(lats), max(lons), max(lats))


def lonlat_to_tile_fractional(p: GeoPoint, zoom: int) -> tuple[float, float]:
    """Unclamped fractional tile coordinates of a point."""
    if not 0 <= zoom <= MAX_ZOOM:
        raise ValueError(f"zoom {zoom} outside [0, {MAX_ZOOM}]")
    n = 1 << zoom
    xf = (p.lon + 180.0) / 360.0 * n
    phi = math.radians(p.lat)
    yf = (1.0 - math.log(math.tan(phi) + 1.0 / math.cos(phi)) / math.pi) / 2.0 * n
    return xf, yf


def lonlat_to_tile(p: GeoPoint, zoom: int) -> TileCoord:
    """Tile containing a point, clamped into range at the antimeridian/poles."""
    xf, yf = lonlat_to_tile_fractional(p, zoom)
    n = 1 << zoom
    x = min(max(int(math.floor(xf)), 0), n - 1)
    y = min(max(int(math.floor(yf)), 0), n - 1)
    return TileCoord(zoom, x, y)


def tile_bounds(t: TileCoord) -> BBox:
    """Lon/lat bounds of a tile (inverse of the tile formula at the corners)."""
    n = 1 << t.zoom
    min_lon = t.x / n * 360.0 - 180.0
    max_lon = (t.x + 1) / n * 360.0 - 180.0
    # y grows southward, so y gives the north edge and y+1 the south edge
    max_lat = _tile_y_to_lat(t.y, n)
    min_lat = _tile_y_to_lat(t.y + 1, n)
    return BBox(min_lon, min_lat, max_lon, max_lat)


def _tile_y_to_lat(y: float, n: int) -> float:
    return math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * y / n))))


def point_in_polygon(p: GeoPoint, b: TractBoundary) -> bool:
    """Even-odd containment over all rings; points on any edge count inside."""
    if point_on_boundary(p, b):
        return True
    return _even_odd_inside(p.lon, p.lat, b)


def point_strictly_inside(p: GeoPoint, b: TractBoundary) -> bool:
    if point_on_boundary(p, b):
        return False
    return _even_odd_inside(p.lon, p.lat, b)


def point_on_boundary(p: GeoPoint, b: TractBoundary) -> bool:
    for ring in b.all_rings():
        for i in range(len(ring) - 1):
            if _on_segment(p.lon, p.lat, ring[i], ring[i + 1]):
                return True
    return False


def _on_segment(px: float, py: float, a: tuple[float, float], b: tuple[float, float]) -> bool:
    ax, ay = a
    bx, by = b
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if cross != 0.0:
        return False
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def _even_odd_inside(px: float, py: float, b: TractBoundary) -> bool:
    # A point inside a hole crosses both the outer and the hole ring (even),
    # so counting crossings over every ring handles holes directly.
    inside = False
    for ring in b.all_rings():
        for i in range(len(ring) - 1):
            x1, y1 = ring[i]
            x2, y2 = ring[i + 1]
            if (y1 > py) != (y2 > py):
                xint = (x2 - x1) * (py - y1) / (y2 - y1) + x1
                if px < xint:
                    inside = not inside
    return inside


def polygon_area_km2(b: TractBoundary) -> float:
    """Area via shoelace on an equirectangular projection at the mean latitude.

    Longitudes scale by cos(mean latitude), both axes convert at 111.32
    km/degree; hole areas are subtracted per part. Always >= 0.
    """
    lats = [pt[1] for ring in b.all_rings() for pt in ring[:-1]]
    if not lats:
        return 0.0
    mean_lat = sum(lats) / len(lats)
    kx = KM_PER_DEGREE * math.cos(math.radians(mean_lat))
    ky = KM_PER_DEGREE
    total = 0.0
    for rings in b.parts:
        outer = abs(_shoelace(rings[0])) * kx * ky
        holes = sum(abs(_shoelace(r)) for r in rings[1:]) * kx * ky
        total += max(0.0, outer - holes)
    return total


def _shoelace(ring: Ring) -> float:
    s = 0.0
    for i in range(len(ring) - 1):
        x1, y1 = ring[i]
        x2, y2 = ring[i + 1]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def tiles_covering_boundary(
    b: TractBoundary, zoom: int, mode: str = "intersect"
) -> list[TileCoord]:
    """Tiles at `zoom` covering the tract, sorted by (x, y).

    mode "intersect" (default) keeps every tile whose open bounds rectangle
    overlaps the polygon interior, so a tile sharing only an edge with the
    tract is excluded and a border tile may belong to several tracts.
    mode "center" keeps tiles whose center lies in the polygon.
    """
    if mode not in ("intersect", "center"):
        raise ValueError(f"unknown tile inclusion mode {mode!r}")
    if polygon_area_km2(b) == 0.0:
        warnings.warn(f"tract {b.tract_id}: degenerate polygon, no tiles", stacklevel=2)
        return []
    bbox = b.bbox()
    n = 1 << zoom
    sw = lonlat_to_tile(GeoPoint(bbox.min_lon, bbox.min_lat), zoom)
    ne = lonlat_to_tile(GeoPoint(bbox.max_lon, bbox.max_lat), zoom)
    out: list[TileCoord] = []
    for x in range(sw.x, ne.x + 1):
        for y in range(ne.y, sw.y + 1):  # ne has the smaller y
            t = TileCoord(zoom, x, y)
            tb = tile_bounds(t)
            if mode == "center":
                center = GeoPoint(
                    (tb.min_lon + tb.max_lon) / 2.0, (tb.min_lat + tb.max_lat) / 2.0
                )
                if point_in_polygon(center, b):
                    out.append(t)
            elif _rect_interior_intersects(tb, b):
                out.append(t)
    out.sort(key=lambda t: (t.x, t.y))
    return out


def _rect_interior_intersects(rect: BBox, b: TractBoundary) -> bool:
    """True iff the open rectangle overlaps the polygon interior."""
    probes = [
        (rect.min_lon, rect.min_lat),
        (rect.min_lon, rect.max_lat),
        (rect.max_lon, rect.min_lat),
        (rect.max_lon, rect.max_lat),
        ((rect.min_lon + rect.max_lon) / 2.0, (rect.min_lat + rect.max_lat) / 2.0),
    ]
    for lon, lat in probes:
        if not point_on_boundary(GeoPoint(lon, lat), b) and _even_odd_inside(lon, lat, b):
            return True
    for ring in b.all_rings():
        for pt in ring[:-1]:
            if rect.contains_strict(pt[0], pt[1]):
                return True
    corners = [
        (rect.min_lon, rect.min_lat),
        (rect.max_lon, rect.min_lat),
        (rect.max_lon, rect.max_lat),
        (rect.min_lon, rect.max_lat),
    ]
    edges = [(corners[i], corners[(i + 1) % 4]) for i in range(4)]
    for ring in b.all_rings():
        for i in range(len(ring) - 1):
            for e1, e2 in edges:
                if _segments_cross(ring[i], ring[i + 1], e1, e2):
                    return True
    return False


def _segments_cross(p1, p2, q1, q2) -> bool:
    """Proper crossing only: intersection interior to both segments."""
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    return ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    )


def _cross(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _ring_self_intersects(ring: Ring, max_vertices: int = 400) -> bool:
    # Best-effort O(n^2) scan; skipped for very large rings.
    m = len(ring) - 1
    if m > max_vertices:
        return False
    for i in range(m):
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            if _segments_cross(ring[i], ring[i + 1], ring[j], ring[j + 1]):
                return True
    return False


def parse_tract_boundaries(geojson_text: str, id_property_key: str = "GEOID") -> list[TractBoundary]:
    """Parse a GeoJSON FeatureCollection of Polygon/MultiPolygon tracts.

    Unclosed rings are auto-closed with a warning; non-polygon geometries are
    skipped with a warning; features missing the id property raise a DataError
    naming their indices.
    """
    try:
        doc = json.loads(geojson_text)
    except json.JSONDecodeError as e:
        raise DataError(f"boundaries are not valid JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise DataError("boundaries must be a GeoJSON FeatureCollection")

    missing_id: list[int] = []
    out: list[TractBoundary] = []
    for idx, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        geom = feature.get("geometry") or {}
        if id_property_key not in props:
            missing_id.append(idx)
            continue
        tract_id = str(props[id_property_key])
        gtype = geom.get("type")
        coords = geom.get("coordinates", [])
        if gtype == "Polygon":
            part_coords = [coords]
        elif gtype == "MultiPolygon":
            part_coords = coords
        else:
            warnings.warn(
                f"feature {idx} ({tract_id}): skipping {gtype} geometry", stacklevel=2
            )
            continue
        parts = [
            [_close_ring(ring, tract_id) for ring in rings] for rings in part_coords
        ]
        out.append(TractBoundary(tract_id=tract_id, parts=parts))
    if missing_id:
        raise DataError(
            f"features missing id property {id_property_key!r} at indices {missing_id}"
        )
    return out


def _close_ring(coords: list, tract_id: str) -> Ring:
    ring = [(float(pt[0]), float(pt[1])) for pt in coords]
    if ring and ring[0] != ring[-1]:
        warnings.warn(f"tract {tract_id}: auto-closing unclosed ring", stacklevel=3)
        ring.append(ring[0])
    return ring
