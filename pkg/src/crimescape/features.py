"""Per-tile feature vectors and tract-level pooling.

Two sources share one CSV format: a built-in 32-dim image-statistics layout
("baseline-v1") computed from cached tile PNGs, and imported external vectors
of any fixed dimension (layout "external-D"), e.g. penultimate-layer CNN
activations.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError
from .geo import TileCoord

BASELINE_LAYOUT_ID = "baseline-v1"
BASELINE_DIM = 32
# Frozen constants of the baseline layout; changing them changes the layout id.
GREEN_MARGIN_8BIT = 10
EDGE_THRESHOLD = 25.0 / 255.0
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
N_LUMA_BINS = 16
N_ORIENT_BINS = 8

FLOAT_FORMAT = "%.9g"

BASELINE_FEATURE_NAMES = (
    ["mean_r", "mean_g", "mean_b", "std_r", "std_g", "std_b", "green_frac", "edge_density"]
    + [f"lum_hist_{i:02d}" for i in range(N_LUMA_BINS)]
    + [f"orient_hist_{i}" for i in range(N_ORIENT_BINS)]
)
assert len(BASELINE_FEATURE_NAMES) == BASELINE_DIM


@dataclass
class TileFeatures:
    tile: TileCoord
    values: np.ndarray
    layout_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"tile {self.tile}: non-finite feature values")


@dataclass
class FeatureMatrix:
    tract_ids: list[str]
    feature_names: list[str]
    rows: np.ndarray
    provenance: str

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.shape != (len(self.tract_ids), len(self.feature_names)):
            raise ValueError("feature matrix shape mismatch")
        if len(set(self.tract_ids)) != len(self.tract_ids):
            raise ValueError("duplicated tract_id in feature matrix")


def feature_names_for_layout(layout_id: str, dim: int) -> list[str]:
    if layout_id == BASELINE_LAYOUT_ID:
        return list(BASELINE_FEATURE_NAMES)
    return [f"f{i}" for i in range(dim)]


def extract_baseline_features(png_bytes: bytes, tile: TileCoord) -> TileFeatures:
    """Compute the fixed 32-dim "baseline-v1" vector from a tile PNG.

    Layout: [0:3] RGB means, [3:6] RGB standard deviations (channels scaled to
    [0,1]), [6] green-cover fraction, [7] edge density, [8:24] 16-bin
    luminance histogram, [24:32] 8-bin magnitude-weighted gradient-orientation
    histogram. Alpha is ignored. Every value lies in [0, 1].
    """
    try:
        img = Image.open(io.BytesIO(png_bytes))
        img.load()
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f"tile {tile.zoom}/{tile.x}/{tile.y}: undecodable image: {e}") from e
    raw = np.asarray(img.convert("RGBA"))[:, :, :3]
    h, w = raw.shape[:2]
    if h < 3 or w < 3:
        raise DataError(
            f"tile {tile.zoom}/{tile.x}/{tile.y}: image {w}x{h} too small (need 3x3)"
        )
    rgb = raw.astype(np.float64) / 255.0

    means = rgb.reshape(-1, 3).mean(axis=0)
    stds = rgb.reshape(-1, 3).std(axis=0)
    # Green test is defined on the 8-bit values, so compare as integers.
    ri, gi, bi = (raw[:, :, c].astype(np.int32) for c in range(3))
    green_frac = float(np.mean((gi > ri + GREEN_MARGIN_8BIT) & (gi > bi + GREEN_MARGIN_8BIT)))
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]

    luma = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    gx = (luma[1:-1, 2:] - luma[1:-1, :-2]) / 2.0
    gy = (luma[2:, 1:-1] - luma[:-2, 1:-1]) / 2.0
    mag = np.hypot(gx, gy)
    edge_density = float(np.mean(mag > EDGE_THRESHOLD))

    lum_hist, _ = np.histogram(luma, bins=N_LUMA_BINS, range=(0.0, 1.0))
    lum_hist = lum_hist / luma.size

    total_mag = float(mag.sum())
    if total_mag > 0.0:
        angles = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
        orient_hist, _ = np.histogram(
            angles, bins=N_ORIENT_BINS, range=(0.0, 2.0 * np.pi), weights=mag
        )
        orient_hist = orient_hist / total_mag
    else:
        orient_hist = np.zeros(N_ORIENT_BINS)

    values = np.concatenate([means, stds, [green_frac, edge_density], lum_hist, orient_hist])
    return TileFeatures(tile=tile, values=values, layout_id=BASELINE_LAYOUT_ID)


def import_external_features(csv_text: str) -> tuple[list[TileFeatures], list[tuple[int, str]]]:
    """Read a "z,x,y,f0..f{D-1}" CSV of externally computed tile vectors.

    Returns (features, rejected) where rejected lists (line number, reason)
    for rows with non-finite values. Ragged rows are a hard error; a repeated
    tile coordinate keeps the last row, with a warning.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("feature CSV is empty") from None
    if header[:3] != ["z", "x", "y"]:
        raise DataError('feature CSV header must start with "z,x,y"')
    dim = len(header) - 3
    if dim < 1:
        raise DataError("feature CSV declares no feature columns")
    expected = [f"f{i}" for i in range(dim)]
    if header[3:] != expected:
        raise DataError(f"feature CSV columns must be f0..f{dim - 1}")
    layout_id = f"external-{dim}"

    by_tile: dict[TileCoord, np.ndarray] = {}
    order: list[TileCoord] = []
    rejected: list[tuple[int, str]] = []
    duplicates = 0
    for line_no, row in enumerate(reader, start=2):
        if len(row) != dim + 3:
            raise DataError(f"line {line_no}: expected {dim + 3} fields, got {len(row)}")
        try:
            tile = TileCoord(int(row[0]), int(row[1]), int(row[2]))
        except ValueError as e:
            raise DataError(f"line {line_no}: bad tile coordinate: {e}") from e
        values = np.array([float(v) for v in row[3:]])
        if not np.all(np.isfinite(values)):
            rejected.append((line_no, "non-finite feature value"))
            continue
        if tile in by_tile:
            duplicates += 1
        else:
            order.append(tile)
        by_tile[tile] = values
    if duplicates:
        warnings.warn(f"{duplicates} duplicate tile rows; kept last occurrence", stacklevel=2)
    features = [TileFeatures(t, by_tile[t], layout_id) for t in order]
    return features, rejected


def export_tile_features_csv(features: list[TileFeatures]) -> str:
    if not features:
        raise DataError("no tile features to export")
    dim = len(features[0].values)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z", "x", "y"] + [f"f{i}" for i in range(dim)])
    for tf in features:
        if len(tf.values) != dim:
            raise DataError("mixed feature dimensions in export")
        w.writerow([tf.tile.zoom, tf.tile.x, tf.tile.y]
                   + [FLOAT_FORMAT % v for v in tf.values])
    return buf.getvalue()


def pool_tract_features(
    tile_features: list[TileFeatures],
    tract_to_tiles: dict[str, list[TileCoord]],
    method: str = "mean",
) -> tuple[FeatureMatrix, list[str]]:
    """Reduce per-tile vectors to one row per tract (mean by default, max as a
    sensitivity option). Tracts with no tiles are omitted and returned."""
    if method not in ("mean", "max"):
        raise ValueError(f"unknown pooling method {method!r}")
    if not tile_features:
        raise DataError("no tile features supplied")
    layouts = {tf.layout_id for tf in tile_features}
    if len(layouts) > 1:
        raise DataError(f"mixed feature layouts: {sorted(layouts)}")
    layout_id = tile_features[0].layout_id
    by_tile = {tf.tile: tf.values for tf in tile_features}

    missing: dict[str, list[TileCoord]] = {}
    for tract_id, tiles in tract_to_tiles.items():
        lost = [t for t in tiles if t not in by_tile]
        if lost:
            missing[tract_id] = lost
    if missing:
        parts = "; ".join(
            f"{tid}: {[f'{t.zoom}/{t.x}/{t.y}' for t in tiles]}"
            for tid, tiles in sorted(missing.items())
        )
        raise DataError(f"tracts reference tiles without feature vectors: {parts}")

    tract_ids = []
    rows = []
    empty = []
    for tract_id in sorted(tract_to_tiles):
        tiles = tract_to_tiles[tract_id]
        if not tiles:
            empty.append(tract_id)
            continue
        stack = np.stack([by_tile[t] for t in tiles])
        rows.append(stack.mean(axis=0) if method == "mean" else stack.max(axis=0))
        tract_ids.append(tract_id)
    dim = len(tile_features[0].values)
    matrix = FeatureMatrix(
        tract_ids=tract_ids,
        feature_names=feature_names_for_layout(layout_id, dim),
        rows=np.array(rows).reshape(len(tract_ids), dim),
        provenance="builtin" if layout_id == BASELINE_LAYOUT_ID else f"imported:{layout_id}",
    )
    return matrix, empty


def export_tract_features_csv(matrix: FeatureMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tract_id"] + [f"f{i}" for i in range(len(matrix.feature_names))])
    for tract_id, row in zip(matrix.tract_ids, matrix.rows):
        w.writerow([tract_id] + [FLOAT_FORMAT % v for v in row])
    return buf.getvalue()


def export_finetune_labels(
    tract_rates: dict[str, float],
    tract_to_tiles: dict[str, list[TileCoord]],
    pct: float = 15.0,
) -> str:
    """Label tiles of extreme-rate tracts for external classifier fine-tuning.

    Tracts at or above the (100-pct)th rate percentile get label 1, at or
    below the pct-th percentile label 0; everything between is omitted. Ties
    exactly at a cutoff stay on their side's label.
    """
    if not 0.0 < pct < 50.0:
        raise ValueError(f"pct {pct} outside (0, 50)")
    rates = np.array([tract_rates[t] for t in sorted(tract_rates)])
    ids = sorted(tract_rates)
    low_cut = float(np.percentile(rates, pct))
    high_cut = float(np.percentile(rates, 100.0 - pct))
    low = [t for t, r in zip(ids, rates) if r <= low_cut]
    high = [t for t, r in zip(ids, rates) if r >= high_cut]
    if len(low) < 2 or len(high) < 2:
        raise DataError(
            f"need >= 2 tracts on each side of the split, got {len(low)} low / {len(high)} high"
        )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z", "x", "y", "label", "tract_id"])
    for label, tracts in ((0, low), (1, high)):
        for tract_id in tracts:
            for t in tract_to_tiles.get(tract_id, []):
                w.writerow([t.zoom, t.x, t.y, label, tract_id])
    return buf.getvalue()
