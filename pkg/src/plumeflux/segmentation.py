"""Scale-aware plume delineation on enhancement fields.

Thresholding uses robust background statistics (median + n_sigma * 1.4826 *
MAD); morphology radii and minimum areas are given in meters and rescaled to
pixels by the GSD, so the same physical parameters apply across sensors with
different pixel sizes. Component polygons are exact rectilinear pixel
boundaries: their shoelace area equals pixel_count * gsd^2 identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.ndimage

from .errors import ConfigError, DomainError, NumericalError
from .scene_io import EnhancementField

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SegmentationParams:
    n_sigma: float = 3.0
    close_radius_m: float = 60.0
    open_radius_m: float = 30.0
    min_area_m2: float = 10_000.0
    connectivity: int = 8

    def __post_init__(self):
        if self.n_sigma <= 0:
            raise ConfigError("n_sigma must be positive")
        if self.close_radius_m < 0 or self.open_radius_m < 0 or self.min_area_m2 < 0:
            raise ConfigError("radii and min_area_m2 must be non-negative")
        if self.connectivity not in (4, 8):
            raise ConfigError("connectivity must be 4 or 8")


@dataclass(frozen=True)
class PlumeMask:
    """One segmented plume: mask, exact area, and its boundary polygon.

    ``polygon`` is the outer pixel-boundary ring (counterclockwise in the
    easting/northing frame); ``holes`` are interior rings (clockwise).
    """

    label_id: int
    mask: np.ndarray
    pixel_count: int
    area_m2: float
    polygon: np.ndarray
    holes: tuple[np.ndarray, ...]
    gsd: float
    origin: tuple[float, float]
    touches_edge: bool

    def shoelace_area_m2(self) -> float:
        """Signed shoelace area over outer ring minus holes (in m^2)."""
        total = _ring_area(self.polygon)
        for ring in self.holes:
            total += _ring_area(ring)
        return total


def _ring_area(ring: np.ndarray) -> float:
    x = ring[:, 0]
    y = ring[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def robust_sigma(values: np.ndarray) -> float:
    """1.4826 * MAD; falls back to the sample standard deviation when MAD is 0."""
    values = np.asarray(values, dtype=np.float64)
    med = float(np.median(values))
    mad = float(np.median(np.abs(values - med)))
    if mad > 0.0:
        return 1.4826 * mad
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def robust_threshold(values: np.ndarray, n_sigma: float) -> float:
    """Detection threshold median + n_sigma * (robust sigma) of the background."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DomainError("cannot derive a threshold from an empty background sample")
    return float(np.median(values)) + n_sigma * robust_sigma(values)


def radius_to_pixels(radius_m: float, gsd: float) -> int:
    """Round a metric radius to whole pixels (half-up), floored at 0."""
    if gsd <= 0:
        raise DomainError("gsd must be positive")
    return max(0, int(math.floor(radius_m / gsd + 0.5)))


def area_to_pixels(area_m2: float, gsd: float) -> int:
    """Smallest pixel count whose footprint reaches the metric area."""
    if gsd <= 0:
        raise DomainError("gsd must be positive")
    return int(math.ceil(area_m2 / (gsd * gsd) - 1e-9))


def disk(radius_px: int) -> np.ndarray:
    """Structuring element: pixels with center distance <= radius."""
    r = int(radius_px)
    if r <= 0:
        return np.ones((1, 1), dtype=bool)
    ax = np.arange(-r, r + 1)
    return (ax[:, None] ** 2 + ax[None, :] ** 2) <= r * r


def morphology(mask: np.ndarray, params: SegmentationParams, gsd: float) -> np.ndarray:
    """Binary closing then opening with disk elements sized in meters.

    Structuring elements are clipped at the image border (dilation sees
    false outside, erosion sees true), so footprint-edge pixels stay
    eligible and both operators are exactly idempotent.
    """
    out = np.asarray(mask, dtype=bool)
    r_close = radius_to_pixels(params.close_radius_m, gsd)
    r_open = radius_to_pixels(params.open_radius_m, gsd)
    if r_close > 0:
        se = disk(r_close)
        dilated = scipy.ndimage.binary_dilation(out, structure=se, border_value=0)
        out = scipy.ndimage.binary_erosion(dilated, structure=se, border_value=1)
    if r_open > 0:
        se = disk(r_open)
        eroded = scipy.ndimage.binary_erosion(out, structure=se, border_value=1)
        out = scipy.ndimage.binary_dilation(eroded, structure=se, border_value=0)
    return out


# ---------------------------------------------------------------------------
# exact rectilinear boundary tracing

# outgoing boundary edges per pixel side, directed so the plume interior sits
# on the left when northing points up; ring orientation then falls out as
# counterclockwise for outer rings and clockwise for holes.


def _boundary_rings(mask: np.ndarray) -> list[np.ndarray]:
    """Closed vertex rings (grid units) of a binary mask's pixel boundary."""
    lines, samples = mask.shape
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    inside = padded[1:-1, 1:-1]
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b):
        edges.setdefault(a, []).append(b)

    ii, jj = np.nonzero(inside)
    up = ~padded[:-2, 1:-1][inside]
    down = ~padded[2:, 1:-1][inside]
    left = ~padded[1:-1, :-2][inside]
    right = ~padded[1:-1, 2:][inside]
    for idx in range(ii.size):
        i, j = int(ii[idx]), int(jj[idx])
        if up[idx]:
            add((j + 1, i), (j, i))
        if down[idx]:
            add((j, i + 1), (j + 1, i + 1))
        if left[idx]:
            add((j, i), (j, i + 1))
        if right[idx]:
            add((j + 1, i + 1), (j + 1, i))
    for key in edges:
        edges[key].sort()

    def pick(vertex, incoming):
        options = edges[vertex]
        if len(options) == 1 or incoming is None:
            return options.pop(0)
        # prefer the sharpest clockwise turn (northing-up frame) so pinched
        # boundaries merge into a single ring instead of crossing
        dx_in, dy_in = incoming
        best_i, best_rank = 0, 5
        for i, (nx, ny) in enumerate(options):
            dx, dy = nx - vertex[0], ny - vertex[1]
            cross = dx_in * (-dy) - (-dy_in) * dx  # cross product, northing-up
            dot = dx_in * dx + dy_in * dy
            if cross < 0:
                rank = 0  # right turn
            elif cross == 0 and dot > 0:
                rank = 1  # straight
            elif cross > 0:
                rank = 2  # left turn
            else:
                rank = 3  # reverse
            if rank < best_rank:
                best_rank, best_i = rank, i
        return options.pop(best_i)

    rings = []
    starts = sorted(edges.keys())
    for start in starts:
        while edges.get(start):
            ring = [start]
            current = start
            incoming = None
            while True:
                nxt = pick(current, incoming)
                incoming = (nxt[0] - current[0], nxt[1] - current[1])
                ring.append(nxt)
                current = nxt
                if current == start:
                    break
            rings.append(np.array(ring, dtype=np.int64))
    return rings


def trace_polygon(
    mask: np.ndarray, gsd: float, origin: tuple[float, float]
) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Outer ring and holes of a mask, as (easting, northing) vertices in meters."""
    rings = _boundary_rings(mask)
    if not rings:
        raise DomainError("cannot trace the boundary of an empty mask")
    metric = []
    signed = []
    for ring in rings:
        pts = np.empty((ring.shape[0], 2))
        pts[:, 0] = origin[0] + ring[:, 0] * gsd
        pts[:, 1] = origin[1] - ring[:, 1] * gsd
        metric.append(pts)
        signed.append(_ring_area(pts))
    total_px = sum(signed) / (gsd * gsd)
    if round(total_px) != int(mask.sum()):
        raise NumericalError("boundary tracing area mismatch (bug signal)")
    outer_idx = int(np.argmax(signed))
    holes = tuple(metric[i] for i in range(len(metric)) if i != outer_idx)
    return metric[outer_idx], holes


def connected_components(
    mask: np.ndarray,
    gsd: float,
    origin: tuple[float, float] = (0.0, 0.0),
    connectivity: int = 8,
    min_pixels: int = 1,
) -> list[PlumeMask]:
    """Label a binary mask and emit plumes sorted by area, largest first."""
    mask = np.asarray(mask, dtype=bool)
    structure = _STRUCTURE_8 if connectivity == 8 else _STRUCTURE_4
    labels, n_found = scipy.ndimage.label(mask, structure=structure)
    if n_found == 0:
        return []
    counts = np.bincount(labels.ravel())[1:]
    first_seen = {}
    flat = labels.ravel()
    for pos in np.flatnonzero(flat):
        lab = flat[pos]
        if lab not in first_seen:
            first_seen[lab] = pos
    order = sorted(
        (lab for lab in range(1, n_found + 1) if counts[lab - 1] >= max(1, min_pixels)),
        key=lambda lab: (-counts[lab - 1], first_seen[lab]),
    )
    plumes = []
    for rank, lab in enumerate(order, start=1):
        comp = labels == lab
        count = int(counts[lab - 1])
        outer, holes = trace_polygon(comp, gsd, origin)
        touches = bool(comp[0, :].any() or comp[-1, :].any() or comp[:, 0].any() or comp[:, -1].any())
        plumes.append(
            PlumeMask(
                label_id=rank,
                mask=comp,
                pixel_count=count,
                area_m2=count * gsd * gsd,
                polygon=outer,
                holes=holes,
                gsd=gsd,
                origin=(float(origin[0]), float(origin[1])),
                touches_edge=touches,
            )
        )
    return plumes


def segment_field(
    field: EnhancementField,
    params: SegmentationParams,
    background_values: Optional[np.ndarray] = None,
) -> tuple[list[PlumeMask], float, np.ndarray]:
    """Threshold, morphology, and labeling in one step.

    ``background_values`` is the spectrally matched background sample when
    available; otherwise all non-nodata pixels serve as background.
    Returns (plumes, threshold, final binary mask).
    """
    valid = ~field.nodata_mask
    bg = background_values if background_values is not None else field.delta_x[valid]
    tau = robust_threshold(bg, params.n_sigma)
    raw = (field.delta_x > tau) & valid
    cleaned = morphology(raw, params, field.gsd)
    cleaned &= valid
    plumes = connected_components(
        cleaned,
        field.gsd,
        field.origin,
        connectivity=params.connectivity,
        min_pixels=area_to_pixels(params.min_area_m2, field.gsd),
    )
    final = np.zeros_like(cleaned)
    for plume in plumes:
        final |= plume.mask
    return plumes, tau, final


def overlap_condition(
    field_a: EnhancementField, field_b: EnhancementField
) -> tuple[EnhancementField, EnhancementField]:
    """Crop both fields to the common footprint; no resampling.

    Pixels whose centers fall outside the axis-aligned intersection are
    dropped (the crop removes whole rows/columns, which is equivalent for
    axis-aligned grids).
    """

    def footprint(f):
        lines, samples = f.shape
        e0, n0 = f.origin
        return e0, e0 + samples * f.gsd, n0 - lines * f.gsd, n0  # e_lo, e_hi, n_lo, n_hi

    ea0, ea1, na0, na1 = footprint(field_a)
    eb0, eb1, nb0, nb1 = footprint(field_b)
    e_lo, e_hi = max(ea0, eb0), min(ea1, eb1)
    n_lo, n_hi = max(na0, nb0), min(na1, nb1)
    if e_lo >= e_hi or n_lo >= n_hi:
        raise DomainError("disjoint footprints")

    def crop(f):
        lines, samples = f.shape
        e0, n0 = f.origin
        col_centers = e0 + (np.arange(samples) + 0.5) * f.gsd
        row_centers = n0 - (np.arange(lines) + 0.5) * f.gsd
        cols = np.flatnonzero((col_centers >= e_lo) & (col_centers <= e_hi))
        rows = np.flatnonzero((row_centers >= n_lo) & (row_centers <= n_hi))
        if cols.size == 0 or rows.size == 0:
            raise DomainError("disjoint footprints")
        j0, j1 = int(cols[0]), int(cols[-1]) + 1
        i0, i1 = int(rows[0]), int(rows[-1]) + 1

        def cut(layer):
            return None if layer is None else layer[i0:i1, j0:j1]

        clutter = f.sigma_clutter
        if clutter is not None and np.ndim(clutter) == 2:
            clutter = clutter[i0:i1, j0:j1]
        return EnhancementField(
            delta_x=f.delta_x[i0:i1, j0:j1],
            gsd=f.gsd,
            origin=(e0 + j0 * f.gsd, n0 - i0 * f.gsd),
            sigma_noise=cut(f.sigma_noise),
            sigma_clutter=clutter,
            sigma_total=cut(f.sigma_total),
            nodata_mask=f.nodata_mask[i0:i1, j0:j1],
            provenance=f.provenance,
        )

    return crop(field_a), crop(field_b)


def plumes_to_geojson(plumes: Sequence[PlumeMask]) -> dict:
    """GeoJSON-style FeatureCollection with coordinates in scene meters."""
    features = []
    for p in plumes:
        rings = [p.polygon.tolist()] + [h.tolist() for h in p.holes]
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "label_id": p.label_id,
                    "area_m2": p.area_m2,
                    "pixel_count": p.pixel_count,
                    "touches_edge": p.touches_edge,
                },
                "geometry": {"type": "Polygon", "coordinates": rings},
            }
        )
    return {"type": "FeatureCollection", "features": features}
