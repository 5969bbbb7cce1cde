"""Detection of linear kinematic features in shear-deformation fields.

The pipeline works on a regular 2 km image:

1. take ``log10`` of the field (floored);
2. band-pass with a difference of Gaussians;
3. keep pixels above a quantile of the non-negative response (and above a
   small absolute contrast in decades);
4. drop components whose core (half-maximum contrast) is not at least
   ``min_width_px`` wide;
5. thin to a one-pixel skeleton, cut it at junction pixels and keep the
   pieces of at least ``min_length_px`` pixels.

Everything after step 1 depends only on log differences and quantiles, so
rescaling the field by a positive constant leaves the result unchanged.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi
from skimage.morphology import skeletonize

from .grid import Grid

PIXEL = 2e3  # m

_EIGHT = np.ones((3, 3), dtype=bool)
# 4-neighbours first so a walk never skips the inner pixel of a staircase corner
_STEPS = ((0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))
# rounding applied to log-space values so that shifts by log10(c) are exact
_DECIMALS = 9


@dataclass(frozen=True)
class DetectorParams:
    log_floor: float = 1e-12
    dog_sigmas: tuple = (1.0, 5.0)
    threshold_quantile: float = 0.85
    min_length_px: int = 10
    min_width_px: int = 2
    # response floor in decades; keeps pure noise out when the image has few features
    min_contrast: float = 0.05

    def __post_init__(self):
        small, large = self.dog_sigmas
        object.__setattr__(self, "dog_sigmas", (float(small), float(large)))
        if not 0 < small < large:
            raise ValueError("dog_sigmas must satisfy 0 < small < large")
        if not 0 < self.threshold_quantile < 1:
            raise ValueError("threshold_quantile must lie in (0, 1)")
        if self.min_width_px < 2:
            raise ValueError("min_width_px must be >= 2")
        if self.min_length_px < 1:
            raise ValueError("min_length_px must be >= 1")
        if self.min_contrast < 0:
            raise ValueError("min_contrast must be >= 0")
        if not self.log_floor > 0:
            raise ValueError("log_floor must be positive")


@dataclass(frozen=True)
class DeformationImage:
    """Shear deformation (1/s) on a regular pixel grid, row index = y."""

    data: np.ndarray
    pixel: float = PIXEL
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 2:
            raise ValueError("deformation image must be 2-D")
        if np.any(d < 0):
            raise ValueError("deformation values must be non-negative")
        object.__setattr__(self, "data", d)


@dataclass
class LKFSegment:
    pixels: np.ndarray  # (n, 2) ordered (row, col)
    length_km: float
    mean_intensity: float = float("nan")

    @property
    def n_pixels(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True)
class LKFStats:
    count: int
    total_length_km: float


@dataclass
class Detection:
    """Segments plus the intermediate images (useful for diagnostics)."""

    segments: list
    mask: np.ndarray = field(repr=False)
    skeleton: np.ndarray = field(repr=False)
    threshold: float = 0.0


# -- regridding --------------------------------------------------------------

def regrid_2km(values, grid: Grid, pixel: float = PIXEL, method: str = "nearest") -> DeformationImage:
    """Sample an element field of ``grid`` at the centres of square pixels.

    ``nearest`` takes the element containing each pixel centre, so an 8 km
    cell fills a 4 x 4 pixel block. ``bilinear`` interpolates linearly between
    element centroids (nearest value outside their hull).
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_cells,):
        raise ValueError(f"expected {grid.n_cells} element values, got shape {values.shape}")
    n = grid.L / pixel
    if abs(n - round(n)) > 1e-9 * n:
        raise ValueError(f"domain size {grid.L} is not a multiple of the pixel size {pixel}")
    n = int(round(n))
    c = (np.arange(n) + 0.5) * pixel
    X, Y = np.meshgrid(c, c)
    if method == "nearest":
        img = values[grid.locate_cells(X.ravel(), Y.ravel())].reshape(n, n)
    elif method == "bilinear":
        from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

        pts = np.asarray(grid.cell_centers)
        lin = LinearNDInterpolator(pts, values)(X, Y)
        near = NearestNDInterpolator(pts, values)(X, Y)
        img = np.where(np.isnan(lin), near, lin)
    else:
        raise ValueError(f"unknown regrid method {method!r}")
    return DeformationImage(np.maximum(img, 0.0), pixel)


# -- detection ---------------------------------------------------------------

def _log_image(image: DeformationImage, p: DetectorParams) -> np.ndarray:
    lg = np.log10(np.maximum(image.data, p.log_floor))
    return np.round(lg - lg.max(), _DECIMALS)


def band_pass(lg: np.ndarray, p: DetectorParams) -> np.ndarray:
    small, large = p.dog_sigmas
    dog = ndi.gaussian_filter(lg, small, mode="nearest") - ndi.gaussian_filter(lg, large, mode="nearest")
    return np.round(dog, _DECIMALS)


def _width_gate(mask: np.ndarray, lg: np.ndarray, p: DetectorParams) -> np.ndarray:
    labels, n = ndi.label(mask, structure=_EIGHT)
    if n == 0:
        return mask
    contrast = lg - ndi.gaussian_filter(lg, p.dog_sigmas[1], mode="nearest")
    peak = ndi.maximum(contrast, labels, index=np.arange(1, n + 1))
    core = mask & (contrast >= 0.5 * np.concatenate([[0.0], peak])[labels])
    w = p.min_width_px
    wide = ndi.binary_erosion(core, structure=np.ones((w, w), dtype=bool))
    # erosion with an even-sized block is anchored off-centre; dilate back to mark the block
    wide = ndi.binary_dilation(wide, structure=np.ones((w, w), dtype=bool)) & core
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[wide])] = True
    keep[0] = False
    return keep[labels]


def _neighbours(skel: np.ndarray) -> np.ndarray:
    k = np.ones((3, 3), dtype=int)
    k[1, 1] = 0
    return ndi.convolve(skel.astype(int), k, mode="constant") * skel


def _walk(pix: set) -> list:
    """Order the pixels of a junction-free skeleton piece into a polyline."""
    def nbrs(q):
        return [(q[0] + a, q[1] + b) for a, b in _STEPS if (q[0] + a, q[1] + b) in pix]

    start = min(pix)
    ends = sorted(q for q in pix if len(nbrs(q)) == 1)
    if ends:
        start = ends[0]
    path = [start]
    seen = {start}
    cur = start
    while True:
        nxt = next((q for q in nbrs(cur) if q not in seen), None)
        if nxt is None:
            break
        path.append(nxt)
        seen.add(nxt)
        cur = nxt
    return path


def polyline_length_px(pixels) -> float:
    """Length in pixel units; each pixel stands for one step of the polyline.

    An axis-aligned run of ``n`` pixels has length ``n``; a diagonal run has
    ``n * sqrt(2)``.
    """
    pixels = np.asarray(pixels)
    n = len(pixels)
    if n == 0:
        return 0.0
    if n == 1:
        return 1.0
    steps = np.sqrt((np.diff(pixels, axis=0) ** 2).sum(axis=1)).sum()
    return float(steps * n / (n - 1))


def segments_from_skeleton(skel: np.ndarray, min_length_px: int, pixel_km: float,
                           intensity: np.ndarray | None = None) -> list:
    skel = skel.astype(bool)
    junction = (_neighbours(skel) >= 3) & skel
    pieces = skel & ~junction
    labels, n = ndi.label(pieces, structure=_EIGHT)
    segs = []
    jset = set(zip(*(a.tolist() for a in np.nonzero(junction))))
    for lab, sl in enumerate(ndi.find_objects(labels), start=1):
        rr, cc = np.nonzero(labels[sl] == lab)
        pix = set(zip((rr + sl[0].start).tolist(), (cc + sl[1].start).tolist()))
        path = _walk(pix)
        # junction pixels are shared by the pieces meeting there
        for end, at in ((path[0], 0), (path[-1], len(path))):
            touching = sorted((end[0] + a, end[1] + b) for a, b in _STEPS if (end[0] + a, end[1] + b) in jset)
            if touching and len(path) > 0:
                if at == 0:
                    path.insert(0, touching[0])
                else:
                    path.append(touching[0])
        path = np.array(path, dtype=np.int64)
        if len(path) < min_length_px:
            continue
        mean_i = float(intensity[path[:, 0], path[:, 1]].mean()) if intensity is not None else float("nan")
        segs.append(LKFSegment(path, polyline_length_px(path) * pixel_km, mean_i))
    segs.sort(key=lambda s: (tuple(s.pixels[0]), len(s.pixels)))
    return segs


def detect_full(image: DeformationImage, p: DetectorParams = DetectorParams()) -> Detection:
    lg = _log_image(image, p)
    dog = band_pass(lg, p)
    nonneg = dog[dog >= 0]
    empty = np.zeros(dog.shape, dtype=bool)
    if not np.any(dog > 0):
        return Detection([], empty, empty, 0.0)
    thr = max(float(np.quantile(nonneg, p.threshold_quantile)), p.min_contrast)
    mask = dog > thr
    mask = _width_gate(mask, lg, p)
    skel = skeletonize(mask)
    segs = segments_from_skeleton(skel, p.min_length_px, image.pixel / 1e3, image.data)
    return Detection(segs, mask, skel, thr)


def detect(image: DeformationImage, p: DetectorParams = DetectorParams()) -> list:
    """Detected segments, ordered by their first pixel."""
    return detect_full(image, p).segments


def lkf_stats(segments) -> LKFStats:
    return LKFStats(len(segments), float(sum(s.length_km for s in segments)))


# -- output ------------------------------------------------------------------

def write_segments_csv(path, segments) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "n_pixels", "length_km", "mean_intensity", "pixels"])
        for i, s in enumerate(segments):
            pix = ";".join(f"{r} {c}" for r, c in s.pixels)
            w.writerow([i, s.n_pixels, repr(s.length_km), repr(s.mean_intensity), pix])


def read_segments_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pix = np.array([[int(v) for v in t.split()] for t in row["pixels"].split(";") if t], dtype=np.int64)
            out.append(LKFSegment(pix.reshape(-1, 2), float(row["length_km"]), float(row["mean_intensity"])))
    return out


def write_stats_csv(path, stats: LKFStats, extra: dict | None = None) -> None:
    row = {"lkf_count": stats.count, "lkf_total_length_km": repr(stats.total_length_km)}
    row.update(extra or {})
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)


def detect_file(final_sidecar, params: DetectorParams = DetectorParams()) -> tuple[list, LKFStats]:
    """Run the detector on the ``shear`` field of a snapshot written by a run."""
    from .benchmark import read_snapshot
    from .discretization import discretization
    from .grid import build_quad_grid

    fields, meta = read_snapshot(final_sidecar)
    g = meta["grid"]
    grid = build_quad_grid(g["L"], g["h"], g["hy"])
    mesh = discretization(grid, meta["staggering"]).mesh
    segs = detect(regrid_2km(fields["shear"], mesh), params)
    return segs, lkf_stats(segs)


__all__ = [
    "DetectorParams", "DeformationImage", "LKFSegment", "LKFStats", "Detection",
    "regrid_2km", "band_pass", "detect", "detect_full", "lkf_stats", "polyline_length_px",
    "segments_from_skeleton", "write_segments_csv", "read_segments_csv", "write_stats_csv",
    "detect_file", "PIXEL",
]
