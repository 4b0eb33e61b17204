"""Inference-time postprocessing: binarize, marker-controlled watershed, cleanup."""

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage as ndi

from .raster import (StructuringElement, as_mask, canonicalize, fill_holes,
                     remove_small, remove_small_mask)
from .topo import marker_gt


@dataclass
class PostprocessConfig:
    tau_b: float = 0.5
    tau_m: float = 0.7
    min_gland_area: int = 100
    min_marker_area: int = 16
    se: StructuringElement = field(default=StructuringElement.SQUARE3)

    def __post_init__(self):
        if not 0.0 < self.tau_b < 1.0:
            raise ValueError("tau_b must lie in (0, 1)")
        if not 0.0 < self.tau_m < 1.0:
            raise ValueError("tau_m must lie in (0, 1)")
        if self.min_gland_area < 0 or self.min_marker_area < 0:
            raise ValueError("areas must be >= 0")


def binarize(prob, tau):
    """Threshold a probability map: pixel on iff prob >= tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    prob = np.asarray(prob, dtype=np.float64)
    if not np.all(np.isfinite(prob)):
        raise ValueError("probability map contains NaN/Inf")
    return prob >= tau


@njit(cache=True)
def _priority_flood(region, elevation, markers, out):
    """Grow marker labels over the region in nondecreasing elevation order.

    Ties break FIFO by insertion sequence number, so plateaus are split by
    arrival order. `out` holds the markers on entry and the result on exit.
    """
    h, w = region.shape
    cap = int(region.sum()) + 1
    heap_e = np.empty(cap, dtype=np.float64)
    heap_s = np.empty(cap, dtype=np.int64)
    heap_p = np.empty(cap, dtype=np.int64)
    heap_l = np.empty(cap, dtype=np.int32)
    size = 0
    seq = 0
    claimed = np.zeros((h, w), dtype=np.uint8)

    # marker pixels seed the flood in scan order
    for r in range(h):
        for c in range(w):
            if markers[r, c] > 0:
                claimed[r, c] = 1
    for r in range(h):
        for c in range(w):
            if markers[r, c] > 0:
                lab = markers[r, c]
                for k in range(4):
                    if k == 0:
                        rr, cc = r - 1, c
                    elif k == 1:
                        rr, cc = r + 1, c
                    elif k == 2:
                        rr, cc = r, c - 1
                    else:
                        rr, cc = r, c + 1
                    if 0 <= rr < h and 0 <= cc < w and region[rr, cc] and not claimed[rr, cc]:
                        claimed[rr, cc] = 1
                        out[rr, cc] = lab
                        # sift up
                        i = size
                        heap_e[i] = elevation[rr, cc]
                        heap_s[i] = seq
                        heap_p[i] = rr * w + cc
                        heap_l[i] = lab
                        seq += 1
                        size += 1
                        while i > 0:
                            par = (i - 1) >> 1
                            if (heap_e[i] < heap_e[par]) or (
                                    heap_e[i] == heap_e[par] and heap_s[i] < heap_s[par]):
                                heap_e[i], heap_e[par] = heap_e[par], heap_e[i]
                                heap_s[i], heap_s[par] = heap_s[par], heap_s[i]
                                heap_p[i], heap_p[par] = heap_p[par], heap_p[i]
                                heap_l[i], heap_l[par] = heap_l[par], heap_l[i]
                                i = par
                            else:
                                break
    while size > 0:
        # pop min
        p = heap_p[0]
        lab = heap_l[0]
        size -= 1
        heap_e[0] = heap_e[size]
        heap_s[0] = heap_s[size]
        heap_p[0] = heap_p[size]
        heap_l[0] = heap_l[size]
        i = 0
        while True:
            lch = 2 * i + 1
            rch = lch + 1
            best = i
            if lch < size and ((heap_e[lch] < heap_e[best]) or (
                    heap_e[lch] == heap_e[best] and heap_s[lch] < heap_s[best])):
                best = lch
            if rch < size and ((heap_e[rch] < heap_e[best]) or (
                    heap_e[rch] == heap_e[best] and heap_s[rch] < heap_s[best])):
                best = rch
            if best == i:
                break
            heap_e[i], heap_e[best] = heap_e[best], heap_e[i]
            heap_s[i], heap_s[best] = heap_s[best], heap_s[i]
            heap_p[i], heap_p[best] = heap_p[best], heap_p[i]
            heap_l[i], heap_l[best] = heap_l[best], heap_l[i]
            i = best
        r = p // w
        c = p % w
        for k in range(4):
            if k == 0:
                rr, cc = r - 1, c
            elif k == 1:
                rr, cc = r + 1, c
            elif k == 2:
                rr, cc = r, c - 1
            else:
                rr, cc = r, c + 1
            if 0 <= rr < h and 0 <= cc < w and region[rr, cc] and not claimed[rr, cc]:
                claimed[rr, cc] = 1
                out[rr, cc] = lab
                i = size
                heap_e[i] = elevation[rr, cc]
                heap_s[i] = seq
                heap_p[i] = rr * w + cc
                heap_l[i] = lab
                seq += 1
                size += 1
                while i > 0:
                    par = (i - 1) >> 1
                    if (heap_e[i] < heap_e[par]) or (
                            heap_e[i] == heap_e[par] and heap_s[i] < heap_s[par]):
                        heap_e[i], heap_e[par] = heap_e[par], heap_e[i]
                        heap_s[i], heap_s[par] = heap_s[par], heap_s[i]
                        heap_p[i], heap_p[par] = heap_p[par], heap_p[i]
                        heap_l[i], heap_l[par] = heap_l[par], heap_l[i]
                        i = par
                    else:
                        break


def watershed(region, elevation, markers):
    """Marker-controlled watershed by priority flood (4-connected).

    Each region pixel reachable from a marker is assigned exactly one marker
    label; pixels outside the region, and region pixels unreachable from any
    marker, stay 0. Raises ValueError if a marker pixel lies outside the
    region or a marker label is not a single connected component.
    """
    region = as_mask(region)
    elevation = np.asarray(elevation, dtype=np.float64)
    markers = np.asarray(markers, dtype=np.int32)
    if region.shape != elevation.shape or region.shape != markers.shape:
        raise ValueError("region, elevation and markers must share dimensions")
    if not np.all(np.isfinite(elevation)):
        raise ValueError("elevation contains NaN/Inf")
    if np.any((markers > 0) & ~region):
        raise ValueError("marker pixels must lie inside the region")
    s4 = ndi.generate_binary_structure(2, 1)
    for lab, sl in enumerate(ndi.find_objects(markers), start=1):
        if sl is None:
            continue
        if ndi.label(markers[sl] == lab, structure=s4)[1] != 1:
            raise ValueError(f"marker {lab} is not a single connected component")
    out = markers.copy()
    if out.max() > 0:
        _priority_flood(region, elevation, markers, out)
    return out


def _clip_markers(markers, region):
    """Intersect markers with the region; keep each marker's largest piece.

    Markers entirely outside the region are dropped; a marker split by the
    intersection keeps its largest (first in scan order on ties) component so
    the watershed precondition of one component per marker holds.
    """
    markers = np.asarray(markers, dtype=np.int32)
    clipped = np.where(region, markers, 0).astype(np.int32)
    out = np.zeros_like(clipped)
    s4 = ndi.generate_binary_structure(2, 1)
    for lab, sl in enumerate(ndi.find_objects(clipped), start=1):
        if sl is None:
            continue
        pieces, n = ndi.label(clipped[sl] == lab, structure=s4)
        if n == 1:
            out[sl][pieces == 1] = lab
        elif n > 1:
            areas = np.bincount(pieces.ravel())[1:]
            keep = int(np.argmax(areas)) + 1  # argmax keeps first on ties
            out[sl][pieces == keep] = lab
    return canonicalize(out)


def postprocess_pipeline(inst_prob, ma_pred, cfg=None):
    """Full postprocessing: threshold, clean, derive markers, flood, clean.

    inst_prob is the foreground probability map, ma_pred the predicted
    medial-axis distance map. Returns a canonical label map.
    """
    if cfg is None:
        cfg = PostprocessConfig()
    inst_prob = np.asarray(inst_prob, dtype=np.float64)
    ma_pred = np.asarray(ma_pred, dtype=np.float64)
    if inst_prob.shape != ma_pred.shape:
        raise ValueError(
            f"dimension mismatch: inst_prob {inst_prob.shape} vs ma_pred {ma_pred.shape}")
    region = fill_holes(remove_small_mask(binarize(inst_prob, cfg.tau_b),
                                          cfg.min_gland_area))
    markers = marker_gt(ma_pred, cfg.tau_m, cfg.min_marker_area)
    markers = _clip_markers(markers, region)
    labels = watershed(region, -ma_pred, markers)
    return remove_small(labels, cfg.min_gland_area)
