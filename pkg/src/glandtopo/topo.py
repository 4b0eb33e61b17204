"""Ground-truth generation: erosion depth, skeletons, medial-axis distance maps.

Every per-object quantity is computed with the object isolated (all other
labels treated as background), so touching objects get independent depth
fields — this is what makes the distance map separate fused objects.
"""

from enum import Enum

import numpy as np
from numba import njit
from scipy import ndimage as ndi

from .raster import StructuringElement, as_labels, as_mask, canonicalize, erode
from .raster import connected_components, fill_holes, remove_small

# 8-neighbor offsets; bit i of a neighborhood code is offset i being foreground
_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


class DistanceMetric(Enum):
    MA = "ma"
    CHESSBOARD = "chessboard"
    EUCLIDEAN = "euclidean"


def _build_simple_lut():
    """Removability table over the 256 neighborhood configurations.

    A pixel is deletable without changing local topology iff its foreground
    neighbors form one 8-connected set and the background touching its
    4-neighbors forms one 4-connected set (the standard (8,4) simple-point
    test, tabulated by brute force).
    """
    cells = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1),
             (1, -1), (1, 0), (1, 1)]
    lut = np.zeros(256, dtype=np.uint8)
    for code in range(256):
        fg = {off for i, off in enumerate(_OFFSETS) if code >> i & 1}
        bg = [c for c in cells if c != (0, 0) and c not in fg]

        def n_components(nodes, conn):
            comps = 0
            seen = set()
            for start in nodes:
                if start in seen:
                    continue
                comps += 1
                stack = [start]
                seen.add(start)
                while stack:
                    r, c = stack.pop()
                    for dr, dc in conn:
                        nb = (r + dr, c + dc)
                        if nb in nodes and nb not in seen:
                            seen.add(nb)
                            stack.append(nb)
            return comps

    # connectivity kernels
        conn8 = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]
        conn4 = [(-1, 0), (1, 0), (0, -1), (0, 1)]
        if n_components(fg, conn8) != 1:
            continue
        # background components restricted to those touching a 4-neighbor
        bg_set = set(bg)
        four = [c for c in [(-1, 0), (1, 0), (0, -1), (0, 1)] if c in bg_set]
        if not four:
            continue
        # count components of bg (4-connected) that contain a 4-neighbor
        seen = set()
        comps = 0
        for start in four:
            if start in seen:
                continue
            comps += 1
            stack = [start]
            seen.add(start)
            while stack:
                r, c = stack.pop()
                for dr, dc in conn4:
                    nb = (r + dr, c + dc)
                    if nb in bg_set and nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
        if comps == 1:
            lut[code] = 1
    return lut


_SIMPLE_LUT = _build_simple_lut()


@njit(cache=True)
def _thin_sweeps(mask, depth, lut, layer):
    """One stabilization loop: remove simple non-endpoint pixels in scan order.

    layer > 0 restricts removal to pixels of that erosion depth; layer == 0
    considers every remaining pixel. Returns True if anything was removed.
    """
    h, w = mask.shape
    any_removed = False
    changed = True
    while changed:
        changed = False
        for r in range(h):
            for c in range(w):
                if not mask[r, c]:
                    continue
                if layer > 0 and depth[r, c] != layer:
                    continue
                code = 0
                count = 0
                bit = 1
                for k in range(8):
                    if k == 0:
                        dr, dc = -1, -1
                    elif k == 1:
                        dr, dc = -1, 0
                    elif k == 2:
                        dr, dc = -1, 1
                    elif k == 3:
                        dr, dc = 0, -1
                    elif k == 4:
                        dr, dc = 0, 1
                    elif k == 5:
                        dr, dc = 1, -1
                    elif k == 6:
                        dr, dc = 1, 0
                    else:
                        dr, dc = 1, 1
                    rr = r + dr
                    cc = c + dc
                    if 0 <= rr < h and 0 <= cc < w and mask[rr, cc]:
                        code |= bit
                        count += 1
                    bit <<= 1
                if count <= 1:
                    continue  # endpoint or isolated pixel is kept
                if lut[code]:
                    mask[r, c] = False
                    changed = True
                    any_removed = True
    return any_removed


def _neighborhood_code(mask, r, c):
    h, w = mask.shape
    code = 0
    for i, (dr, dc) in enumerate(_OFFSETS):
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and mask[rr, cc]:
            code |= 1 << i
    return code


def _blocks_2x2(mask):
    return np.argwhere(mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:])


def _resolve_blocks(m, d, gland):
    """Dissolve 2x2 blocks no single deletion can break.

    Four branches attached at the diagonal corners of a 2x2 block make every
    block pixel non-simple. Adding a simple gland pixel 4-adjacent to the
    block re-routes one branch; adding a simple point is topology-neutral,
    and the follow-up sweep then deletes a block pixel.
    """
    for _ in range(16):
        blocks = _blocks_2x2(m)
        if len(blocks) == 0:
            return
        progressed = False
        for r, c in blocks:
            if not (m[r, c] and m[r + 1, c] and m[r, c + 1] and m[r + 1, c + 1]):
                continue
            sides = [(r - 1, c), (r - 1, c + 1), (r, c - 1), (r, c + 2),
                     (r + 1, c - 1), (r + 1, c + 2), (r + 2, c), (r + 2, c + 1)]
            for rr, cc in sides:
                if not (0 <= rr < m.shape[0] and 0 <= cc < m.shape[1]):
                    continue
                if m[rr, cc] or not gland[rr, cc]:
                    continue
                if _SIMPLE_LUT[_neighborhood_code(m, rr, cc)]:
                    m[rr, cc] = True
                    _thin_sweeps(m, d, _SIMPLE_LUT, 0)
                    progressed = True
                    break
            if progressed:
                break
        if not progressed:
            return


def _thin_mask(mask, depth):
    """Peel a single object down to its 1-pixel-wide skeleton.

    Pixels are removed in increasing depth order (boundary first), then a
    final unrestricted pass clears any remaining thick spots. Only simple
    points are ever deleted (or added, in the rare block repair), so
    components and holes are preserved.
    """
    m = np.ascontiguousarray(mask, dtype=np.uint8).astype(bool)
    d = np.ascontiguousarray(depth, dtype=np.int32)
    maxd = int(d.max()) if d.size else 0
    for layer in range(1, maxd + 1):
        _thin_sweeps(m, d, _SIMPLE_LUT, layer)
    _thin_sweeps(m, d, _SIMPLE_LUT, 0)
    if len(_blocks_2x2(m)):
        _resolve_blocks(m, d, np.asarray(mask, dtype=bool))
    return m


def _object_slices(labels):
    """(label, padded slice) pairs for each object, in canonical order."""
    labels = as_labels(labels)
    h, w = labels.shape
    out = []
    for lab, sl in enumerate(ndi.find_objects(labels), start=1):
        if sl is None:
            continue
        rs = slice(max(sl[0].start - 1, 0), min(sl[0].stop + 1, h))
        cs = slice(max(sl[1].start - 1, 0), min(sl[1].stop + 1, w))
        out.append((lab, (rs, cs)))
    return out


def erosion_depth(labels, se=StructuringElement.SQUARE3):
    """Iteration index at which repeated one-pixel erosion removes each pixel.

    Background is 0; pixels adjacent to background (under the structuring
    element, out-of-bounds counting as background) are 1. Each object is
    eroded in isolation.
    """
    labels = as_labels(labels)
    depth = np.zeros(labels.shape, dtype=np.int32)
    for lab, sl in _object_slices(labels):
        cur = labels[sl] == lab
        it = 0
        while cur.any():
            it += 1
            nxt = erode(cur, se)
            removed = cur & ~nxt
            depth[sl][removed] = it
            cur = nxt
    return depth


def skeletonize(labels, se=StructuringElement.SQUARE3):
    """Topology-preserving per-object skeletons as one binary raster.

    Each skeleton is one pixel wide (no 2x2 all-on block) and has the same
    component and hole structure as its object.
    """
    labels = as_labels(labels)
    out = np.zeros(labels.shape, dtype=bool)
    for lab, sl in _object_slices(labels):
        mask = labels[sl] == lab
        depth = erosion_depth(mask.astype(np.int32), se)
        out[sl] |= _thin_mask(mask, depth)
    return out


def ma_distance_map(labels, se=StructuringElement.SQUARE3, normalization="max"):
    """Per-object normalized erosion-depth field.

    normalization="max" (default): depth / per-object max depth, so the value
    is 0 exactly on background and 1 exactly on the deepest (skeleton) pixels.
    normalization="max-min" keeps the literal max-minus-min denominator, which
    can exceed 1; degenerate objects (max == min) map to 1 either way.
    """
    if normalization not in ("max", "max-min"):
        raise ValueError(f"unknown normalization {normalization!r}")
    labels = as_labels(labels)
    depth = erosion_depth(labels, se).astype(np.float64)
    out = np.zeros(labels.shape, dtype=np.float64)
    for lab, sl in _object_slices(labels):
        obj = labels[sl] == lab
        d = depth[sl]
        dmax = d[obj].max()
        dmin = d[obj].min()
        denom = dmax if normalization == "max" else dmax - dmin
        if denom <= 0:
            out[sl][obj] = 1.0
        else:
            out[sl][obj] = d[obj] / denom
    return out


def distance_map(labels, metric=DistanceMetric.MA, se=StructuringElement.SQUARE3):
    """Per-object distance-to-background field, max-normalized per object.

    MA uses erosion depth; CHESSBOARD and EUCLIDEAN use the exact L-inf and
    L2 distance transforms (out-of-bounds counts as background).
    """
    metric = DistanceMetric(metric)
    if metric is DistanceMetric.MA:
        return ma_distance_map(labels, se)
    labels = as_labels(labels)
    out = np.zeros(labels.shape, dtype=np.float64)
    for lab, sl in _object_slices(labels):
        obj = labels[sl] == lab
        padded = np.pad(obj, 1)
        if metric is DistanceMetric.EUCLIDEAN:
            dist = ndi.distance_transform_edt(padded)
        else:
            dist = ndi.distance_transform_cdt(padded, metric="chessboard")
        dist = dist[1:-1, 1:-1].astype(np.float64)
        dmax = dist[obj].max()
        out[sl][obj] = dist[obj] / dmax if dmax > 0 else 1.0
    return out


def contour_map(labels, thickness=1, se=StructuringElement.SQUARE3):
    """Binary map of pixels within `thickness` erosion steps of each boundary."""
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    labels = as_labels(labels)
    out = np.zeros(labels.shape, dtype=bool)
    for lab, sl in _object_slices(labels):
        mask = labels[sl] == lab
        inner = mask
        for _ in range(thickness):
            inner = erode(inner, se)
        out[sl] |= mask & ~inner
    return out


def marker_gt(ma, tau_m, min_area=16, connectivity=4):
    """Seed regions from a medial-axis distance map.

    Components of {ma >= tau_m} with holes filled and small objects removed,
    one marker per well-formed object.
    """
    if not 0.0 < tau_m <= 1.0:
        raise ValueError("tau_m must lie in (0, 1]")
    ma = np.asarray(ma, dtype=np.float64)
    mask = fill_holes(ma >= tau_m)
    labels = connected_components(mask, connectivity)
    return remove_small(labels, min_area)
