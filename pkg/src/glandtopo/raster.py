"""Raster containers and binary morphology primitives.

All rasters are 2-D numpy arrays, row-major. Binary masks are bool arrays,
label maps are int32 with 0 = background and 1..n = object ids. Out-of-bounds
pixels are treated as background by every operation here.
"""

from enum import Enum

import numpy as np
from scipy import ndimage as ndi


class StructuringElement(Enum):
    SQUARE3 = "square3"  # 8-connectivity footprint
    CROSS3 = "cross3"    # 4-connectivity footprint

    @property
    def footprint(self):
        if self is StructuringElement.SQUARE3:
            return np.ones((3, 3), dtype=bool)
        fp = np.zeros((3, 3), dtype=bool)
        fp[1, :] = True
        fp[:, 1] = True
        return fp

    @property
    def connectivity(self):
        return 8 if self is StructuringElement.SQUARE3 else 4


def as_mask(a):
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"expected 2-D raster, got shape {a.shape}")
    return a.astype(bool, copy=False)


def as_labels(a):
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"expected 2-D raster, got shape {a.shape}")
    if np.issubdtype(a.dtype, np.floating):
        raise ValueError("label map must be integer-valued")
    return a.astype(np.int32, copy=False)


def check_finite(a, name="raster"):
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN/Inf")
    return a


def _shifted(mask, dr, dc, fill):
    """Shift a mask by (dr, dc), filling exposed pixels with `fill`."""
    out = np.full_like(mask, fill)
    h, w = mask.shape
    rs, re = max(dr, 0), min(h + dr, h)
    cs, ce = max(dc, 0), min(w + dc, w)
    if rs < re and cs < ce:
        out[rs:re, cs:ce] = mask[rs - dr:re - dr, cs - dc:ce - dc]
    return out


def erode(mask, se=StructuringElement.SQUARE3):
    """Binary erosion; a pixel survives iff every footprint neighbor is on.

    Out-of-bounds counts as off, so foreground touching the border erodes
    from the border inward.
    """
    mask = as_mask(mask)
    out = mask.copy()
    fp = se.footprint
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if fp[dr + 1, dc + 1] and (dr or dc):
                out &= _shifted(mask, dr, dc, False)
    return out


def dilate(mask, se=StructuringElement.SQUARE3):
    """Binary dilation, dual of :func:`erode`."""
    mask = as_mask(mask)
    out = mask.copy()
    fp = se.footprint
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if fp[dr + 1, dc + 1] and (dr or dc):
                out |= _shifted(mask, dr, dc, False)
    return out


def _structure(connectivity):
    if connectivity == 4:
        return ndi.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndi.generate_binary_structure(2, 2)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def canonicalize(labels):
    """Relabel so ids follow first appearance in row-major scan order.

    Returns an int32 map whose nonzero labels are exactly {1..n}.
    """
    labels = as_labels(labels)
    flat = labels.ravel()
    nz = flat[flat > 0]
    if nz.size == 0:
        return np.zeros_like(labels)
    # order of first appearance in scan order
    _, first_idx = np.unique(nz, return_index=True)
    order = nz[np.sort(first_idx)]
    remap = np.zeros(int(flat.max()) + 1, dtype=np.int32)
    remap[order] = np.arange(1, len(order) + 1, dtype=np.int32)
    return remap[labels]


def connected_components(mask, connectivity=8):
    """Label connected components of a binary mask, canonically ordered."""
    mask = as_mask(mask)
    raw, _ = ndi.label(mask, structure=_structure(connectivity))
    return canonicalize(raw)


def n_labels(labels):
    labels = as_labels(labels)
    return int(labels.max())


def fill_holes(mask):
    """Turn on background components not 4-connected to the raster border."""
    mask = as_mask(mask)
    bg = ndi.label(~mask, structure=_structure(4))[0]
    border = np.zeros_like(mask)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    outside = np.unique(bg[border & ~mask])
    hole = ~mask & ~np.isin(bg, outside)
    return mask | hole


def remove_small(labels, min_area):
    """Delete objects with area < min_area; relabel canonically."""
    if min_area < 0:
        raise ValueError("min_area must be >= 0")
    labels = as_labels(labels)
    if labels.max() == 0:
        return labels.copy()
    areas = np.bincount(labels.ravel())
    kill = np.flatnonzero(areas < min_area)
    out = labels.copy()
    out[np.isin(out, kill)] = 0
    return canonicalize(out)


def remove_small_mask(mask, min_area, connectivity=4):
    """Mask-level convenience: drop small connected components."""
    labels = connected_components(mask, connectivity)
    return remove_small(labels, min_area) > 0
