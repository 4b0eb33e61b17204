"""Synthetic gland corpus generator.

Stands in for real histopathology datasets in every test: disks, ellipses,
smoothed blobs, rings, and fused pairs (two labels sharing a boundary, the
clustered-gland case the postprocessing has to split).
"""

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import fileio
from .raster import StructuringElement, canonicalize, connected_components, dilate, erode
from .topo import ma_distance_map, marker_gt

FAMILIES = ("disk", "ellipse", "blob", "fused_pair", "ring")


@dataclass
class SynthCorpusSpec:
    n_images: int = 10
    image_size: int = 128
    glands_min: int = 3
    glands_max: int = 6
    families: tuple = FAMILIES
    seed: int = 0
    tau_m: float = 0.7
    min_marker_area: int = 16

    def __post_init__(self):
        if self.n_images <= 0 or self.image_size <= 0:
            raise ValueError("n_images and image_size must be > 0")
        if not 0 < self.glands_min <= self.glands_max:
            raise ValueError("need 0 < glands_min <= glands_max")
        for f in self.families:
            if f not in FAMILIES:
                raise ValueError(f"unknown shape family {f!r}")


def _grid(h, w):
    return np.meshgrid(np.arange(h), np.arange(w), indexing="ij")


def _disk(h, w, cy, cx, r):
    yy, xx = _grid(h, w)
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _ellipse(h, w, cy, cx, ry, rx, theta):
    yy, xx = _grid(h, w)
    y = yy - cy
    x = xx - cx
    ct, st = np.cos(theta), np.sin(theta)
    u = ct * x + st * y
    v = -st * x + ct * y
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def make_shape(family, rng, h, w):
    """One shape instance as a list of masks (two for fused pairs)."""
    margin = 4
    r = int(rng.integers(10, 19))
    cy = int(rng.integers(margin + r, h - margin - r))
    cx = int(rng.integers(margin + r, w - margin - r))
    if family == "disk":
        return [_disk(h, w, cy, cx, r)]
    if family == "ellipse":
        ry = r
        rx = int(rng.integers(max(8, r // 2), r + 1))
        theta = rng.uniform(0, np.pi)
        return [_ellipse(h, w, cy, cx, ry, rx, theta)]
    if family == "ring":
        hole = max(3, r // 3)
        return [_disk(h, w, cy, cx, r) & ~_disk(h, w, cy, cx, hole)]
    if family == "blob":
        mask = _disk(h, w, cy, cx, r)
        for _ in range(int(rng.integers(2, 5))):
            dy = int(rng.integers(-r, r + 1))
            dx = int(rng.integers(-r, r + 1))
            rr = int(rng.integers(6, max(7, r)))
            y2 = min(max(cy + dy, rr + 1), h - rr - 2)
            x2 = min(max(cx + dx, rr + 1), w - rr - 2)
            mask |= _disk(h, w, y2, x2, rr)
        # morphological closing smooths the outline
        se = StructuringElement.SQUARE3
        mask = erode(dilate(mask, se), se)
        # keep the component containing the seed disk only
        comps = connected_components(mask, 8)
        return [comps == comps[cy, cx]]
    if family == "fused_pair":
        r2 = int(rng.integers(10, 19))
        theta = rng.uniform(0, 2 * np.pi)
        d = 0.9 * (r + r2)
        cy2 = int(round(cy + d * np.sin(theta)))
        cx2 = int(round(cx + d * np.cos(theta)))
        cy2 = min(max(cy2, margin + r2), h - margin - r2)
        cx2 = min(max(cx2, margin + r2), w - margin - r2)
        a = _disk(h, w, cy, cx, r)
        b = _disk(h, w, cy2, cx2, r2)
        union = a | b
        yy, xx = _grid(h, w)
        closer_a = ((yy - cy) ** 2 + (xx - cx) ** 2) <= ((yy - cy2) ** 2 + (xx - cx2) ** 2)
        return [union & closer_a, union & ~closer_a]
    raise ValueError(f"unknown shape family {family!r}")


def _touches(mask, occupied):
    return bool(np.any(dilate(dilate(mask)) & occupied))


def random_label_map(spec, rng, force_family=None):
    """One label map honoring the gland-count range; (labels, families_used)."""
    h = w = spec.image_size
    labels = np.zeros((h, w), dtype=np.int32)
    occupied = np.zeros((h, w), dtype=bool)
    target = int(rng.integers(spec.glands_min, spec.glands_max + 1))
    used = []
    next_label = 1
    attempts = 0
    while next_label <= target and attempts < 200:
        attempts += 1
        if force_family is not None and not used:
            family = force_family
        else:
            family = str(rng.choice(list(spec.families)))
        if family == "fused_pair" and next_label + 1 > target:
            continue
        parts = make_shape(family, rng, h, w)
        union = np.zeros((h, w), dtype=bool)
        for p in parts:
            union |= p
        if _touches(union, occupied) or not all(p.any() for p in parts):
            continue
        for p in parts:
            labels[p] = next_label
            next_label += 1
        occupied |= union
        used.append(family)
    return canonicalize(labels), used


def render_image(labels, rng):
    """Plausible grayscale texture for a label map, in [0, 1]."""
    h, w = labels.shape
    img = 0.2 + 0.02 * rng.standard_normal((h, w))
    img[labels > 0] = 0.62
    for lab in range(1, int(labels.max()) + 1):
        img[labels == lab] += rng.uniform(-0.05, 0.05)
    img += 0.02 * rng.standard_normal((h, w))
    return np.clip(img, 0.0, 1.0)


def synth_corpus(spec, root):
    """Write a full corpus: images, labels, distance maps, markers, manifest.

    Byte-identical on re-run with the same spec. Returns the list of stems.
    At least a third of the images contain a fused pair when the family is
    enabled, so clustered-gland cases are always exercised.
    """
    for sub in ("images", "labels", "ma", "markers"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    stems = []
    for i in range(spec.n_images):
        rng = np.random.default_rng([spec.seed, i])
        force = "fused_pair" if ("fused_pair" in spec.families and
                                 i % 3 == 0) else None
        labels, _ = random_label_map(spec, rng, force_family=force)
        image = render_image(labels, rng)
        ma = ma_distance_map(labels)
        markers = marker_gt(ma, spec.tau_m, spec.min_marker_area)
        stem = f"img_{i:04d}"
        fileio.write_image_png(os.path.join(root, "images", stem + ".png"), image)
        fileio.write_labels_png(os.path.join(root, "labels", stem + ".png"), labels)
        fileio.write_f32r(os.path.join(root, "ma", stem + ".f32r"), ma)
        fileio.write_labels_png(os.path.join(root, "markers", stem + ".png"), markers)
        stems.append(stem)
    manifest = {"spec": asdict(spec), "files": stems}
    manifest["spec"]["families"] = list(spec.families)
    with open(os.path.join(root, "corpus.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return stems
