"""Patch extraction, stitching, and training-time augmentation."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi


@dataclass
class PatchGrid:
    patch_size: int
    stride: int

    def __post_init__(self):
        if self.patch_size <= 0:
            raise ValueError("patch_size must be > 0")
        if not 0 < self.stride <= self.patch_size:
            raise ValueError("stride must be in (0, patch_size]")

    def offsets(self, length):
        """1-D start offsets covering [0, length); the last is clamped flush."""
        if length <= self.patch_size:
            return [0]
        starts = list(range(0, length - self.patch_size, self.stride))
        starts.append(length - self.patch_size)
        return starts


def extract_patches(image, grid):
    """[( (row, col), patch ), ...] covering the image.

    Images smaller than the patch in either dimension are reflect-padded up
    to the patch size first; offsets then refer to the padded image.
    """
    image = np.asarray(image)
    h, w = image.shape
    ph = max(grid.patch_size - h, 0)
    pw = max(grid.patch_size - w, 0)
    if ph or pw:
        image = np.pad(image, ((0, ph), (0, pw)), mode="reflect")
        h, w = image.shape
    out = []
    for r in grid.offsets(h):
        for c in grid.offsets(w):
            out.append(((r, c), image[r:r + grid.patch_size, c:c + grid.patch_size]))
    return out


def stitch(patches, out_shape):
    """Per-pixel average of all patches covering each output pixel.

    Raises ValueError if any output pixel is left uncovered.
    """
    acc = np.zeros(out_shape, dtype=np.float64)
    cnt = np.zeros(out_shape, dtype=np.int64)
    for (r, c), patch in patches:
        patch = np.asarray(patch, dtype=np.float64)
        ph, pw = patch.shape
        acc[r:r + ph, c:c + pw] += patch
        cnt[r:r + ph, c:c + pw] += 1
    if np.any(cnt == 0):
        raise ValueError("stitch: some output pixels are not covered by any patch")
    return acc / cnt


# geometric ops are applied to image and labels alike; blurs to the image only
GEOMETRIC_OPS = ("flip_h", "flip_v", "rot90", "rot180", "rot270")
BLUR_OPS = ("gaussian_blur", "median_blur")


def _apply_geometric(a, op):
    if op == "flip_h":
        return a[:, ::-1]
    if op == "flip_v":
        return a[::-1, :]
    if op == "rot90":
        return np.rot90(a, 1)
    if op == "rot180":
        return np.rot90(a, 2)
    if op == "rot270":
        return np.rot90(a, 3)
    raise ValueError(f"unknown geometric op {op!r}")


def augment(image, labels, ops):
    """Apply the listed augmentations in order.

    ops entries: a geometric op name, ("gaussian_blur", sigma) with sigma in
    [0.5, 1.5], or ("median_blur", k) with k in {3, 5}.
    """
    image = np.asarray(image, dtype=np.float64)
    labels = np.asarray(labels)
    for op in ops:
        if isinstance(op, str):
            image = _apply_geometric(image, op)
            labels = _apply_geometric(labels, op)
        else:
            kind, param = op
            if kind == "gaussian_blur":
                if not 0.5 <= param <= 1.5:
                    raise ValueError("gaussian sigma must lie in [0.5, 1.5]")
                image = ndi.gaussian_filter(image, sigma=param)
            elif kind == "median_blur":
                if param not in (3, 5):
                    raise ValueError("median kernel must be 3 or 5")
                image = ndi.median_filter(image, size=param)
            else:
                raise ValueError(f"unknown augmentation {kind!r}")
    return np.ascontiguousarray(image), np.ascontiguousarray(labels)


def random_augmentation(seed):
    """Sample an augmentation list: optional flip, rotation, and one blur."""
    rng = np.random.default_rng(seed)
    ops = []
    if rng.random() < 0.5:
        ops.append(rng.choice(["flip_h", "flip_v"]))
    if rng.random() < 0.5:
        ops.append(rng.choice(["rot90", "rot180", "rot270"]))
    blur = rng.random()
    if blur < 0.25:
        ops.append(("gaussian_blur", float(rng.uniform(0.5, 1.5))))
    elif blur < 0.5:
        ops.append(("median_blur", int(rng.choice([3, 5]))))
    return ops
