"""On-disk raster formats.

Binary masks: 8-bit grayscale PNG (0/255). Label maps: 16-bit grayscale PNG,
pixel value = label id. Real-valued maps: F32R files — magic ``F32R``, then
width and height as 32-bit little-endian unsigned ints, then row-major 32-bit
little-endian IEEE-754 floats.
"""

import os
import struct
import tempfile

import numpy as np
from PIL import Image

F32R_MAGIC = b"F32R"


class MalformedFileError(Exception):
    pass


def _atomic_write(path, write_fn):
    """Write via temp file + rename so readers never see partial output."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _save_png(img):
    return lambda fh: img.save(fh, format="PNG")


def write_mask_png(path, mask):
    arr = (np.asarray(mask, dtype=bool).astype(np.uint8)) * 255
    img = Image.fromarray(arr, mode="L")
    _atomic_write(path, _save_png(img))


def read_mask_png(path):
    arr = _read_png(path)
    return arr > 0


def write_labels_png(path, labels):
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("labels out of range for 16-bit PNG")
    img = Image.fromarray(labels.astype(np.uint16))
    _atomic_write(path, _save_png(img))


def read_labels_png(path):
    return _read_png(path).astype(np.int32)


def _read_png(path):
    try:
        with Image.open(path) as img:
            return np.array(img)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise MalformedFileError(f"{path}: not a readable PNG ({exc})") from exc


def write_image_png(path, image):
    """8-bit grayscale image; accepts float in [0,1] or uint8."""
    image = np.asarray(image)
    if np.issubdtype(image.dtype, np.floating):
        image = np.clip(np.round(image * 255), 0, 255).astype(np.uint8)
    img = Image.fromarray(image.astype(np.uint8), mode="L")
    _atomic_write(path, _save_png(img))


def write_rgb_png(path, image):
    img = Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB")
    _atomic_write(path, _save_png(img))


def read_image_png(path):
    arr = _read_png(path)
    return arr.astype(np.float64) / 255.0


def write_f32r(path, values):
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError("F32R stores 2-D rasters")
    h, w = values.shape
    def _write(fh):
        fh.write(F32R_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(values.tobytes())
    _atomic_write(path, _write)


def read_f32r(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != F32R_MAGIC:
            raise MalformedFileError(f"{path}: bad magic {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise MalformedFileError(f"{path}: truncated header")
        w, h = struct.unpack("<II", header)
        payload = fh.read(4 * w * h)
        if len(payload) != 4 * w * h:
            raise MalformedFileError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float32)
