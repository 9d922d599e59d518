"""PPM (P6, 8-bit) read/write; PNG through Pillow when installed."""

import os

import numpy as np

from lens_forge.errors import DatasetError


def _as_uint8(image):
    if hasattr(image, "to_uint8"):
        return image.to_uint8()
    a = np.asarray(image)
    if a.dtype != np.uint8:
        a = np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return a


def write_ppm(path, image):
    a = _as_uint8(image)
    h, w, _ = a.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(a).tobytes())


def _tokens(data, count, pos):
    out = []
    while len(out) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    return out, pos + 1


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    try:
        (magic, w, h, maxval), pos = _tokens(data, 4, 0)
        if magic != b"P6" or int(maxval) != 255:
            raise DatasetError(f"{path}: only 8-bit binary PPM (P6) is supported")
        w, h = int(w), int(h)
        pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    except ValueError as exc:
        raise DatasetError(f"{path}: truncated or malformed PPM: {exc}") from exc
    return pixels.reshape(h, w, 3).copy()


def write_image(path, image):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(_as_uint8(image)).save(path)
    else:
        write_ppm(path, image)


def read_image(path):
    """Read an image as float RGB in [0, 1], shape (h, w, 3)."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        from PIL import Image as PILImage

        a = np.asarray(PILImage.open(path).convert("RGB"))
    else:
        a = read_ppm(path)
    return a.astype(np.float64) / 255.0
