"""Binary k-space/image containers and PNG export.

Container layout: one line of UTF-8 JSON (newline-terminated) with keys
n_samples, n_coils, n_fe, coord_dim and dtype "c64", followed by the sample
values as little-endian float32 interleaved (re, im) in row-major
[sample][coil] order, then the coordinates as little-endian float32 in
[sample][dim] order.
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from .kcore import MultiCoilKSpace, make_cartesian_grid
from .metrics import normalize_for_metrics


def save_kspace(path, kspace: MultiCoilKSpace):
    header = {
        "n_samples": int(kspace.n_samples),
        "n_coils": int(kspace.n_coils),
        "n_fe": int(kspace.n_fe),
        "coord_dim": int(kspace.coords.shape[1]),
        "dtype": "c64",
    }
    inter = np.empty((kspace.n_samples, kspace.n_coils, 2), dtype="<f4")
    inter[..., 0] = kspace.values.real
    inter[..., 1] = kspace.values.imag
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(inter.tobytes())
        f.write(kspace.coords.astype("<f4").tobytes())


def load_kspace(path) -> MultiCoilKSpace:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("dtype") != "c64":
            raise ValueError(f"unsupported container dtype: {header.get('dtype')!r}")
        n, c, d = header["n_samples"], header["n_coils"], header["coord_dim"]
        inter = np.frombuffer(f.read(n * c * 2 * 4), dtype="<f4").reshape(n, c, 2)
        coords = np.frombuffer(f.read(n * d * 4), dtype="<f4").reshape(n, d)
    values = inter[..., 0].astype(np.float64) + 1j * inter[..., 1].astype(np.float64)
    return MultiCoilKSpace(coords.astype(np.float64), values, c, header["n_fe"])


def save_image_container(path, image):
    """Store a complex image as a single-coil container on its pixel grid."""
    image = np.asarray(image, dtype=np.complex128)
    nx, ny = image.shape
    coords = make_cartesian_grid(nx, ny, t=0.0)
    values = image.swapaxes(0, 1).reshape(-1, 1)  # x-fastest sample order
    save_kspace(path, MultiCoilKSpace(coords, values, 1, nx))


def load_image_container(path):
    ksp = load_kspace(path)
    if ksp.n_coils != 1:
        raise ValueError("image container must hold a single value per sample")
    n = ksp.n_fe
    if ksp.n_samples % n:
        raise ValueError("container does not hold a rectangular image")
    ny = ksp.n_samples // n
    return ksp.values[:, 0].reshape(ny, n).swapaxes(0, 1)


def save_png(path, image):
    """8-bit grayscale magnitude PNG (after percentile clipping).

    The first image axis (x) maps to PNG columns, the second (y) to rows.
    """
    norm = normalize_for_metrics(image)
    arr = np.round(norm * 255.0).astype(np.uint8)
    Image.fromarray(arr.T, mode="L").save(path)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
