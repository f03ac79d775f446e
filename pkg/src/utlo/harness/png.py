"""Raster helpers for sample grids, metric curves and heat maps, written as PNG via Pillow."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw


def encode_png(rgb: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 array as an 8-bit RGB PNG."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"expected (H, W, 3) uint8, got {rgb.shape} {rgb.dtype}")
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def write_png(path, rgb: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(rgb))


def to_uint8(images: np.ndarray) -> np.ndarray:
    """[-1, 1] float NCHW -> uint8 NHWC."""
    x = np.clip((np.asarray(images, dtype=np.float64) + 1.0) * 127.5, 0, 255)
    return np.rint(x).astype(np.uint8).transpose(0, 2, 3, 1)


def image_grid(images: np.ndarray, rows: int, cols: int, pad: int = 2, scale: int = 1) -> np.ndarray:
    """Tile ``rows * cols`` float images (NCHW, [-1, 1]) row-major into one RGB array."""
    tiles = to_uint8(images)
    if scale > 1:
        tiles = tiles.repeat(scale, axis=1).repeat(scale, axis=2)
    n, h, w, _ = tiles.shape
    if n != rows * cols:
        raise ValueError(f"grid {rows}x{cols} needs {rows * cols} images, got {n}")
    out = np.full((rows * (h + pad) + pad, cols * (w + pad) + pad, 3), 255, np.uint8)
    for k in range(n):
        r, c = divmod(k, cols)
        y, x = pad + r * (h + pad), pad + c * (w + pad)
        out[y : y + h, x : x + w] = tiles[k]
    return out


PALETTE = [(31, 119, 180), (214, 39, 40), (44, 160, 44), (148, 103, 189), (255, 127, 14), (23, 190, 207)]


def line_plot(series: dict, width: int = 480, height: int = 320) -> np.ndarray:
    """Plot ``{name: (xs, ys)}`` as polylines on labelled axes; returns RGB."""
    xs_all = np.concatenate([np.asarray(v[0], float) for v in series.values()])
    ys_all = np.concatenate([np.asarray(v[1], float) for v in series.values()])
    if xs_all.size == 0:
        raise ValueError("nothing to plot")
    x_lo, x_hi = xs_all.min(), xs_all.max()
    y_lo, y_hi = ys_all.min(), ys_all.max()
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1
    left, right, top, bottom = 60, 12, 12, 28

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right)

    def py(y):
        return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom)

    img = Image.new("RGB", (width, height), "white")
    draw = ImageDraw.Draw(img)
    draw.line([(left, top), (left, height - bottom), (width - right, height - bottom)], fill="black")
    for frac in (0.0, 0.5, 1.0):
        yv = y_lo + frac * (y_hi - y_lo)
        draw.text((2, py(yv) - 5), f"{yv:.3g}", fill="black")
        xv = x_lo + frac * (x_hi - x_lo)
        draw.text((px(xv) - 6, height - bottom + 8), f"{xv:.0f}", fill="black")
    for k, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = [(px(x), py(y)) for x, y in zip(xs, ys)]
        if len(pts) > 1:
            draw.line(pts, fill=color, width=1)
        for a, b in pts:
            draw.rectangle([a - 1, b - 1, a + 1, b + 1], fill=color)
        # legend
        ly = top + 4 + 12 * k
        draw.rectangle([width - right - 90, ly, width - right - 80, ly + 6], fill=color)
        draw.text((width - right - 76, ly - 3), str(name), fill="black")
    return np.asarray(img)


def heat_map(matrix: np.ndarray, cell: int = 24) -> np.ndarray:
    """Render a square matrix with a white (low) to dark red (high) ramp."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = m.min(), m.max()
    t = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    color = np.stack([255 - 100 * t, 255 - 230 * t, 255 - 230 * t], axis=-1)
    rgb = np.rint(color).astype(np.uint8)
    return rgb.repeat(cell, axis=0).repeat(cell, axis=1)
