"""Time-series-to-image transform.

A series becomes a grayscale image: one column per timestep, the value
mapped to a vertical position, and the resulting line vertically
expanded into a stripe whose brightness decays linearly with distance
from the center row.  Both compared series share one normalization so
vertical offsets between them survive the transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .series import TimeSeries, as_series


@dataclass
class RenderConfig:
    """Geometry of the rendering: image height, expansion width, pooling."""

    height: int = 200
    expand: int = 100
    downscale_window: int = 10

    def __post_init__(self):
        if self.height < 2:
            raise ValueError(f"height must be >= 2, got {self.height}")
        if not 0 <= self.expand < self.height:
            raise ValueError(
                f"expand must be in [0, height), got {self.expand} for height "
                f"{self.height}")
        if not 1 <= self.downscale_window <= self.height:
            raise ValueError(
                f"downscale_window must be in [1, height], got "
                f"{self.downscale_window}")


@dataclass
class SeriesImage:
    """Per-channel H x W intensity grids in [0,1] plus render metadata."""

    channels: np.ndarray           # (N, H, W)
    bounds: np.ndarray             # (N, 2) shared (min, max) per channel
    config: RenderConfig

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]


def _check_same_shape(x: np.ndarray, y: np.ndarray):
    if x.shape != y.shape:
        raise ValueError(f"series shapes differ: {x.shape} vs {y.shape}")


def normalize_pair(x, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map two series into [0,1] with per-channel bounds shared by both.

    The min/max are taken over the union of the two series so relative
    vertical offsets are preserved.  A degenerate channel (max == min)
    maps everything to 0.5.  Returns (x_norm, y_norm, bounds) where
    bounds is (N, 2).
    """
    xs, ys = as_series(x).values, as_series(y).values
    _check_same_shape(xs, ys)
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("normalize_pair: non-finite values in input")
    lo = np.minimum(xs.min(axis=0), ys.min(axis=0))
    hi = np.maximum(xs.max(axis=0), ys.max(axis=0))
    span = hi - lo
    degenerate = span == 0
    safe_span = np.where(degenerate, 1.0, span)
    xn = (xs - lo) / safe_span
    yn = (ys - lo) / safe_span
    xn[:, degenerate] = 0.5
    yn[:, degenerate] = 0.5
    return xn, yn, np.stack([lo, hi], axis=1)


def normalize_single(x) -> Tuple[np.ndarray, np.ndarray]:
    """Normalize one series by its own per-channel bounds."""
    xn, _, bounds = normalize_pair(x, x)
    return xn, bounds


def render(series_norm: np.ndarray, cfg: RenderConfig,
           bounds: Optional[np.ndarray] = None) -> SeriesImage:
    """Render a normalized (T, N) series to per-channel (H, T) images.

    Column t gets its brightest pixel (intensity 1) at row
    round((1 - v) * (H - 1)); rows at vertical distance delta <= expand
    receive intensity (expand + 1 - delta) / (expand + 1).  Overlapping
    stripe contributions in a column combine by maximum.
    """
    arr = np.asarray(series_norm, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("render expects values in [0, 1]; normalize first")
    t_len, n_ch = arr.shape
    h, d = cfg.height, cfg.expand
    rows = np.arange(h, dtype=np.float64)[:, None]
    channels = np.empty((n_ch, h, t_len))
    for c in range(n_ch):
        # round half away from zero so .5 boundaries behave predictably
        centers = np.floor((1.0 - arr[:, c]) * (h - 1) + 0.5)
        delta = np.abs(rows - centers[None, :])
        # one stripe per column, so the max-combine rule for overlaps is
        # automatically satisfied
        channels[c] = np.clip(d + 1.0 - delta, 0.0, None) / (d + 1.0)
    if bounds is None:
        bounds = np.tile(np.array([0.0, 1.0]), (n_ch, 1))
    return SeriesImage(channels=channels, bounds=np.asarray(bounds, dtype=np.float64),
                       config=cfg)


def downscale_channel(img: np.ndarray, window: int) -> np.ndarray:
    """Non-overlapping window x window average pooling of one channel.

    Trailing partial windows average only their actual contents, so the
    output is ceil(H/window) x ceil(W/window).
    """
    h, w = img.shape
    if window > h or window > w:
        raise ValueError(
            f"downscale window {window} larger than image {h}x{w}")
    if window == 1:
        return img.copy()
    ri = np.arange(0, h, window)
    ci = np.arange(0, w, window)
    sums = np.add.reduceat(np.add.reduceat(img, ri, axis=0), ci, axis=1)
    rcount = np.minimum(ri + window, h) - ri
    ccount = np.minimum(ci + window, w) - ci
    return sums / np.outer(rcount, ccount)


def downscale(img: SeriesImage, window: int) -> SeriesImage:
    """Average-pool every channel of a SeriesImage."""
    pooled = np.stack([downscale_channel(ch, window) for ch in img.channels])
    return SeriesImage(channels=pooled, bounds=img.bounds, config=img.config)


def render_pair(x, y, cfg: RenderConfig) -> Tuple[SeriesImage, SeriesImage]:
    """Shared-normalization render of two same-shape series."""
    xn, yn, bounds = normalize_pair(x, y)
    return render(xn, cfg, bounds), render(yn, cfg, bounds)


def _to_u8(channel: np.ndarray) -> np.ndarray:
    return np.floor(channel * 255.0 + 0.5).astype(np.uint8)


def export_image(img: SeriesImage, path, fmt: str = "pgm"):
    """Write each channel as an 8-bit grayscale file.

    Files are named <stem>_ch<k>.<ext> next to the requested path.
    Returns the list of written paths.
    """
    from pathlib import Path

    if fmt not in ("pgm", "png"):
        raise ValueError(f"unknown image format: {fmt!r} (use pgm or png)")
    path = Path(path)
    stem = path.parent / path.stem
    written = []
    for k in range(img.n_channels):
        data = _to_u8(img.channels[k])
        out = Path(f"{stem}_ch{k}.{fmt}")
        try:
            if fmt == "pgm":
                header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode()
                out.write_bytes(header + data.tobytes())
            else:
                from PIL import Image

                Image.fromarray(data, mode="L").save(out, format="PNG")
        except OSError as exc:
            raise OSError(f"cannot write image to {out}: {exc}") from exc
        written.append(out)
    return written


def read_pgm(path) -> np.ndarray:
    """Read back a binary 8-bit PGM as intensities in [0,1]."""
    raw = open(path, "rb").read()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path} is not a binary PGM file")
    parts = raw.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    data = np.frombuffer(parts[3][: w * h], dtype=np.uint8)
    return data.reshape(h, w).astype(np.float64) / 255.0
