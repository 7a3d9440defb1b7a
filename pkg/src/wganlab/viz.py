"""Critic level-set grids, binary PPM rendering and run-artifact writing.

PPM (P6) keeps this dependency-free. To get a PNG, e.g.
``python -c "from PIL import Image; Image.open('levelset_500.ppm').save('levelset_500.png')"``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .nets import MlpParams, evaluate
from .runlog import records_to_csv

DEFAULT_BBOX = (-2.0, 2.0, -2.0, 2.0)
DEFAULT_RESOLUTION = (128, 128)

YELLOW = (255, 255, 0)
GREEN = (0, 255, 0)
RED = (255, 0, 0)


@dataclass(frozen=True)
class LevelSetGrid:
    """``values[i, j]`` is the critic at ``(xs[j], ys[i])``; rows run along y."""

    bbox: tuple[float, float, float, float]
    resolution: tuple[int, int]
    values: np.ndarray

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.bbox[0], self.bbox[1], self.resolution[0])

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.bbox[2], self.bbox[3], self.resolution[1])


@dataclass
class FigureOverlay:
    training_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    generated_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    penalty_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        for name in ("training_points", "generated_points", "penalty_points"):
            pts = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1, 2)
            if not np.all(np.isfinite(pts)):
                raise ValueError(f"{name} contains non-finite coordinates")
            setattr(self, name, pts)


def _check_frame(bbox, resolution):
    x0, x1, y0, y1 = (float(v) for v in bbox)
    nx, ny = (int(v) for v in resolution)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bounding box {bbox}")
    if nx < 2 or ny < 2:
        raise ValueError(f"resolution must be at least 2 per axis, got {resolution}")
    return (x0, x1, y0, y1), (nx, ny)


def level_set_grid(critic: MlpParams, bbox=DEFAULT_BBOX, resolution=DEFAULT_RESOLUTION) -> LevelSetGrid:
    bbox, (nx, ny) = _check_frame(bbox, resolution)
    xs = np.linspace(bbox[0], bbox[1], nx)
    ys = np.linspace(bbox[2], bbox[3], ny)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    values = evaluate(critic, pts).reshape(ny, nx)
    return LevelSetGrid(bbox, (nx, ny), values)


def _to_pixel(points, bbox, nx, ny):
    x0, x1, y0, y1 = bbox
    col = np.floor((points[:, 0] - x0) / (x1 - x0) * (nx - 1) + 0.5).astype(np.int64)
    row = (ny - 1) - np.floor((points[:, 1] - y0) / (y1 - y0) * (ny - 1) + 0.5).astype(np.int64)
    return row, col


def render_figure(grid: LevelSetGrid, overlay: FigureOverlay | None = None) -> bytes:
    """Grayscale level sets (bright = high) with 3x3 point splats, as P6 bytes."""
    nx, ny = grid.resolution
    v = np.asarray(grid.values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    norm = np.full_like(v, 0.5) if hi == lo else (v - lo) / (hi - lo)
    gray = np.floor(norm * 255.0 + 0.5).astype(np.uint8)
    # image row 0 is the top edge, i.e. the largest y
    img = np.repeat(gray[::-1, :, None], 3, axis=2)

    if overlay is not None:
        layers = (
            (overlay.training_points, YELLOW),
            (overlay.generated_points, GREEN),
            (overlay.penalty_points, RED),
        )
        for points, color in layers:
            if len(points) == 0:
                continue
            x0, x1, y0, y1 = grid.bbox
            inside = (
                (points[:, 0] >= x0) & (points[:, 0] <= x1) & (points[:, 1] >= y0) & (points[:, 1] <= y1)
            )
            rows, cols = _to_pixel(points[inside], grid.bbox, nx, ny)
            for r, c in zip(rows, cols):
                img[max(r - 1, 0) : r + 2, max(c - 1, 0) : c + 2] = color

    header = f"P6\n{nx} {ny}\n255\n".encode("ascii")
    return header + img.tobytes()


def write_run_artifacts(log, figures, out_dir, extra_files=None) -> list[tuple[str, int]]:
    """Write ``log.csv``, ``levelset_{iter}.ppm`` and ``manifest.txt``.

    ``log`` is a list of records or ready CSV text; ``figures`` maps iteration
    to PPM bytes (or is a list of ``(iteration, bytes)``). ``extra_files`` maps
    file names to bytes, e.g. checkpoints. Returns the manifest entries.
    """
    text = log if isinstance(log, str) else records_to_csv(log)
    items = figures.items() if isinstance(figures, dict) else figures
    files = [("log.csv", text.encode("utf-8"))]
    files += [(f"levelset_{int(it)}.ppm", blob) for it, blob in sorted(items, key=lambda kv: kv[0])]
    files += sorted((extra_files or {}).items())

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    manifest = []
    for name, blob in files:
        path = os.path.join(out_dir, name)
        try:
            with open(path, "wb") as fh:
                fh.write(blob)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        manifest.append((name, len(blob)))
    path = os.path.join(out_dir, "manifest.txt")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{name}\t{size}\n" for name, size in manifest)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
    return manifest
