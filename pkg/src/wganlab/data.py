"""Seeded samplers for the 2-D toy distributions and the latent prior."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

DATASETS = ("8gaussians", "25gaussians", "swissroll")

# named substreams so that e.g. EMD evaluation never shifts the training stream
STREAMS = {
    "data": 0,
    "latent": 1,
    "penalty": 2,
    "critic_init": 3,
    "generator_init": 4,
    "eval": 5,
}


class Rng:
    """Philox counter-based uniform stream plus Box-Muller normals.

    Two generators built from the same ``(seed, stream)`` produce bit-identical
    draws on every platform.
    """

    def __init__(self, seed: int = 0, stream: int = 0):
        if isinstance(stream, str):
            stream = STREAMS[stream]
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self._bits = np.random.Generator(np.random.Philox(ss))

    def uniform(self, size) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        return self._bits.random(size)

    def normal(self, size) -> np.ndarray:
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = int(np.prod(shape))
        pairs = (count + 1) // 2
        u = self.uniform((pairs, 2))
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))  # 1-u lies in (0, 1]
        angle = 2.0 * math.pi * u[:, 1]
        z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        return z.reshape(-1)[:count].reshape(shape)

    def choice(self, k: int, size: int) -> np.ndarray:
        return np.minimum((self.uniform(size) * k).astype(np.int64), k - 1)


@dataclass(frozen=True)
class GeneratorConstants:
    gauss8_radius: float = 2.0
    gauss8_sigma: float = 0.02
    gauss8_scale: float = 1.0 / math.sqrt(2.0)
    gauss25_spacing: float = 2.0
    gauss25_sigma: float = 0.05
    gauss25_scale: float = 1.0 / (2.0 * math.sqrt(2.0))
    swiss_noise: float = 0.25
    swiss_scale: float = 1.0 / 7.5


DEFAULT_CONSTANTS = GeneratorConstants()


def _check_count(n: int):
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")


def gauss8_centers(k: GeneratorConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    angles = np.arange(8) * (2.0 * math.pi / 8)
    return k.gauss8_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def gauss25_centers(k: GeneratorConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    grid = np.arange(-2, 3, dtype=np.float64) * k.gauss25_spacing
    xs, ys = np.meshgrid(grid, grid, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def sample_8gaussians(rng: Rng, n: int, k: GeneratorConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    _check_count(n)
    centers = gauss8_centers(k)[rng.choice(8, n)]
    return (centers + k.gauss8_sigma * rng.normal((n, 2))) * k.gauss8_scale


def sample_25gaussians(rng: Rng, n: int, k: GeneratorConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    _check_count(n)
    centers = gauss25_centers(k)[rng.choice(25, n)]
    return (centers + k.gauss25_sigma * rng.normal((n, 2))) * k.gauss25_scale


def swiss_roll_point(u, noise=None, k: GeneratorConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Map roll positions ``u`` in [0, 1] (and optional 3-D noise) to the plane."""
    u = np.asarray(u, dtype=np.float64)
    t = 1.5 * math.pi * (1.0 + 2.0 * u)
    pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=-1)
    if noise is not None:
        pts = pts + noise
    return pts * k.swiss_scale


def sample_swiss_roll(rng: Rng, n: int, k: GeneratorConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    _check_count(n)
    u = rng.uniform(n)
    # the height coordinate is drawn only to keep the 3-D noise layout; it is dropped
    rng.uniform(n)
    noise = k.swiss_noise * rng.normal((n, 3))
    return swiss_roll_point(u, noise[:, [0, 2]], k)


def sample_latent(rng: Rng, n: int, dim: int = 2) -> np.ndarray:
    _check_count(n)
    if dim < 1:
        raise ValueError(f"latent dim must be >= 1, got {dim}")
    return rng.normal((n, dim))


SAMPLERS = {
    "8gaussians": sample_8gaussians,
    "25gaussians": sample_25gaussians,
    "swissroll": sample_swiss_roll,
}


def sample(dataset: str, rng: Rng, n: int) -> np.ndarray:
    try:
        fn = SAMPLERS[dataset]
    except KeyError:
        raise ValueError(f"unknown dataset {dataset!r}; expected one of {DATASETS}") from None
    return fn(rng, n)


def points_to_csv(points: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("x,y\n")
    for x, y in np.asarray(points, dtype=np.float64):
        buf.write(f"{x:.17g},{y:.17g}\n")
    return buf.getvalue()


def points_from_csv(text: str) -> np.ndarray:
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != "x,y":
        raise ValueError("expected a CSV header 'x,y'")
    rows = [tuple(float(v) for v in line.split(",")) for line in lines[1:] if line.strip()]
    return np.array(rows, dtype=np.float64).reshape(-1, 2)
