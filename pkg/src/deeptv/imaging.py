"""Grayscale image I/O, noise synthesis, metrics, and mesh-free rendering."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from ._pgm import read_pgm, write_pgm
from .grid import Field, Grid
from .network import NetworkSpec, forward

# Fixed stream tags so the Gaussian and salt-and-pepper draws for the same
# seed are independent.
_GAUSSIAN_STREAM = 0
_SALT_PEPPER_STREAM = 1


@dataclass
class Image:
    """Grayscale intensities in [0, 1], row-major (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("images must be nonempty 2-d arrays")
        self.values = np.clip(v, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_field(self, grid: Grid | None = None, bc: str = "neumann") -> Field:
        """View the image as a field, by default on the unit square."""
        if grid is None:
            grid = Grid(((0.0, 1.0), (0.0, 1.0)), self.values.shape, bc)
        return Field(self.values.copy(), grid)


def load_image(path) -> Image:
    """Load a PGM (P2/P5) or grayscale PNG, normalized to [0, 1]."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm"):
        pixels, maxval = read_pgm(path)
        return Image(pixels / maxval)
    img = PILImage.open(path)
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return Image(arr / 65535.0)
    if img.mode != "L":
        img = img.convert("L")
    return Image(np.asarray(img, dtype=np.float64) / 255.0)


def save_image(img: Image, path, bits: int = 16) -> None:
    """Write PGM or PNG by extension; 16-bit keeps quantization <= 1/65535."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = 65535 if bits == 16 else 255
    pixels = np.rint(img.values * maxval).astype(np.uint32)
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, pixels, maxval=maxval)
    elif path.suffix.lower() == ".png":
        if bits == 16:
            PILImage.fromarray(pixels.astype(np.uint16)).save(path)
        else:
            PILImage.fromarray(pixels.astype(np.uint8), mode="L").save(path)
    else:
        raise ValueError(f"unsupported image format {path.suffix!r}")


def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)))


def add_gaussian_noise(img: Image, sigma: float, seed: int) -> Image:
    """Additive zero-mean Gaussian noise, clamped back into [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return Image(img.values.copy())
    eta = _stream(seed, _GAUSSIAN_STREAM).normal(0.0, sigma, size=img.values.shape)
    return Image(img.values + eta)


def add_salt_pepper(img: Image, prob: float, seed: int) -> Image:
    """Each pixel becomes 0 or 1 with probability prob/2 each."""
    if not 0 <= prob < 1:
        raise ValueError("salt-and-pepper probability must lie in [0, 1)")
    if prob == 0:
        return Image(img.values.copy())
    r = _stream(seed, _SALT_PEPPER_STREAM).random(size=img.values.shape)
    out = np.where(r < prob / 2, 0.0, np.where(r < prob, 1.0, img.values))
    return Image(out)


def render_fine(net: NetworkSpec, theta: np.ndarray, grid: Grid, factor: int) -> Image:
    """Evaluate the network on a factor-times denser lattice (no resampling).

    The network is a continuous function, so rendering at any resolution
    just means evaluating it at more coordinates over the same domain.
    """
    if grid.dim != 2:
        raise ValueError("image rendering needs a 2-d grid")
    fine = grid.refined(factor)
    values = forward(net, theta, fine.nodes()).reshape(fine.shape)
    return Image(values)


def sample_network(net: NetworkSpec, theta: np.ndarray, grid: Grid) -> Field:
    """Network values at the grid nodes, as a field."""
    return Field(forward(net, theta, grid.nodes()).reshape(grid.shape), grid)


def metrics(u: Field, v: Field) -> tuple[float, float]:
    """(mean absolute difference, quadrature-weighted L2 distance)."""
    if u.grid != v.grid:
        raise ValueError("fields live on different grids")
    d = u.values - v.values
    mean_l1 = float(np.abs(d).mean())
    l2 = float(np.sqrt(u.grid.quad_weight * np.square(d).sum()))
    return mean_l1, l2
