"""Discrete forward operators: identity, inpainting mask, Gaussian blur.

All three are linear with cheap adjoints: identity and masks are
self-adjoint diagonal operators, and zero-padded "same" correlation has
the 180-degree-rotated kernel as its adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Field, Grid


@dataclass(frozen=True)
class Kernel:
    """Normalized blur kernel on the centered integer lattice."""

    weights: np.ndarray
    sigma: float | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("kernel must be square")
        if w.shape[0] % 2 == 0:
            raise ValueError("kernel side length must be odd")
        if np.any(w < 0):
            raise ValueError("kernel entries must be nonnegative")
        s = w.sum()
        if s <= 0:
            raise ValueError("kernel must have positive mass")
        w = w / s
        if not np.allclose(w, w[::-1, ::-1], atol=1e-12):
            raise ValueError("kernel must be symmetric under 180-degree rotation")
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Sampled Gaussian exp(-(i^2+j^2)/(2 sigma^2)), normalized to sum 1."""
    if size % 2 == 0:
        raise ValueError("kernel size must be odd")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = np.arange(size) - size // 2
    ii, jj = np.meshgrid(r, r, indexing="ij")
    w = np.exp(-(ii * ii + jj * jj) / (2.0 * sigma * sigma))
    return Kernel(w, sigma=float(sigma))


def kernel_from_text(path) -> Kernel:
    """Load a kernel from a whitespace-separated matrix file."""
    return Kernel(np.loadtxt(path, dtype=np.float64, ndmin=2))


@dataclass(frozen=True)
class ForwardOp:
    """Measurement operator T^h with kind in {identity, mask, blur}."""

    kind: str
    mask: np.ndarray | None = None
    kernel: Kernel | None = None
    grid: Grid | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "mask", "blur"):
            raise ValueError(f"unknown operator kind {self.kind!r}")


def identity_op(grid: Grid | None = None) -> ForwardOp:
    return ForwardOp("identity", grid=grid)


def mask_op(mask: Field) -> ForwardOp:
    m = mask.values
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("mask entries must be 0 or 1")
    return ForwardOp("mask", mask=m, grid=mask.grid)


def blur_op(kernel: Kernel, grid: Grid) -> ForwardOp:
    if grid.dim != 2:
        raise ValueError("blur operators need a 2-d grid")
    return ForwardOp("blur", kernel=kernel, grid=grid)


def mask_from_image(path, grid: Grid) -> ForwardOp:
    """Build an inpainting operator from an image file; nonzero pixels keep."""
    from .imaging import load_image

    img = load_image(path)
    if img.values.shape != grid.shape:
        raise ValueError(
            f"mask shape {img.values.shape} does not match grid {grid.shape}"
        )
    return mask_op(Field((img.values > 0).astype(np.float64), grid))


def _check_grid(op: ForwardOp, u: Field):
    if op.grid is not None and op.grid != u.grid:
        raise ValueError("operator and field grids do not match")


def apply_values(op: ForwardOp, values: np.ndarray) -> np.ndarray:
    if op.kind == "identity":
        return values
    if op.kind == "mask":
        return values * op.mask
    return ndimage.correlate(values, op.kernel.weights, mode="constant", cval=0.0)


def adjoint_values(op: ForwardOp, values: np.ndarray) -> np.ndarray:
    if op.kind == "identity":
        return values
    if op.kind == "mask":
        return values * op.mask
    flipped = op.kernel.weights[::-1, ::-1]
    return ndimage.correlate(values, flipped, mode="constant", cval=0.0)


def apply(op: ForwardOp, u: Field) -> Field:
    """Apply the forward operator."""
    _check_grid(op, u)
    return Field(apply_values(op, u.values), u.grid)


def adjoint(op: ForwardOp, r: Field) -> Field:
    """Apply the adjoint: <apply(u), r> = <u, adjoint(r)>."""
    _check_grid(op, r)
    return Field(adjoint_values(op, r.values), r.grid)
