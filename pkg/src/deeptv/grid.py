"""Uniform grids, difference stencils, discrete TV and its smoothings.

Grids are node lattices including both endpoints of every axis, with
spacing h = (b - a)/(n - 1).  All quadrature sums run over the full node
set with weight w = measure(domain)/N; boundary stencils read ghost
values chosen by the boundary condition (Neumann: ghost equals the
boundary node, so the difference is 0; Dirichlet: ghost is 0).

Two gradient discretizations are provided: plain forward differences
(1 channel per axis) and, in 2-d, the forward-backward stencil with 4
channels per node whose averaged two-norm equals the exact total
variation of the piecewise affine interpolant.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._pgm import write_pgm

NEUMANN = "neumann"
DIRICHLET = "dirichlet"

FIELD_MAGIC = b"DTVFLD1"


@dataclass(frozen=True)
class Grid:
    """Uniform node lattice on a rectangular domain."""

    bounds: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]
    bc: str = NEUMANN

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if len(self.bounds) != len(self.shape) or len(self.shape) not in (1, 2):
            raise ValueError("grid must be 1-d or 2-d with matching bounds/shape")
        if any(n < 1 for n in self.shape):
            raise ValueError("each axis needs at least one node")
        if any(b <= a for a, b in self.bounds):
            raise ValueError("bounds must satisfy a < b")
        if self.bc not in (NEUMANN, DIRICHLET):
            raise ValueError(f"unknown boundary condition {self.bc!r}")

    @classmethod
    def interval(cls, a: float, b: float, n: int, bc: str = NEUMANN) -> "Grid":
        return cls(bounds=((a, b),), shape=(n,), bc=bc)

    @classmethod
    def rect(cls, bounds, shape, bc: str = NEUMANN) -> "Grid":
        return cls(bounds=tuple(bounds), shape=tuple(shape), bc=bc)

    @classmethod
    def unit_square(cls, n: int, bc: str = NEUMANN) -> "Grid":
        return cls(bounds=((0.0, 1.0), (0.0, 1.0)), shape=(n, n), bc=bc)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        # A single-node axis spans the whole extent (one cell).
        return tuple(
            (b - a) / max(n - 1, 1) for (a, b), n in zip(self.bounds, self.shape)
        )

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.bounds]))

    @property
    def quad_weight(self) -> float:
        """Uniform quadrature weight w = measure/N."""
        return self.measure / self.node_count

    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            a + np.arange(n) * h
            for (a, _), n, h in zip(self.bounds, self.shape, self.spacing)
        )

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (N, dim), in row-major node order."""
        return _nodes_cached(self)

    def refined(self, factor: int) -> "Grid":
        """Grid with factor-times more nodes per axis over the same domain."""
        if factor < 1:
            raise ValueError("refinement factor must be a positive integer")
        return Grid(self.bounds, tuple(factor * n for n in self.shape), self.bc)


@lru_cache(maxsize=32)
def _nodes_cached(grid: Grid) -> np.ndarray:
    if grid.dim == 1:
        coords = grid.axes()[0][:, None]
    else:
        x, y = np.meshgrid(*grid.axes(), indexing="ij")
        coords = np.column_stack([x.ravel(), y.ravel()])
    coords.setflags(write=False)
    return coords


@dataclass
class Field:
    """Scalar values on a grid's nodes (row-major)."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.grid)


@dataclass
class GradField:
    """Per-node gradient channels; kind is 'forward' or 'fb'."""

    values: np.ndarray  # shape (*grid.shape, channels)
    grid: Grid
    kind: str

    @property
    def channels(self) -> int:
        return self.values.shape[-1]


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


# -- stencils --------------------------------------------------------------


def _forward_axis(values: np.ndarray, axis: int, h: float, bc: str) -> np.ndarray:
    out = np.zeros_like(values)
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    last = [slice(None)] * values.ndim
    last[axis] = slice(-1, None)
    if values.shape[axis] > 1:
        out[tuple(lo)] = (values[tuple(hi)] - values[tuple(lo)]) / h
    if bc == DIRICHLET:
        out[tuple(last)] = -values[tuple(last)] / h
    return out


def _backward_axis(values: np.ndarray, axis: int, h: float, bc: str) -> np.ndarray:
    out = np.zeros_like(values)
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    first = [slice(None)] * values.ndim
    first[axis] = slice(0, 1)
    if values.shape[axis] > 1:
        out[tuple(hi)] = (values[tuple(hi)] - values[tuple(lo)]) / h
    if bc == DIRICHLET:
        out[tuple(first)] = values[tuple(first)] / h
    return out


def grad_forward_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.stack(
        [_forward_axis(values, k, grid.spacing[k], grid.bc) for k in range(grid.dim)],
        axis=-1,
    )


def grad_forward(u: Field) -> GradField:
    """Forward-difference gradient, one channel per axis."""
    return GradField(grad_forward_values(u.values, u.grid), u.grid, "forward")


def grad_fb_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.dim != 2:
        raise ValueError("forward-backward gradient is 2-d only")
    h1, h2 = grid.spacing
    return np.stack(
        [
            _forward_axis(values, 0, h1, grid.bc),
            _forward_axis(values, 1, h2, grid.bc),
            _backward_axis(values, 0, h1, grid.bc),
            _backward_axis(values, 1, h2, grid.bc),
        ],
        axis=-1,
    )


def grad_fb(u: Field) -> GradField:
    """Forward-backward gradient: 4 channels (fwd x, fwd y, bwd x, bwd y)."""
    return GradField(grad_fb_values(u.values, u.grid), u.grid, "fb")


def _forward_axis_adjoint(p: np.ndarray, axis: int, h: float, bc: str) -> np.ndarray:
    # Transpose of _forward_axis: out[j] = (p[j-1] - p[j])/h with the
    # boundary rows following the stencil (Neumann drops the last row).
    out = np.zeros_like(p)
    n = p.shape[axis]
    lo = [slice(None)] * p.ndim
    hi = [slice(None)] * p.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    if n > 1:
        out[tuple(hi)] = p[tuple(lo)]
    interior = [slice(None)] * p.ndim
    interior[axis] = slice(0, -1) if bc == NEUMANN and n > 1 else slice(None)
    out[tuple(interior)] -= p[tuple(interior)]
    return out / h


def _backward_axis_adjoint(q: np.ndarray, axis: int, h: float, bc: str) -> np.ndarray:
    out = np.zeros_like(q)
    n = q.shape[axis]
    lo = [slice(None)] * q.ndim
    hi = [slice(None)] * q.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    interior = [slice(None)] * q.ndim
    interior[axis] = slice(1, None) if bc == NEUMANN and n > 1 else slice(None)
    out[tuple(interior)] = q[tuple(interior)]
    if n > 1:
        out[tuple(lo)] -= q[tuple(hi)]
    return out / h


def divergence_values(p: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros(grid.shape, dtype=np.float64)
    for k in range(grid.dim):
        out += _forward_axis_adjoint(p[..., k], k, grid.spacing[k], grid.bc)
    return out


def divergence(p: GradField) -> Field:
    """Adjoint of grad_forward: <grad_forward(u), p> = <u, divergence(p)>."""
    if p.kind != "forward" or p.channels != p.grid.dim:
        raise ValueError("divergence expects a forward-stencil gradient field")
    return Field(divergence_values(p.values, p.grid), p.grid)


def grad_fb_adjoint_values(p: np.ndarray, grid: Grid) -> np.ndarray:
    h1, h2 = grid.spacing
    out = _forward_axis_adjoint(p[..., 0], 0, h1, grid.bc)
    out += _forward_axis_adjoint(p[..., 1], 1, h2, grid.bc)
    out += _backward_axis_adjoint(p[..., 2], 0, h1, grid.bc)
    out += _backward_axis_adjoint(p[..., 3], 1, h2, grid.bc)
    return out


# -- vector norms and their smoothings -------------------------------------
#
# All of these act on the trailing axis, so they apply equally to a single
# 2- or 4-vector and to a full grid of per-node gradients.


def _euclid(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.square(v), axis=-1))


def _split_halves(w: np.ndarray):
    k = w.shape[-1]
    if k % 2 != 0:
        raise ValueError("need an even number of channels to split in halves")
    return w[..., : k // 2], w[..., k // 2 :]


def norm_21(w) -> np.ndarray | float:
    """Averaged two-norm of the two halves of a 4-vector: (|v-|+|v+|)/2."""
    u, v = _split_halves(np.asarray(w, dtype=np.float64))
    out = 0.5 * (_euclid(u) + _euclid(v))
    return float(out) if out.ndim == 0 else out


def huber2(v, gamma: float):
    """Huber smoothing of the Euclidean norm: quadratic below gamma."""
    if gamma <= 0:
        raise ValueError("huber smoothing needs gamma > 0")
    t = _euclid(np.asarray(v, dtype=np.float64))
    out = np.where(t <= gamma, t * t / (2.0 * gamma), t - 0.5 * gamma)
    return float(out) if out.ndim == 0 else out


def huber21(w, gamma: float):
    u, v = _split_halves(np.asarray(w, dtype=np.float64))
    out = 0.5 * (huber2(u, gamma) + huber2(v, gamma))
    return float(out) if np.ndim(out) == 0 else out


def lift2(v, gamma: float):
    """Smooth-from-above replacement sqrt(|v|^2 + gamma)."""
    if gamma < 0:
        raise ValueError("lifting needs gamma >= 0")
    v = np.asarray(v, dtype=np.float64)
    out = np.sqrt(np.sum(np.square(v), axis=-1) + gamma)
    return float(out) if out.ndim == 0 else out


def lift21(w, gamma: float):
    u, v = _split_halves(np.asarray(w, dtype=np.float64))
    out = 0.5 * (lift2(u, gamma) + lift2(v, gamma))
    return float(out) if np.ndim(out) == 0 else out


def maxlift2(v, gamma: float):
    """max(|v|_2, gamma): exact away from zero, flat near it."""
    out = np.maximum(_euclid(np.asarray(v, dtype=np.float64)), gamma)
    return float(out) if out.ndim == 0 else out


def maxlift21(w, gamma: float):
    u, v = _split_halves(np.asarray(w, dtype=np.float64))
    out = 0.5 * (maxlift2(u, gamma) + maxlift2(v, gamma))
    return float(out) if np.ndim(out) == 0 else out


SMOOTHINGS = ("none", "huber", "lift", "maxlift")


def smoothed_norm(v: np.ndarray, smoothing: str, gamma: float) -> np.ndarray:
    """Per-node smoothed Euclidean norm over the trailing channel axis."""
    if smoothing == "none":
        return _euclid(v)
    if smoothing == "huber":
        return np.asarray(huber2(v, gamma))
    if smoothing == "lift":
        return np.asarray(lift2(v, gamma))
    if smoothing == "maxlift":
        return np.asarray(maxlift2(v, gamma))
    raise ValueError(f"unknown smoothing {smoothing!r}")


def smoothed_norm_grad(v: np.ndarray, smoothing: str, gamma: float) -> np.ndarray:
    """d(smoothed norm)/dv, with subgradient 0 wherever the norm is flat."""
    t = _euclid(v)[..., None]
    if smoothing == "none":
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(t > 0, v / np.where(t > 0, t, 1.0), 0.0)
        return g
    if smoothing == "huber":
        safe = np.where(t > gamma, t, 1.0)
        return np.where(t <= gamma, v / gamma, v / safe)
    if smoothing == "lift":
        return v / np.sqrt(np.sum(np.square(v), axis=-1) + gamma)[..., None]
    if smoothing == "maxlift":
        safe = np.where(t > gamma, t, 1.0)
        return np.where(t > gamma, v / safe, 0.0)
    raise ValueError(f"unknown smoothing {smoothing!r}")


TV_VARIANTS = ("tv2", "tv21")


def tv_node_values(grad_values: np.ndarray, variant: str, smoothing: str, gamma: float) -> np.ndarray:
    """Per-node TV integrand for a stack of gradient channels."""
    if variant == "tv2":
        return smoothed_norm(grad_values, smoothing, gamma)
    if variant == "tv21":
        u, v = _split_halves(grad_values)
        return 0.5 * (
            smoothed_norm(u, smoothing, gamma) + smoothed_norm(v, smoothing, gamma)
        )
    raise ValueError(f"unknown TV variant {variant!r}")


def tv_node_grad(grad_values: np.ndarray, variant: str, smoothing: str, gamma: float) -> np.ndarray:
    if variant == "tv2":
        return smoothed_norm_grad(grad_values, smoothing, gamma)
    if variant == "tv21":
        u, v = _split_halves(grad_values)
        return 0.5 * np.concatenate(
            [
                smoothed_norm_grad(u, smoothing, gamma),
                smoothed_norm_grad(v, smoothing, gamma),
            ],
            axis=-1,
        )
    raise ValueError(f"unknown TV variant {variant!r}")


def gradient_for_variant(values: np.ndarray, grid: Grid, variant: str) -> np.ndarray:
    if variant == "tv21":
        return grad_fb_values(values, grid)
    return grad_forward_values(values, grid)


def gradient_adjoint_for_variant(p: np.ndarray, grid: Grid, variant: str) -> np.ndarray:
    if variant == "tv21":
        return grad_fb_adjoint_values(p, grid)
    return divergence_values(p, grid)


def tv_discrete(u: Field, variant: str = "tv2", smoothing: str = "none", gamma: float = 0.0) -> float:
    """Discrete total variation: w * sum of per-node (smoothed) norms."""
    if variant not in TV_VARIANTS:
        raise ValueError(f"unknown TV variant {variant!r}")
    if variant == "tv21" and u.grid.dim != 2:
        raise ValueError("tv21 needs a 2-d grid")
    g = gradient_for_variant(u.values, u.grid, variant)
    return u.grid.quad_weight * float(tv_node_values(g, variant, smoothing, gamma).sum())


# -- serialization ----------------------------------------------------------
#
# Binary layout: magic "DTVFLD1", uint32 dim, per axis (float64 a, float64 b,
# uint32 n), uint8 bc (0 neumann / 1 dirichlet), then the node values as
# little-endian float64 in row-major order.


def field_to_bytes(f: Field) -> bytes:
    head = [FIELD_MAGIC, struct.pack("<I", f.grid.dim)]
    for (a, b), n in zip(f.grid.bounds, f.grid.shape):
        head.append(struct.pack("<ddI", a, b, n))
    head.append(struct.pack("<B", 0 if f.grid.bc == NEUMANN else 1))
    return b"".join(head) + f.values.astype("<f8").tobytes()


def field_from_bytes(raw: bytes) -> Field:
    if raw[: len(FIELD_MAGIC)] != FIELD_MAGIC:
        raise ValueError("not a serialized field: bad magic")
    pos = len(FIELD_MAGIC)
    (dim,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    bounds, shape = [], []
    for _ in range(dim):
        a, b, n = struct.unpack_from("<ddI", raw, pos)
        pos += 20
        bounds.append((a, b))
        shape.append(n)
    (bc_code,) = struct.unpack_from("<B", raw, pos)
    pos += 1
    grid = Grid(tuple(bounds), tuple(shape), NEUMANN if bc_code == 0 else DIRICHLET)
    values = np.frombuffer(raw, dtype="<f8", offset=pos).reshape(grid.shape)
    return Field(values.copy(), grid)


def save_field(path, f: Field) -> None:
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(f))


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


def save_field_pgm(path, f: Field) -> None:
    """Export as 16-bit PGM after affine rescale of [min, max] to full range."""
    if f.grid.dim != 2:
        raise ValueError("PGM export needs a 2-d field")
    v = f.values
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    write_pgm(path, np.rint(scaled * 65535).astype(np.uint16), maxval=65535)
