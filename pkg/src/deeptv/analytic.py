"""Closed-form minimizers, their energies, and the a posteriori bound.

Two test problems with known solutions: a 1-d step observed on an
interval (unit TV weight), and a 2-d disk indicator.  Both come with
exact energies, which makes them oracles for the discrete solvers.  The
error estimator turns a residual and a TV subgradient surrogate into a
computable upper bound on the distance to the true minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import EnergySpec
from .grid import Field, Grid, divergence_values, grad_forward_values
from .operators import ForwardOp, adjoint_values, apply_values


@dataclass(frozen=True)
class Step1DParams:
    """Step data on (-l_ell, 0] -> 0, (0, l_u) -> 1, with unit TV weight."""

    l_ell: float
    l_u: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if self.l_ell <= 0 or self.l_u <= 0:
            raise ValueError("interval arms must be positive")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("data weights must be nonnegative")


def step1d_solution(p: Step1DParams) -> tuple[float, float]:
    """Plateau values (c1 on the data-1 arm, c2 on the data-0 arm).

    Three regimes per plateau: saturated at the data value, an interior
    first-order-condition value, or both plateaus merged at a common
    level C.  Values are clipped to [0, 1].
    """
    if p.alpha2 <= 0:
        raise ValueError("the closed form requires alpha2 > 0")
    a1, a2, ll, lu = p.alpha1, p.alpha2, p.l_ell, p.l_u
    merged_threshold = (lu + ll) / (2.0 * lu * ll) - a2
    c_merged = (2.0 * a2 * lu + a1 * (lu - ll)) / (2.0 * a2 * (ll + lu))

    if a1 >= 1.0 / lu:
        c1 = 1.0
    elif a1 > merged_threshold:
        c1 = 1.0 - (1.0 - a1 * lu) / (2.0 * a2 * lu)
    else:
        c1 = c_merged

    if a1 >= 1.0 / ll:
        c2 = 0.0
    elif a1 > merged_threshold:
        c2 = (1.0 - a1 * ll) / (2.0 * a2 * ll)
    else:
        c2 = c_merged

    return float(np.clip(c1, 0.0, 1.0)), float(np.clip(c2, 0.0, 1.0))


def step1d_energy(p: Step1DParams, c1: float, c2: float) -> float:
    """Continuum energy of the two-plateau candidate (c1, c2)."""
    return (
        p.alpha1 * p.l_ell * abs(c2)
        + p.alpha1 * p.l_u * abs(c1 - 1.0)
        + p.alpha2 * p.l_ell * c2 * c2
        + p.alpha2 * p.l_u * (c1 - 1.0) ** 2
        + abs(c1 - c2)
    )


@dataclass(frozen=True)
class DiskParams:
    """Disk indicator data of radius R with weights (alpha1, alpha2, lam)."""

    radius: float
    alpha1: float
    alpha2: float
    lam: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if min(self.alpha1, self.alpha2, self.lam) < 0:
            raise ValueError("weights must be nonnegative")


def disk_solution(p: DiskParams) -> float:
    """Amplitude a of the minimizer a * indicator(disk).

    Small disks vanish, large disks are kept exactly, and in between the
    amplitude interpolates continuously.
    """
    lo = 2.0 * p.lam / (2.0 * p.alpha2 + p.alpha1)
    hi = math.inf if p.alpha1 == 0 else 2.0 * p.lam / p.alpha1
    if p.radius < lo:
        return 0.0
    if p.radius > hi:
        return 1.0
    if p.alpha2 <= 0:
        raise ValueError("the intermediate branch requires alpha2 > 0")
    return (2.0 * p.alpha2 + p.alpha1) / (2.0 * p.alpha2) - p.lam / (p.alpha2 * p.radius)


def disk_energy(p: DiskParams, amplitude: float) -> float:
    """Continuum energy of a * indicator(disk): misfit on the disk plus
    perimeter cost."""
    area = math.pi * p.radius * p.radius
    return (
        p.alpha1 * abs(1.0 - amplitude) * area
        + p.alpha2 * (1.0 - amplitude) ** 2 * area
        + p.lam * 2.0 * math.pi * p.radius * abs(amplitude)
    )


# -- sampled data / solutions ----------------------------------------------


def step_profile(grid: Grid, split: float, low: float = 0.0, high: float = 1.0) -> Field:
    """1-d field equal to ``low`` for x <= split and ``high`` for x > split."""
    if grid.dim != 1:
        raise ValueError("step profiles are 1-d")
    x = grid.axes()[0]
    return Field(np.where(x > split, high, low), grid)


def disk_profile(grid: Grid, radius: float, center=(0.5, 0.5), amplitude: float = 1.0) -> Field:
    """2-d indicator of a disk (distance <= radius), scaled by amplitude."""
    if grid.dim != 2:
        raise ValueError("disk profiles are 2-d")
    x, y = np.meshgrid(*grid.axes(), indexing="ij")
    inside = (x - center[0]) ** 2 + (y - center[1]) ** 2 <= radius * radius
    return Field(amplitude * inside.astype(np.float64), grid)


def disk_data(grid: Grid, radius: float, amplitude: float = 1.0) -> Field:
    """Centered disk indicator rasterized in pixel-lattice units.

    A node at lattice offset (di, dj) from the central node is lit when
    di^2 + dj^2 <= (radius * n)^2.  On an n-node axis this draws the
    radius as ``radius * n`` pixels (the image convention the reference
    disk observations use), which approaches the exact-radius profile as
    the grid is refined.
    """
    if grid.dim != 2:
        raise ValueError("disk data is 2-d")
    n1, n2 = grid.shape
    ii, jj = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    di = ii - (n1 - 1) / 2.0
    dj = jj - (n2 - 1) / 2.0
    inside = di * di + dj * dj <= (radius * n1) ** 2
    return Field(amplitude * inside.astype(np.float64), grid)


# -- a posteriori error estimate --------------------------------------------


def weighted_l2(f: Field) -> float:
    """Discrete L2 norm with the energy's quadrature weight."""
    return math.sqrt(f.grid.quad_weight * float(np.square(f.values).sum()))


def error_estimate(v: Field, g: Field, spec: EnergySpec, op: ForwardOp,
                   eps: float = 1e-8) -> tuple[float, float, float]:
    """Computable bound rho = rho1 + rho2 with ||u* - v|| <= rho(v).

    rho1 is twice the (adjoint-weighted) residual norm; rho2 measures a
    subgradient surrogate of the nonsmooth terms, scaled by 1/alpha2.
    Valid as a guarantee when the operator is invertible-like (identity).
    """
    if spec.alpha2 <= 0:
        raise ValueError("the error estimate requires alpha2 > 0")
    if v.grid != g.grid:
        raise ValueError("fields live on different grids")
    grid = v.grid
    r = apply_values(op, v.values) - g.values
    rho1 = 2.0 * weighted_l2(Field(adjoint_values(op, r), grid))

    xi = spec.alpha1 * adjoint_values(op, r / (np.abs(r) + eps))
    gv = grad_forward_values(v.values, grid)
    norms = np.sqrt(np.sum(np.square(gv), axis=-1))[..., None]
    xi = xi + spec.lam * divergence_values(gv / (norms + eps), grid)
    rho2 = weighted_l2(Field(xi, grid)) / spec.alpha2
    return rho1, rho2, rho1 + rho2
