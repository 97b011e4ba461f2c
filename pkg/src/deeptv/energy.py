"""The discrete L1-L2-TV objective, for networks and for pixel fields.

Both parameterizations share one formula

    E(u) = w * [ a1 * sum |T u - g|  +  a2 * sum |T u - g|^2
                 + lam * sum phi(grad_h u) ]  +  alpha_theta * |theta|_inf

with w = measure(domain)/N, so a network and a pixel field with identical
node values have identical energy.  The network path additionally returns
exact parameter gradients through the recording tape.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import grid as gridops
from .grid import Field, Grid
from .network import NetworkSpec, forward, forward_on_tape
from .operators import ForwardOp, adjoint_values, apply_values
from .tape import Tape, backward


@dataclass(frozen=True)
class EnergySpec:
    """Weights and discretization choices of the reconstruction energy."""

    alpha1: float = 10.0
    alpha2: float = 30.0
    lam: float = 1.0
    tv_variant: str = "tv2"
    smoothing: str = "lift"
    gamma: float = 1e-10
    bc: str = gridops.NEUMANN
    c: float = 1e4
    alpha_theta: float = 0.0

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.lam, self.alpha_theta) < 0:
            raise ValueError("energy weights must be nonnegative")
        if self.tv_variant not in gridops.TV_VARIANTS:
            raise ValueError(f"unknown TV variant {self.tv_variant!r}")
        if self.smoothing not in gridops.SMOOTHINGS:
            raise ValueError(f"unknown smoothing {self.smoothing!r}")
        if self.smoothing != "none" and self.gamma <= 0:
            raise ValueError("smoothed TV needs gamma > 0")
        if self.bc not in (gridops.NEUMANN, gridops.DIRICHLET):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.c < 0:
            raise ValueError("weight bound c must be nonnegative")

    def with_(self, **kw) -> "EnergySpec":
        return replace(self, **kw)


def _check_setup(spec: EnergySpec, grid: Grid, g: Field, op: ForwardOp):
    if g.grid != grid:
        raise ValueError("data field does not live on the evaluation grid")
    if spec.bc != grid.bc:
        raise ValueError(
            f"energy spec wants bc={spec.bc!r} but the grid has bc={grid.bc!r}"
        )
    if op.grid is not None and op.grid != grid:
        raise ValueError("forward operator grid does not match")
    if spec.tv_variant == "tv21" and grid.dim != 2:
        raise ValueError("tv21 needs a 2-d grid")


def _energy_of_values(spec: EnergySpec, values: np.ndarray, grid: Grid,
                      g: Field, op: ForwardOp) -> float:
    w = grid.quad_weight
    r = apply_values(op, values) - g.values
    total = spec.alpha1 * np.abs(r).sum() + spec.alpha2 * np.square(r).sum()
    if spec.lam > 0:
        gv = gridops.gradient_for_variant(values, grid, spec.tv_variant)
        total += spec.lam * gridops.tv_node_values(
            gv, spec.tv_variant, spec.smoothing, spec.gamma
        ).sum()
    return w * float(total)


def energy_fd(spec: EnergySpec, u: Field, g: Field, op: ForwardOp) -> float:
    """Objective value for a pixel field (any smoothing, including none)."""
    _check_setup(spec, u.grid, g, op)
    return _energy_of_values(spec, u.values, u.grid, g, op)


def _energy_fd_grad_values(spec: EnergySpec, values: np.ndarray, grid: Grid,
                           g_values: np.ndarray, op: ForwardOp):
    w = grid.quad_weight
    r = apply_values(op, values) - g_values
    # overflow to inf is fine: the optimizer detects it and reports divergence
    with np.errstate(over="ignore"):
        total = spec.alpha1 * np.abs(r).sum() + spec.alpha2 * np.square(r).sum()
    du = adjoint_values(op, spec.alpha1 * np.sign(r) + 2.0 * spec.alpha2 * r)
    if spec.lam > 0:
        gv = gridops.gradient_for_variant(values, grid, spec.tv_variant)
        total += spec.lam * gridops.tv_node_values(
            gv, spec.tv_variant, spec.smoothing, spec.gamma
        ).sum()
        p = gridops.tv_node_grad(gv, spec.tv_variant, spec.smoothing, spec.gamma)
        du += spec.lam * gridops.gradient_adjoint_for_variant(p, grid, spec.tv_variant)
    return w * float(total), w * du


def energy_fd_grad(spec: EnergySpec, u: Field, g: Field, op: ForwardOp):
    """Value and subgradient of the pixel objective."""
    _check_setup(spec, u.grid, g, op)
    return _energy_fd_grad_values(spec, u.values, u.grid, g.values, op)


def energy_nn(spec: EnergySpec, net: NetworkSpec, theta: np.ndarray,
              grid: Grid, g: Field, op: ForwardOp) -> float:
    """Objective value for a network, sampled at the grid nodes."""
    if spec.smoothing == "none":
        raise ValueError(
            "the network objective requires a smoothed TV term; "
            "unsmoothed norms are reserved for the pixel baseline"
        )
    _check_setup(spec, grid, g, op)
    values = forward(net, theta, grid.nodes()).reshape(grid.shape)
    total = _energy_of_values(spec, values, grid, g, op)
    if spec.alpha_theta > 0:
        total += spec.alpha_theta * float(np.abs(theta).max())
    return total


def energy_nn_loss(spec: EnergySpec, net: NetworkSpec, theta: np.ndarray,
                   grid: Grid, g: Field, op: ForwardOp, arena=None):
    """Objective value and its exact gradient with respect to theta.

    ``arena`` optionally recycles buffers between repeated evaluations of
    the same configuration (see :class:`deeptv.tape.Arena`).
    """
    if spec.smoothing == "none":
        raise ValueError(
            "the network objective requires a smoothed TV term; "
            "unsmoothed norms are reserved for the pixel baseline"
        )
    _check_setup(spec, grid, g, op)
    if arena is not None:
        arena.reset()
    tape = Tape(arena)
    theta_node = tape.parameter(theta)
    out = forward_on_tape(tape, net, theta_node, grid.nodes())
    u = tape.reshape(out, grid.shape)

    tu = tape.record(
        apply_values(op, u.value), (u,),
        lambda gr: (adjoint_values(op, gr),),
    )
    r = tape.record(tu.value - g.values, (tu,), lambda gr: (gr,))
    terms = [
        (grid.quad_weight * spec.alpha1, tape.sum_abs(r)),
        (grid.quad_weight * spec.alpha2, tape.sum_square(r)),
    ]
    if spec.lam > 0:
        gv = tape.record(
            gridops.gradient_for_variant(u.value, grid, spec.tv_variant), (u,),
            lambda gr: (gridops.gradient_adjoint_for_variant(gr, grid, spec.tv_variant),),
        )
        phi = gridops.tv_node_values(gv.value, spec.tv_variant, spec.smoothing, spec.gamma)
        dphi = gridops.tv_node_grad(gv.value, spec.tv_variant, spec.smoothing, spec.gamma)
        tv = tape.record(float(phi.sum()), (gv,), lambda gr: (gr * dphi,))
        terms.append((grid.quad_weight * spec.lam, tv))
    if spec.alpha_theta > 0:
        terms.append((spec.alpha_theta, tape.max_abs(theta_node)))
    loss = tape.affine_combine(terms)
    return float(loss.value), backward(tape)


def value_consistency(u_nn, u_fd: Field, spec: EnergySpec, g: Field,
                      op: ForwardOp, tol: float = 1e-10) -> bool:
    """Whether sampled-network values and a pixel field give equal energy.

    With identical node values the two parameterizations evaluate the same
    sum, so the energies must agree to roundoff.
    """
    values = u_nn.values if isinstance(u_nn, Field) else np.asarray(u_nn)
    nn_field = Field(values.reshape(u_fd.grid.shape), u_fd.grid)
    e_nn = energy_fd(spec, nn_field, g, op)
    e_fd = energy_fd(spec, u_fd, g, op)
    return abs(e_nn - e_fd) <= tol
