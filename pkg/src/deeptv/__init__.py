"""Mesh-free total-variation image reconstruction.

Minimizes the L1-L2-TV objective over bounded-weight ReLU networks with
exact reverse-mode gradients, next to a convex finite-difference
baseline, closed-form test problems, and an a posteriori error bound.
"""

from .analytic import (
    DiskParams,
    Step1DParams,
    disk_energy,
    disk_profile,
    disk_solution,
    error_estimate,
    step1d_energy,
    step1d_solution,
    step_profile,
)
from .energy import EnergySpec, energy_fd, energy_nn, energy_nn_loss, value_consistency
from .estimators import DeepTVReconstructor, FDReconstructor
from .grid import (
    Field,
    GradField,
    Grid,
    divergence,
    grad_fb,
    grad_forward,
    huber2,
    huber21,
    lift2,
    lift21,
    load_field,
    maxlift2,
    maxlift21,
    norm_21,
    save_field,
    tv_discrete,
)
from .imaging import (
    Image,
    add_gaussian_noise,
    add_salt_pepper,
    load_image,
    metrics,
    render_fine,
    sample_network,
    save_image,
)
from .network import NetworkSpec, clamp, forward, init_params, load_params, save_params
from .operators import (
    ForwardOp,
    Kernel,
    adjoint,
    apply,
    blur_op,
    gaussian_kernel,
    identity_op,
    mask_op,
)
from .optimize import DivergenceError, TrainConfig, TrainState, adam_step, solve_fd, train
from .tape import Tape, backward

__version__ = "0.1.0"

__all__ = [
    "DeepTVReconstructor",
    "DiskParams",
    "DivergenceError",
    "EnergySpec",
    "FDReconstructor",
    "Field",
    "ForwardOp",
    "GradField",
    "Grid",
    "Image",
    "Kernel",
    "NetworkSpec",
    "Step1DParams",
    "Tape",
    "TrainConfig",
    "TrainState",
    "adam_step",
    "add_gaussian_noise",
    "add_salt_pepper",
    "adjoint",
    "apply",
    "backward",
    "blur_op",
    "clamp",
    "disk_energy",
    "disk_profile",
    "disk_solution",
    "divergence",
    "energy_fd",
    "energy_nn",
    "energy_nn_loss",
    "error_estimate",
    "forward",
    "gaussian_kernel",
    "grad_fb",
    "grad_forward",
    "huber2",
    "huber21",
    "identity_op",
    "init_params",
    "lift2",
    "lift21",
    "load_field",
    "load_image",
    "load_params",
    "mask_op",
    "maxlift2",
    "maxlift21",
    "metrics",
    "norm_21",
    "render_fine",
    "sample_network",
    "save_field",
    "save_image",
    "save_params",
    "solve_fd",
    "step1d_energy",
    "step1d_solution",
    "step_profile",
    "train",
    "tv_discrete",
    "value_consistency",
]
