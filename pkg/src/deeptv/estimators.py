"""Scikit-learn style estimators wrapping the two solvers.

``DeepTVReconstructor`` fits a bounded-weight ReLU network to one
observation by minimizing the reconstruction energy; being mesh-free,
the fitted model can then be evaluated at arbitrary coordinates.
``FDReconstructor`` solves the same convex objective directly in pixel
space.  Both expose ``get_params``/``set_params`` so they compose with
pipelines, grid search, and ``sklearn.base.clone``.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .energy import EnergySpec
from .grid import Field, Grid
from .imaging import Image, render_fine, sample_network
from .network import NetworkSpec, forward
from .operators import ForwardOp, identity_op
from .optimize import TrainConfig, solve_fd, train


def _as_observation(X) -> np.ndarray:
    """Validate one observation: a finite 1-d signal or 2-d image."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.size == 0:
        raise ValueError("expected a nonempty 1-d signal or 2-d image")
    if not np.all(np.isfinite(arr)):
        raise ValueError("observation contains non-finite values")
    return arr


def _default_grid(arr: np.ndarray, bc: str) -> Grid:
    if arr.ndim == 1:
        return Grid.interval(0.0, 1.0, arr.shape[0], bc)
    return Grid(((0.0, 1.0), (0.0, 1.0)), arr.shape, bc)


class _EnergyParamsMixin:
    def _energy_spec(self) -> EnergySpec:
        return EnergySpec(
            alpha1=self.alpha1,
            alpha2=self.alpha2,
            lam=self.lam,
            tv_variant=self.tv_variant,
            smoothing=self.smoothing,
            gamma=self.gamma,
            bc=self.bc,
            c=getattr(self, "weight_bound", math.inf),
            alpha_theta=getattr(self, "alpha_theta", 0.0),
        )

    def _resolve(self, X, grid, operator):
        arr = _as_observation(X)
        grid = grid if grid is not None else _default_grid(arr, self.bc)
        if tuple(grid.shape) != arr.shape:
            raise ValueError(f"grid shape {grid.shape} != data shape {arr.shape}")
        op = operator if operator is not None else identity_op()
        return Field(arr, grid), grid, op


class DeepTVReconstructor(BaseEstimator, _EnergyParamsMixin):
    """Unsupervised L1-L2-TV reconstruction with a ReLU network.

    Parameters mirror the energy (alpha1, alpha2, lam, TV choices), the
    architecture (hidden_widths), the weight bound, and the Adam loop.
    ``fit`` takes the corrupted observation; the forward operator
    defaults to the identity (denoising).
    """

    def __init__(self, alpha1=10.0, alpha2=30.0, lam=1.0, tv_variant="tv2",
                 smoothing="lift", gamma=1e-10, bc="neumann",
                 weight_bound=1e4, alpha_theta=0.0, hidden_widths=(128, 128, 128),
                 learning_rate=1e-3, iterations=1000, beta1=0.9, beta2=0.999,
                 eps=1e-8, seed=0, log_every=1000):
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.lam = lam
        self.tv_variant = tv_variant
        self.smoothing = smoothing
        self.gamma = gamma
        self.bc = bc
        self.weight_bound = weight_bound
        self.alpha_theta = alpha_theta
        self.hidden_widths = hidden_widths
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.seed = seed
        self.log_every = log_every

    def fit(self, X, y=None, *, grid: Grid | None = None,
            operator: ForwardOp | None = None):
        """Train the network on one observation."""
        g, grid, op = self._resolve(X, grid, operator)
        net = NetworkSpec(input_dim=grid.dim, hidden_widths=tuple(self.hidden_widths))
        config = TrainConfig(
            learning_rate=self.learning_rate, iterations=self.iterations,
            beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            seed=self.seed, c=self.weight_bound, log_every=self.log_every,
        )
        state = train(net, self._energy_spec(), grid, g, op, config)
        self.network_ = net
        self.grid_ = grid
        self.theta_ = state.best_theta
        self.best_loss_ = state.best_loss
        self.history_ = state.history
        self.reconstruction_ = sample_network(net, state.best_theta, grid)
        return self

    def _check_fitted(self):
        if not hasattr(self, "theta_"):
            raise NotFittedError("call fit before using the reconstructor")

    def predict(self, X) -> np.ndarray:
        """Evaluate the fitted network at coordinates of shape (n, dim)."""
        self._check_fitted()
        return forward(self.network_, self.theta_, X)

    def transform(self, X=None) -> np.ndarray:
        """Reconstruction sampled on the training grid (X is ignored)."""
        self._check_fitted()
        return self.reconstruction_.values

    def render(self, factor: int = 1) -> Image:
        """Mesh-free rendering on a factor-times denser lattice."""
        self._check_fitted()
        return render_fine(self.network_, self.theta_, self.grid_, factor)


class FDReconstructor(BaseEstimator, _EnergyParamsMixin):
    """Convex pixel-space baseline minimizing the same objective."""

    def __init__(self, alpha1=10.0, alpha2=30.0, lam=1.0, tv_variant="tv2",
                 smoothing="none", gamma=1e-10, bc="neumann",
                 learning_rate=1e-2, iterations=2000, beta1=0.9, beta2=0.999,
                 eps=1e-8, seed=0, log_every=1000):
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.lam = lam
        self.tv_variant = tv_variant
        self.smoothing = smoothing
        self.gamma = gamma
        self.bc = bc
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.seed = seed
        self.log_every = log_every

    def fit(self, X, y=None, *, grid: Grid | None = None,
            operator: ForwardOp | None = None):
        g, grid, op = self._resolve(X, grid, operator)
        config = TrainConfig(
            learning_rate=self.learning_rate, iterations=self.iterations,
            beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            seed=self.seed, log_every=self.log_every,
        )
        self.grid_ = grid
        self.field_ = solve_fd(self._energy_spec(), grid, g, op, config)
        return self

    def transform(self, X=None) -> np.ndarray:
        if not hasattr(self, "field_"):
            raise NotFittedError("call fit before using the reconstructor")
        return self.field_.values
