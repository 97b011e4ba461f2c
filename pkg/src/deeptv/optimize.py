"""Projected Adam training with best-iterate tracking.

The loop is full batch and deterministic: every iteration evaluates the
objective and its gradient over all grid nodes, takes one bias-corrected
Adam step, projects the parameters back onto the weight-bound box, and
keeps the best parameters seen so far.  The same loop doubles as the
convex pixel-space solver used as an equivalence oracle.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergySpec, _energy_fd_grad_values, energy_nn_loss
from .grid import Field, Grid
from .network import NetworkSpec, clamp, init_params, save_params
from .operators import ForwardOp
from .tape import Arena


class DivergenceError(RuntimeError):
    """Raised when the objective or gradient stops being finite."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    iterations: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    c: float = math.inf
    log_every: int = 1000

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.log_every < 1:
            raise ValueError("log_every must be positive")


@dataclass
class TrainState:
    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    best_theta: np.ndarray | None = None
    best_loss: float = math.inf
    best_updates: int = 0
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @classmethod
    def fresh(cls, theta: np.ndarray) -> "TrainState":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(theta=theta, m=np.zeros_like(theta), v=np.zeros_like(theta))


def adam_step(state: TrainState, gradient: np.ndarray, config: TrainConfig) -> TrainState:
    """One bias-corrected Adam update followed by projection onto |.| <= c."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != state.theta.shape:
        raise ValueError("gradient shape does not match parameters")
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient", state.step)
    state.step += 1
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * g
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * g * g
    m_hat = state.m / (1.0 - config.beta1 ** state.step)
    v_hat = state.v / (1.0 - config.beta2 ** state.step)
    theta = state.theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    state.theta = clamp(theta, config.c)
    return state


class _HistoryWriter:
    """Streams (iteration, loss, best_loss, wall_ms) rows to a CSV."""

    def __init__(self, path):
        self._file = open(path, "w", newline="") if path else None
        self._writer = None
        self._t0 = time.perf_counter()
        if self._file:
            self._writer = csv.writer(self._file)
            self._writer.writerow(["iteration", "loss", "best_loss", "wall_ms"])

    def write(self, iteration: int, loss: float, best_loss: float):
        if self._writer:
            ms = (time.perf_counter() - self._t0) * 1e3
            self._writer.writerow([iteration, repr(loss), repr(best_loss), f"{ms:.3f}"])

    def close(self):
        if self._file:
            self._file.close()


def _run_adam(evaluate, theta0, config: TrainConfig, *, project: bool,
              history_path=None, checkpoint=None, on_best=None) -> TrainState:
    """Shared loop: evaluate at the start, then (step, evaluate) rounds."""
    # The pixel problem is unconstrained: same update rule, no box.
    step_config = config if project else TrainConfig(**{**config.__dict__, "c": math.inf})
    state = TrainState.fresh(theta0)
    writer = _HistoryWriter(history_path)
    try:
        loss, grad = evaluate(state.theta)
        iteration = 0
        while True:
            if not math.isfinite(loss):
                raise DivergenceError("non-finite loss", iteration)
            if loss < state.best_loss:
                state.best_loss = loss
                state.best_theta = state.theta.copy()
                state.best_updates += 1
                if on_best is not None:
                    on_best(state.best_updates, iteration, state.best_theta, loss)
            if iteration % config.log_every == 0 or iteration == config.iterations:
                state.history.append((iteration, loss, state.best_loss))
                writer.write(iteration, loss, state.best_loss)
                if checkpoint is not None:
                    checkpoint(state)
            if iteration == config.iterations:
                break
            adam_step(state, grad, step_config)
            loss, grad = evaluate(state.theta)
            iteration += 1
    finally:
        writer.close()
    return state


def train(net: NetworkSpec, spec: EnergySpec, grid: Grid, g: Field, op: ForwardOp,
          config: TrainConfig, *, history_path=None, checkpoint_path=None,
          on_best=None) -> TrainState:
    """Minimize the network objective; deterministic for a given seed.

    Runs ``config.iterations`` Adam steps (one initial evaluation plus one
    evaluation per step), keeping the parameters with the lowest loss.
    The iterate is projected after every step, so |theta|_inf <= c always.
    """
    if spec.alpha1 + spec.alpha2 <= 0:
        raise ValueError("a well-posed data term needs alpha1 + alpha2 > 0")
    theta0 = clamp(init_params(net, config.seed), config.c)
    arena = Arena()  # the loop re-evaluates one graph shape; recycle buffers

    def evaluate(theta):
        return energy_nn_loss(spec, net, theta, grid, g, op, arena=arena)

    checkpoint = None
    if checkpoint_path is not None:
        def checkpoint(state):
            if state.best_theta is not None:
                save_params(checkpoint_path, net, state.best_theta)

    return _run_adam(
        evaluate, theta0, config, project=True,
        history_path=history_path, checkpoint=checkpoint, on_best=on_best,
    )


def solve_fd(spec: EnergySpec, grid: Grid, g: Field, op: ForwardOp,
             config: TrainConfig, *, init: Field | None = None,
             history_path=None) -> Field:
    """Minimize the convex pixel objective with the same Adam loop.

    Nonsmooth terms use their canonical subgradients (0 on kinks and
    plateaus); the weight bound does not apply to pixel values.  The
    iteration warm-starts at the observation unless ``init`` is given.
    """
    u0 = (g if init is None else init).values.ravel().copy()

    def evaluate(u):
        value, du = _energy_fd_grad_values(spec, u.reshape(grid.shape), grid, g.values, op)
        return value, du.ravel()

    state = _run_adam(evaluate, u0, config, project=False, history_path=history_path)
    return Field(state.best_theta, grid)
