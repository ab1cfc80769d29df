"""First-order optimizers shared by all solvers.

Fixed iteration counts, no line search or early stopping; a non-finite
objective or gradient aborts with the partial trace attached.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import InvalidInputError, NumericalAbort

_ALGORITHMS = ("gd", "momentum", "adam")


@dataclasses.dataclass
class OptimConfig:
    algorithm: str = "adam"
    learning_rate: float = 0.01
    iterations: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = None
    log_every: int = 10

    def __post_init__(self):
        if self.algorithm not in _ALGORITHMS:
            raise InvalidInputError(f"algorithm must be one of {_ALGORITHMS}")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidInputError("beta1 and beta2 must be in [0, 1)")
        if not self.eps > 0:
            raise InvalidInputError("eps must be positive")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise InvalidInputError("grad_clip must be positive when set")
        if self.log_every < 1:
            raise InvalidInputError("log_every must be >= 1")


@dataclasses.dataclass
class OptimTrace:
    """Logged (iteration, objective, gradient norm) rows and final parameters."""

    iterations: list
    values: list
    grad_norms: list
    final_params: np.ndarray = None


def optimize(objective, x0, cfg: OptimConfig) -> OptimTrace:
    """Run exactly cfg.iterations steps of the chosen first-order method.

    ``objective(x) -> (value, gradient)`` must be deterministic in x.
    Logged values are pre-step.  Momentum uses beta1 as its coefficient.
    """
    x = np.array(x0, dtype=np.float64).copy()
    trace = OptimTrace([], [], [])
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    vel = np.zeros_like(x)

    for t in range(1, cfg.iterations + 1):
        # divergence is reported via NumericalAbort; the warnings that
        # precede it (overflow in exp/sin etc.) are just noise
        with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
            value, grad = objective(x)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != x.shape:
            raise InvalidInputError(
                f"gradient shape {grad.shape} does not match parameters {x.shape}"
            )
        gnorm = float(np.linalg.norm(grad))
        if not np.isfinite(value) or not np.isfinite(gnorm):
            trace.final_params = x
            raise NumericalAbort(
                f"non-finite objective or gradient at iteration {t}: "
                f"value={value!r}, grad_norm={gnorm!r}",
                trace,
            )
        if t == 1 or t % cfg.log_every == 0 or t == cfg.iterations:
            trace.iterations.append(t)
            trace.values.append(float(value))
            trace.grad_norms.append(gnorm)

        if cfg.grad_clip is not None and gnorm > cfg.grad_clip:
            grad = grad * (cfg.grad_clip / gnorm)

        if cfg.algorithm == "gd":
            x = x - cfg.learning_rate * grad
        elif cfg.algorithm == "momentum":
            vel = cfg.beta1 * vel + grad
            x = x - cfg.learning_rate * vel
        else:
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
            mhat = m / (1.0 - cfg.beta1**t)
            vhat = v / (1.0 - cfg.beta2**t)
            x = x - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)

    trace.final_params = x
    return trace
