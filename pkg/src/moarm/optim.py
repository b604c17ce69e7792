"""Optimizer stack: global-norm clipping, decoupled-weight-decay adaptive
moments with bias correction, parameter EMA, and plateau learning-rate decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class NonFiniteGradientError(RuntimeError):
    """Raised when a gradient contains NaN or infinity; the step is aborted."""


def global_norm(grads: dict[str, np.ndarray]) -> float:
    acc = 0.0
    for g in grads.values():
        acc += float(np.sum(g * g))
    return math.sqrt(acc)


def clip_global_norm(
    grads: dict[str, np.ndarray], max_norm: float, groups: tuple[str, ...] | None = None
) -> float:
    """Scale gradients in place so each group's global norm is at most max_norm.

    With the default single group this is ordinary global-norm clipping.
    Training clips the backbone and missingness-head families separately so
    one family's gradient magnitude cannot perturb the other's update.
    Returns the joint pre-clip norm.
    """
    names_by_group: dict[str, list[str]] = {}
    for name in grads:
        key = ""
        if groups:
            key = next((p for p in groups if name.startswith(p)), "")
        names_by_group.setdefault(key, []).append(name)
    total_sq = 0.0
    for names in names_by_group.values():
        norm = global_norm({k: grads[k] for k in names})
        if not math.isfinite(norm):
            bad = sorted(k for k in names if not np.all(np.isfinite(grads[k])))
            raise NonFiniteGradientError(f"non-finite gradient in {bad}")
        total_sq += norm * norm
        if max_norm > 0 and norm > max_norm:
            factor = max_norm / norm
            for k in names:
                grads[k] *= factor
    return math.sqrt(total_sq)


@dataclass
class OptimizerState:
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, params: dict[str, np.ndarray]) -> None:
        for k, p in params.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    clip_norm: float = 1.0,
    clip_groups: tuple[str, ...] | None = None,
) -> float:
    """Clip, then update parameters in place; returns the pre-clip norm.

    ``grads`` are gradients of a loss to minimize.
    """
    state.ensure(params)
    norm = clip_global_norm(grads, clip_norm, clip_groups)
    state.step += 1
    b1, b2 = state.betas
    for k, p in params.items():
        kernels.adamw_update(
            p, grads[k], state.m[k], state.v[k], state.step, state.lr, b1, b2, state.eps, state.weight_decay
        )
    return norm


@dataclass
class EmaState:
    shadow: dict[str, np.ndarray]
    decay: float

    @staticmethod
    def from_params(params: dict[str, np.ndarray], decay: float) -> "EmaState":
        if not 0.0 <= decay < 1.0:
            raise ValueError("EMA decay must be in [0, 1)")
        return EmaState({k: v.copy() for k, v in params.items()}, decay)

    def update(self, params: dict[str, np.ndarray]) -> None:
        d = self.decay
        for k, p in params.items():
            s = self.shadow[k]
            s *= d
            s += (1.0 - d) * p


@dataclass
class PlateauScheduler:
    """Multiply lr by ``factor`` after ``patience`` epochs without improvement."""

    factor: float = 0.9
    patience: int = 200
    min_lr: float = 1e-6
    best: float = math.inf
    bad_epochs: int = 0

    def step(self, loss: float, state: OptimizerState) -> None:
        if loss < self.best - 1e-12:
            self.best = loss
            self.bad_epochs = 0
            return
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            state.lr = max(state.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
