"""Adam with bias correction over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    """First/second moment estimates per parameter, plus the step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @staticmethod
    def for_params(params: dict) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place update: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).

    Parameters are visited in sorted name order so accumulation is identical
    across runs. Raises on non-finite gradients, naming the offending tensor.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name in sorted(params):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient for {name!r} at step {t} "
                f"(min={np.nanmin(g)}, max={np.nanmax(g)})"
            )
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
