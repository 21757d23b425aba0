"""AdamW with decoupled weight decay and linear learning-rate warmup."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError


@dataclass
class OptimizerState:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 100
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def effective_lr(self, step=None):
        step = self.step_count if step is None else step
        if self.warmup_steps <= 0:
            return self.learning_rate
        return self.learning_rate * min(1.0, step / self.warmup_steps)


def adamw_step(params, grads, state):
    """Apply one in-place AdamW update.

    ``params`` and ``grads`` are dicts keyed by parameter name (numpy arrays or
    :class:`Tensor` objects for ``params``). A missing gradient counts as zero.
    Returns ``(params, state)`` for convenience; both are mutated.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")

    lr = state.effective_lr()
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name in sorted(params):
        p = params[name]
        data = p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(data)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(data)
            v = state.second_moment[name] = np.zeros_like(data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if lr == 0.0:
            continue
        data -= lr * state.weight_decay * data
        data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    state.step_count = t
    return params, state
