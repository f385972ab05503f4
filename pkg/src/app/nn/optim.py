import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Set, Tuple

import numpy as np

from src.app.errors import NumericError
from src.app.nn.layers import Parameter

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@dataclass
class LrSchedule:
    warmup_epochs: int = 50
    lr_max: float = 6e-5
    lr_min: float = 1e-6
    total_epochs: int = 300


def cosine_warmup(epoch: int, sched: LrSchedule) -> float:
    """Linear warmup from 0 to ``lr_max``, then cosine decay to ``lr_min`` at ``total_epochs``."""
    if sched.warmup_epochs > 0 and epoch < sched.warmup_epochs:
        return sched.lr_max * epoch / sched.warmup_epochs
    span = max(sched.total_epochs - sched.warmup_epochs, 1)
    progress = min(max((epoch - sched.warmup_epochs) / span, 0.0), 1.0)
    return sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) * (1 + math.cos(math.pi * progress))


@dataclass
class AdamWState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamWState, lr: float,
               beta1: float = 0.85, beta2: float = 0.998, wd: float = 0.1, eps: float = 1e-8,
               decay: Optional[Set[str]] = None) -> Dict[str, np.ndarray]:
    """
    One AdamW update with decoupled weight decay.

    Weights listed in ``decay`` (all of them when None) are first scaled by
    ``1 - lr * wd``, then moved by the bias-corrected Adam direction.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient in parameter '{name}'")

    state.step += 1
    correction1 = 1 - beta1 ** state.step
    correction2 = 1 - beta2 ** state.step
    updated = {}
    for name, value in params.items():
        grad = grads[name]
        m = beta1 * state.m.get(name, np.zeros_like(value)) + (1 - beta1) * grad
        v = beta2 * state.v.get(name, np.zeros_like(value)) + (1 - beta2) * grad ** 2
        state.m[name], state.v[name] = m, v

        new = value
        if decay is None or name in decay:
            new = new * (1 - lr * wd)
        updated[name] = new - lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return updated


class AdamW:
    def __init__(self, named_params: Iterable[Tuple[str, Parameter]], beta1: float = 0.85, beta2: float = 0.998,
                 weight_decay: float = 0.1, eps: float = 1e-8,
                 decay_filter: Callable[[str, Parameter], bool] = lambda name, p: p.ndim >= 2) -> None:
        self.params = dict(named_params)
        self.beta1, self.beta2 = beta1, beta2
        self.weight_decay = weight_decay
        self.eps = eps
        self.decay = {name for name, p in self.params.items() if decay_filter(name, p)}
        self.state = AdamWState()

    def step(self, lr: float) -> None:
        values = {name: p.data for name, p in self.params.items()}
        grads = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in self.params.items()}
        updated = adamw_step(values, grads, self.state, lr, self.beta1, self.beta2,
                             self.weight_decay, self.eps, self.decay)
        for name, p in self.params.items():
            p.data = updated[name].astype(p.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
