import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np

from src.app.nn.layers import Module, has_active_dropout
from src.app.nn.tensor import Tensor, no_grad

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def gradcheck(f: Callable[..., Tensor], x: Union[Tensor, Sequence[Tensor]], eps: float = 1e-5,
              floor: float = 1e-8, module: Optional[Module] = None) -> float:
    """
    Largest relative error between reverse-mode and central-difference gradients.

    ``f`` receives the inputs and returns a scalar Tensor; every coordinate of every
    input is perturbed by +-eps. The relative error of a coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, floor). Returns nan when
    ``module`` has active dropout, since the loss is then not a function of the inputs alone.
    """
    inputs = [x] if isinstance(x, Tensor) else list(x)
    if module is not None and has_active_dropout(module):
        logger.warning("Dropout is active; gradient check skipped")
        return float('nan')

    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    out = f(*inputs)
    out.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    worst = 0.0
    with no_grad():
        for t, grad in zip(inputs, analytic):
            for idx in np.ndindex(*t.shape):
                original = t.data[idx]
                t.data[idx] = original + eps
                plus = float(f(*inputs).data)
                t.data[idx] = original - eps
                minus = float(f(*inputs).data)
                t.data[idx] = original
                numeric = (plus - minus) / (2 * eps)
                error = abs(grad[idx] - numeric) / max(abs(grad[idx]), abs(numeric), floor)
                worst = max(worst, error)
    return worst
