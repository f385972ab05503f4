import logging
from typing import Literal, Tuple

import numpy as np

from src.app.errors import ShapeError
from src.app.nn import functional as F
from src.app.nn.layers import Linear, Module, Parameter, uniform_init
from src.app.nn.tensor import Tensor

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

PosMode = Literal['relative', 'fixed_sincos', 'none']


def sinusoid_encoding(positions: np.ndarray, dim: int) -> np.ndarray:
    """Sin/cos encodings of (possibly negative) positions, shape (len(positions), dim)."""
    positions = np.asarray(positions, dtype=np.float64)
    inv_freq = 1.0 / (10000 ** (np.arange(0, dim, 2) / dim))
    angles = positions[:, None] * inv_freq[None, :]
    encoding = np.zeros((len(positions), dim))
    encoding[:, 0::2] = np.sin(angles)
    encoding[:, 1::2] = np.cos(angles)[:, : dim // 2]
    return encoding


def relative_index(length: int) -> np.ndarray:
    """Row into the relative encoding table for every (query i, key j): i - j + length - 1."""
    i = np.arange(length)[:, None]
    j = np.arange(length)[None, :]
    return i - j + length - 1


class MultiHeadSelfAttention(Module):
    """Multi-head self-attention with a selectable positional scheme.

    ``relative``: content and position scores with global biases ``pos_bias_u`` /
    ``pos_bias_v`` and projected sinusoidal encodings of the query-key distance.
    ``fixed_sincos``: absolute sinusoidal encodings added to the input.
    ``none``: plain scaled dot-product attention.
    """

    def __init__(self, d_model: int, n_heads: int, pos_mode: PosMode, rng: np.random.Generator) -> None:
        super().__init__()
        if d_model % n_heads != 0:
            raise ShapeError(f"d_model {d_model} is not divisible by {n_heads} heads")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.pos_mode = pos_mode

        self.query = Linear(d_model, d_model, rng)
        self.key = Linear(d_model, d_model, rng)
        self.value = Linear(d_model, d_model, rng)
        self.output = Linear(d_model, d_model, rng)
        if pos_mode == 'relative':
            bound = 1.0 / np.sqrt(d_model)
            self.pos_proj = Linear(d_model, d_model, rng, bias=False)
            self.pos_bias_u = Parameter(uniform_init(rng, (d_model,), bound))
            self.pos_bias_v = Parameter(uniform_init(rng, (d_model,), bound))

    def _heads(self, x: Tensor, batch: int, length: int) -> Tensor:
        # (B, L, D) -> (B, H, L, d)
        return x.reshape(batch, length, self.n_heads, self.d_head).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        if x.ndim != 3 or x.shape[2] != self.d_model:
            raise ShapeError(f"attention expects (B, L, {self.d_model}), got {x.shape}")
        batch, length, _ = x.shape
        scale = 1.0 / np.sqrt(self.d_head)

        if self.pos_mode == 'fixed_sincos':
            x = x + Tensor(sinusoid_encoding(np.arange(length), self.d_model).astype(x.dtype))

        q = self.query(x)
        k = self._heads(self.key(x), batch, length)
        v = self._heads(self.value(x), batch, length)

        if self.pos_mode == 'relative':
            table = Tensor(sinusoid_encoding(np.arange(-(length - 1), length), self.d_model).astype(x.dtype))
            # (2L-1, D) -> (H, d, 2L-1)
            pos = self.pos_proj(table).reshape(2 * length - 1, self.n_heads, self.d_head).transpose(1, 2, 0)
            content = self._heads(q + self.pos_bias_u, batch, length) @ k.transpose(0, 1, 3, 2)
            by_distance = self._heads(q + self.pos_bias_v, batch, length) @ pos
            rows = np.arange(length)[:, None]
            position = by_distance[:, :, rows, relative_index(length)]
            scores = (content + position) * scale
        else:
            scores = (self._heads(q, batch, length) @ k.transpose(0, 1, 3, 2)) * scale

        attn = F.softmax(scores, axis=-1)
        context = (attn @ v).transpose(0, 2, 1, 3).reshape(batch, length, self.d_model)
        return self.output(context), attn
