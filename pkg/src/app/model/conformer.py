from typing import Tuple

import numpy as np

from src.app.errors import ShapeError
from src.app.nn import functional as F
from src.app.nn.attention import MultiHeadSelfAttention
from src.app.nn.layers import BatchNorm1d, DepthwiseConv1d, Dropout, LayerNorm, Linear, Module
from src.app.nn.tensor import Tensor
from src.app.schemas import ConformerConfig


class FeedForwardModule(Module):
    """Pre-norm feed-forward branch: LN -> Linear(D, eD) -> SiLU -> Dropout -> Linear(eD, D) -> Dropout.

    Returns the branch only; the block adds it back with a 0.5 or 1.0 residual weight.
    """

    def __init__(self, d_model: int, expansion: int, dropout: float, rng: np.random.Generator,
                 drop_rng: np.random.Generator) -> None:
        super().__init__()
        self.norm = LayerNorm(d_model)
        self.expand = Linear(d_model, expansion * d_model, rng)
        self.project = Linear(expansion * d_model, d_model, rng)
        self.drop_inner = Dropout(dropout, drop_rng)
        self.drop_out = Dropout(dropout, drop_rng)

    def forward(self, x: Tensor) -> Tensor:
        hidden = self.drop_inner(F.silu(self.expand(self.norm(x))))
        return self.drop_out(self.project(hidden))


class ConvolutionModule(Module):
    """Pre-norm convolution branch over the patch axis.

    LN -> pointwise (D -> cD) -> GLU (-> cD/2) -> depthwise conv -> BatchNorm -> SiLU
    -> pointwise (-> D) -> Dropout.
    """

    def __init__(self, d_model: int, kernel_size: int, expansion: int, dropout: float,
                 rng: np.random.Generator, drop_rng: np.random.Generator) -> None:
        super().__init__()
        if (expansion * d_model) % 2:
            raise ShapeError(f"GLU needs an even width, got {expansion} x {d_model}")
        inner = expansion * d_model // 2
        self.norm = LayerNorm(d_model)
        self.pointwise_in = Linear(d_model, expansion * d_model, rng)
        self.depthwise = DepthwiseConv1d(inner, kernel_size, rng)
        self.batch_norm = BatchNorm1d(inner)
        self.pointwise_out = Linear(inner, d_model, rng)
        self.drop = Dropout(dropout, drop_rng)

    def forward(self, x: Tensor) -> Tensor:
        h = F.glu(self.pointwise_in(self.norm(x)), axis=-1)
        h = F.silu(self.batch_norm(self.depthwise(h)))
        return self.drop(self.pointwise_out(h))


class ConformerBlock(Module):
    """FFN/2 -> MHSA -> Conv -> FFN/2 -> LayerNorm, each stage residual.

    ``use_half_ffn=False`` keeps a single full-weight FFN right after attention;
    ``use_conv_module=False`` drops the convolution stage. Both off gives a plain
    pre-norm Transformer block (with the closing LayerNorm).
    """

    def __init__(self, cfg: ConformerConfig, rng: np.random.Generator, drop_rng: np.random.Generator) -> None:
        super().__init__()
        d = cfg.d_model
        self.use_half_ffn = cfg.use_half_ffn
        self.use_conv_module = cfg.use_conv_module
        if cfg.use_half_ffn:
            self.ffn_in = FeedForwardModule(d, cfg.ffn_expansion, cfg.dropout, rng, drop_rng)
        self.attn_norm = LayerNorm(d)
        self.attention = MultiHeadSelfAttention(d, cfg.n_heads, cfg.pos_mode, rng)
        self.attn_drop = Dropout(cfg.dropout, drop_rng)
        if not cfg.use_half_ffn:
            self.ffn = FeedForwardModule(d, cfg.ffn_expansion, cfg.dropout, rng, drop_rng)
        if cfg.use_conv_module:
            self.conv = ConvolutionModule(d, cfg.dw_kernel, cfg.conv_expansion, cfg.dropout, rng, drop_rng)
        if cfg.use_half_ffn:
            self.ffn_out = FeedForwardModule(d, cfg.ffn_expansion, cfg.dropout, rng, drop_rng)
        self.final_norm = LayerNorm(d)

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        if self.use_half_ffn:
            x = x + 0.5 * self.ffn_in(x)
        attended, attn = self.attention(self.attn_norm(x))
        x = x + self.attn_drop(attended)
        if not self.use_half_ffn:
            x = x + self.ffn(x)
        if self.use_conv_module:
            x = x + self.conv(x)
        if self.use_half_ffn:
            x = x + 0.5 * self.ffn_out(x)
        return self.final_norm(x), attn


def ffn_param_count(d: int, expansion: int) -> int:
    return 2 * d + (d * expansion * d + expansion * d) + (expansion * d * d + d)


def attention_param_count(d: int, relative: bool) -> int:
    count = 4 * (d * d + d)
    if relative:
        count += d * d + 2 * d
    return count


def conv_param_count(d: int, kernel: int, expansion: int) -> int:
    inner = expansion * d // 2
    return 2 * d + (d * expansion * d + expansion * d) + (kernel * inner + inner) + 2 * inner + (inner * d + d)


def block_param_count(cfg: ConformerConfig) -> int:
    d = cfg.d_model
    ffn = ffn_param_count(d, cfg.ffn_expansion)
    count = (2 * ffn if cfg.use_half_ffn else ffn)
    count += 2 * d + attention_param_count(d, cfg.pos_mode == 'relative')
    if cfg.use_conv_module:
        count += conv_param_count(d, cfg.dw_kernel, cfg.conv_expansion)
    return count + 2 * d
