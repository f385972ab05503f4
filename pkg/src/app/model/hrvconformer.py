import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from src.app.errors import ShapeError
from src.app.model.conformer import ConformerBlock, block_param_count
from src.app.nn import functional as F
from src.app.nn.layers import Conv1d, Linear, Module, ModuleList, Parameter
from src.app.nn.tensor import Tensor, concat
from src.app.schemas import ConformerConfig

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    logits: Tensor
    attn_maps: np.ndarray  # (n_layers, B, H, L', L')

    def probabilities(self) -> np.ndarray:
        shifted = self.logits.data - self.logits.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


def patchify(values: np.ndarray, cfg: ConformerConfig) -> np.ndarray:
    """Cut windows (..., window_samples) into (..., L, patch_samples) contiguous patches."""
    values = np.asarray(values)
    window = values.shape[-1]
    if window % cfg.patch_samples != 0:
        raise ShapeError(f"window of {window} samples is not divisible by patch of {cfg.patch_samples}")
    return values.reshape(*values.shape[:-1], window // cfg.patch_samples, cfg.patch_samples)


# ------------------- HEADS -------------------

class FcnHead(Module):
    """Convolutions over the embedding axis with patches as channels; no dense layer."""

    def __init__(self, n_tokens: int, cfg: ConformerConfig, rng: np.random.Generator) -> None:
        super().__init__()
        if n_tokens < 2:
            raise ShapeError(f"fcn head needs at least 2 patches, got {n_tokens}")
        if cfg.d_model < cfg.fcn_pool:
            raise ShapeError(f"d_model {cfg.d_model} is smaller than the pooling size {cfg.fcn_pool}")
        self.pool = cfg.fcn_pool
        self.conv_in = Conv1d(n_tokens, cfg.fcn_channels, cfg.fcn_kernel, rng)
        self.conv_out = Conv1d(cfg.fcn_channels, cfg.n_classes, cfg.fcn_kernel, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv_out(self.conv_in(x))
        return F.global_avg_pool(F.avg_pool1d(h, self.pool, self.pool), axis=-1)


class ClassTokenHead(Module):
    def __init__(self, cfg: ConformerConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.proj = Linear(cfg.d_model, cfg.n_classes, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.proj(x[:, 0, :])


class GlobalPoolHead(Module):
    def __init__(self, cfg: ConformerConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.proj = Linear(cfg.d_model, cfg.n_classes, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.proj(x.mean(axis=1))


# ------------------- MODEL -------------------

class HRVConformer(Module):
    def __init__(self, cfg: ConformerConfig, seed: int = 7) -> None:
        super().__init__()
        self.cfg = cfg
        init_seq, drop_seq = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(init_seq)
        drop_rng = np.random.default_rng(drop_seq)

        self.embed = Linear(cfg.patch_samples, cfg.d_model, rng)
        if cfg.head == 'class_token':
            self.cls_token = Parameter(rng.normal(0.0, 0.02, size=cfg.d_model))
        self.blocks = ModuleList(ConformerBlock(cfg, rng, drop_rng) for _ in range(cfg.n_layers))
        if cfg.head == 'fcn':
            self.head = FcnHead(cfg.n_tokens, cfg, rng)
        elif cfg.head == 'class_token':
            self.head = ClassTokenHead(cfg, rng)
        else:
            self.head = GlobalPoolHead(cfg, rng)

        logger.info(
            f"Built HRVConformer: {cfg.n_layers} blocks, d_model={cfg.d_model}, heads={cfg.n_heads}, "
            f"patches={cfg.n_patches}x{cfg.patch_samples}, pos={cfg.pos_mode}, head={cfg.head}, "
            f"{self.num_parameters()} parameters"
        )

    def _as_batch(self, x: Union[np.ndarray, Tensor]) -> np.ndarray:
        values = x.data if isinstance(x, Tensor) else np.asarray(x)
        if values.ndim == 1:
            values = values[None, :]
        if values.shape[-1] != self.cfg.window_samples:
            raise ShapeError(f"expected windows of {self.cfg.window_samples} samples, got {values.shape}")
        dtype = self.embed.weight.dtype
        return values.astype(dtype, copy=False)

    def embed_patches(self, x: Union[np.ndarray, Tensor]) -> Tensor:
        values = self._as_batch(x)
        tokens = self.embed(Tensor(patchify(values, self.cfg)))
        if self.cfg.head == 'class_token':
            batch = values.shape[0]
            cls = self.cls_token.reshape(1, 1, self.cfg.d_model) + Tensor(np.zeros((batch, 1, self.cfg.d_model), dtype=values.dtype))
            tokens = concat([cls, tokens], axis=1)
        return tokens

    def encode(self, x: Union[np.ndarray, Tensor]) -> Tuple[Tensor, List[Tensor]]:
        h = self.embed_patches(x)
        maps = []
        for block in self.blocks:
            h, attn = block(h)
            maps.append(attn)
        return h, maps

    def classify(self, h: Tensor) -> Tensor:
        return self.head(h)

    def forward(self, x: Union[np.ndarray, Tensor]) -> ModelOutput:
        h, maps = self.encode(x)
        return ModelOutput(logits=self.classify(h), attn_maps=np.stack([m.data for m in maps]))


def head_param_count(cfg: ConformerConfig) -> int:
    if cfg.head == 'fcn':
        c, n, k = cfg.fcn_channels, cfg.n_classes, cfg.fcn_kernel
        return cfg.n_tokens * c * k + c + c * n * k + n
    return cfg.d_model * cfg.n_classes + cfg.n_classes


def model_param_count(cfg: ConformerConfig) -> int:
    count = cfg.patch_samples * cfg.d_model + cfg.d_model
    if cfg.head == 'class_token':
        count += cfg.d_model
    return count + cfg.n_layers * block_param_count(cfg) + head_param_count(cfg)


def model_forward(windows: Sequence, model: HRVConformer) -> ModelOutput:
    """Forward a list of HrWindow objects (or raw arrays) as one batch."""
    values = np.stack([np.asarray(getattr(w, 'values', w)) for w in windows])
    return model(values)
