from src.app.nn.tensor import Tensor, concat, no_grad
from src.app.nn.layers import (
    BatchNorm1d,
    Conv1d,
    DepthwiseConv1d,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    Parameter,
)
from src.app.nn.attention import MultiHeadSelfAttention, sinusoid_encoding
from src.app.nn.optim import AdamW, AdamWState, LrSchedule, adamw_step, cosine_warmup
from src.app.nn.gradcheck import gradcheck
from src.app.nn.checkpoint import load_checkpoint, save_checkpoint
