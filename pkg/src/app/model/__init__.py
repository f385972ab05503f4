from src.app.model.conformer import ConformerBlock, ConvolutionModule, FeedForwardModule, block_param_count
from src.app.model.hrvconformer import (
    ClassTokenHead,
    FcnHead,
    GlobalPoolHead,
    HRVConformer,
    ModelOutput,
    model_forward,
    model_param_count,
    patchify,
)
