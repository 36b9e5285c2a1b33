from .config import ModelConfig
from .transformer import (
    SampleForward,
    count_block_macs,
    count_model_macs,
    decode,
    decoder_input,
    encode,
    encode_tokens,
    forward_sample,
    multi_head_attention,
    patch_embed,
    pos_embed,
    reconstruct,
    transformer_block,
)
from .weights import ModelWeights

__all__ = [
    "ModelConfig",
    "ModelWeights",
    "SampleForward",
    "patch_embed",
    "pos_embed",
    "multi_head_attention",
    "transformer_block",
    "encode_tokens",
    "encode",
    "decoder_input",
    "decode",
    "reconstruct",
    "forward_sample",
    "count_block_macs",
    "count_model_macs",
]
