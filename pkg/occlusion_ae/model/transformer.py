"""
The occlusion auto-encoder network.

Encoder: PointNet-style patch embedding + position MLP on the visible patches,
pre-norm Transformer blocks, final LayerNorm, linear map C_e -> C_d.
Decoder: encoded visible tokens and copies of one shared occlusion token
placed at their patch indices, plus a second position MLP, then pre-norm
blocks at C_d. Each decoded C_d = 3K row reshapes to one K x 3 patch.
"""
from dataclasses import dataclass
from typing import Dict, Union

import numpy as np

from ..framework.errors import NumericError, ShapeError
from ..geometry import OcclusionMask, PatchSet, occlusion_count
from ..tensor import Tensor, ops
from .config import ModelConfig
from .weights import ModelWeights

ArrayOrTensor = Union[np.ndarray, Tensor]


def _as_input(values: ArrayOrTensor, dtype) -> Tensor:
    if isinstance(values, Tensor):
        return values
    return Tensor(np.asarray(values, dtype=dtype))


def _shape(values: ArrayOrTensor):
    return values.shape if isinstance(values, Tensor) else np.shape(values)


def _mlp(x: Tensor, weights: ModelWeights, prefix: str) -> Tensor:
    """fc1 -> GELU -> fc2 (fc2 bias only when registered)"""
    hidden = ops.gelu(ops.linear(x, weights[f"{prefix}.fc1.weight"], weights[f"{prefix}.fc1.bias"]))
    bias_name = f"{prefix}.fc2.bias"
    bias = weights[bias_name] if bias_name in weights else None
    return ops.linear(hidden, weights[f"{prefix}.fc2.weight"], bias)


def patch_embed(patches: ArrayOrTensor, weights: ModelWeights) -> Tensor:
    """(P, K, 3) centralized patches -> (P, C_e): shared per-point MLP, max over points"""
    dtype = weights["patch_embed.fc1.weight"].dtype
    x = _as_input(patches, dtype)
    if x.values.ndim != 3 or x.shape[2] != 3:
        raise ShapeError("patch_embed", x.shape, detail="expected (P, K, 3)")
    if not np.all(np.isfinite(x.values)):
        raise NumericError("patch_embed: non-finite patch coordinates")
    count, size, _ = x.shape
    per_point = _mlp(ops.reshape(x, (count * size, 3)), weights, "patch_embed")
    channels = per_point.shape[1]
    pooled, _ = ops.max_reduce(ops.reshape(per_point, (count, size, channels)), axis=1)
    return pooled


def pos_embed(seeds: ArrayOrTensor, weights: ModelWeights, prefix: str) -> Tensor:
    """(P, 3) seed coordinates -> (P, out_channel) through the `prefix` position MLP"""
    x = _as_input(seeds, weights[f"{prefix}.fc1.weight"].dtype)
    if x.values.ndim != 2 or x.shape[1] != 3:
        raise ShapeError("pos_embed", x.shape, detail="expected (P, 3)")
    return _mlp(x, weights, prefix)


def multi_head_attention(x: Tensor, weights: ModelWeights, prefix: str, heads: int) -> Tensor:
    """softmax(Q_i K_i^T / sqrt(d)) V_i per head, concatenated, then the output map"""
    channels = x.shape[1]
    if channels % heads:
        raise ShapeError("multi_head_attention", x.shape, detail=f"{heads} heads do not divide {channels}")
    inv_sqrt_d = 1.0 / np.sqrt(channels // heads)
    outputs = []
    for h in range(heads):
        q = ops.matmul(x, weights[f"{prefix}.query.{h}"])
        k = ops.matmul(x, weights[f"{prefix}.key.{h}"])
        v = ops.matmul(x, weights[f"{prefix}.value.{h}"])
        attn = ops.softmax(ops.scale(ops.matmul(q, ops.transpose(k)), inv_sqrt_d))
        outputs.append(ops.matmul(attn, v))
    merged = outputs[0] if heads == 1 else ops.concat(outputs, axis=1)
    return ops.matmul(merged, weights[f"{prefix}.out.weight"])


def transformer_block(x: Tensor, weights: ModelWeights, prefix: str, config: ModelConfig) -> Tensor:
    """Pre-norm block: x + MHA(LN(x)), then h + FFN(LN(h))"""
    eps = config.layer_norm_eps
    normed = ops.layer_norm(x, weights[f"{prefix}.norm1.weight"], weights[f"{prefix}.norm1.bias"], eps)
    h = ops.add(x, multi_head_attention(normed, weights, f"{prefix}.attn", config.heads))
    normed = ops.layer_norm(h, weights[f"{prefix}.norm2.weight"], weights[f"{prefix}.norm2.bias"], eps)
    hidden = ops.gelu(ops.linear(normed, weights[f"{prefix}.mlp.fc1.weight"], weights[f"{prefix}.mlp.fc1.bias"]))
    ffn = ops.linear(hidden, weights[f"{prefix}.mlp.fc2.weight"], weights[f"{prefix}.mlp.fc2.bias"])
    return ops.add(h, ffn)


def encode_tokens(visible_patches: ArrayOrTensor, visible_seeds: ArrayOrTensor,
                  weights: ModelWeights, config: ModelConfig) -> Tensor:
    """Encoder tokens at C_e after the final LayerNorm, before the C_e -> C_d map"""
    shape = _shape(visible_patches)
    if len(shape) == 0 or shape[0] == 0:
        raise ShapeError("encode", shape, detail="no visible patches")
    x = ops.add(pos_embed(visible_seeds, weights, "encoder_pos"), patch_embed(visible_patches, weights))
    for i in range(config.encoder_depth):
        x = transformer_block(x, weights, f"encoder.blocks.{i}", config)
    return ops.layer_norm(x, weights["encoder.norm.weight"], weights["encoder.norm.bias"],
                          config.layer_norm_eps)


def encode(visible_patches: ArrayOrTensor, visible_seeds: ArrayOrTensor,
           weights: ModelWeights, config: ModelConfig) -> Tensor:
    """(V, K, 3) visible patches and (V, 3) seeds -> (V, C_d)"""
    tokens = encode_tokens(visible_patches, visible_seeds, weights, config)
    return ops.linear(tokens, weights["proj.weight"], weights["proj.bias"])


def decoder_input(encoded_visible: Tensor, mask: OcclusionMask, weights: ModelWeights) -> Tensor:
    """
    Length-G token sequence in patch-index order: encoded tokens at visible
    indices, the shared occlusion token at occluded indices.
    """
    visible_count = len(mask.visible)
    if encoded_visible.shape[0] != visible_count:
        raise ShapeError("decode", encoded_visible.shape, (visible_count,),
                         detail="one encoded token per visible patch")
    token = weights["occlusion_token"]
    parts = [encoded_visible]
    if mask.num_occluded:
        row = ops.reshape(token, (1, token.shape[0]))
        parts.append(ops.gather_rows(row, np.zeros(mask.num_occluded, dtype=np.int64)))
    stacked = parts[0] if len(parts) == 1 else ops.concat(parts, axis=0)

    order = np.empty(mask.groups, dtype=np.int64)
    order[mask.visible] = np.arange(visible_count)
    order[mask.occluded] = visible_count + np.arange(mask.num_occluded)
    return ops.gather_rows(stacked, order)


def decode(encoded_visible: Tensor, mask: OcclusionMask, all_seeds: ArrayOrTensor,
           weights: ModelWeights, config: ModelConfig) -> Tensor:
    """(V, C_d) encoded tokens -> (G, C_d) decoded tokens for every patch"""
    seeds_shape = _shape(all_seeds)
    if seeds_shape[0] != mask.groups:
        raise ShapeError("decode", seeds_shape, (mask.groups,), detail="mask and seeds disagree on G")
    x = ops.add(decoder_input(encoded_visible, mask, weights), pos_embed(all_seeds, weights, "decoder_pos"))
    for i in range(config.decoder_depth):
        x = transformer_block(x, weights, f"decoder.blocks.{i}", config)
    return x


def reconstruct(decoded: Tensor, mask: OcclusionMask, all_seeds: np.ndarray,
                patch_size: int, centralize: bool = True) -> Tensor:
    """Occluded rows reshaped to K x 3 patches, moved back onto their seeds: (R*K, 3)"""
    if decoded.values.ndim != 2 or decoded.shape[1] != 3 * patch_size:
        raise ShapeError("reconstruct", decoded.shape, detail=f"decoder channel must be 3 * {patch_size}")
    if mask.num_occluded == 0:
        raise ShapeError("reconstruct", decoded.shape, detail="no occluded patches to reconstruct")
    rows = ops.gather_rows(decoded, mask.occluded)
    points = ops.reshape(rows, (mask.num_occluded * patch_size, 3))
    if not centralize:
        return points
    offsets = np.repeat(np.asarray(all_seeds)[mask.occluded], patch_size, axis=0)
    return ops.add(points, ops.const(offsets.astype(points.dtype)))


@dataclass
class SampleForward:
    """Intermediate results of one sample's forward pass"""
    encoded: Tensor
    decoded: Tensor
    predicted: Tensor


def forward_sample(patchset: PatchSet, mask: OcclusionMask, weights: ModelWeights,
                   config: ModelConfig) -> SampleForward:
    """Encode the visible patches, decode all G and reconstruct the occluded ones"""
    dtype = config.np_dtype
    visible = mask.visible
    encoded = encode(patchset.patches[visible].astype(dtype), patchset.seeds[visible].astype(dtype),
                     weights, config)
    decoded = decode(encoded, mask, patchset.seeds.astype(dtype), weights, config)
    predicted = reconstruct(decoded, mask, patchset.seeds, config.patch_size, config.centralize)
    return SampleForward(encoded=encoded, decoded=decoded, predicted=predicted)


def count_block_macs(tokens: int, channels: int, heads: int, mlp_ratio: float) -> int:
    """Multiply-adds of one pre-norm block over `tokens` tokens at `channels`"""
    head_dim = channels // heads
    hidden = int(round(mlp_ratio * channels))
    projections = 3 * tokens * channels * channels
    attention = heads * 2 * tokens * tokens * head_dim
    output = tokens * channels * channels
    ffn = 2 * tokens * channels * hidden
    return projections + attention + output + ffn


def count_model_macs(config: ModelConfig, ratio: float) -> Dict[str, int]:
    """Block multiply-adds of encoder (visible tokens, C_e) and decoder (all tokens, C_d)"""
    visible = config.groups - occlusion_count(config.groups, ratio)
    encoder = config.encoder_depth * count_block_macs(visible, config.encoder_dim, config.heads, config.mlp_ratio)
    decoder = config.decoder_depth * count_block_macs(config.groups, config.decoder_dim, config.heads,
                                                      config.mlp_ratio)
    return {"encoder_blocks": encoder, "decoder_blocks": decoder}
