"""Toy ViT-style encoder with deterministic random weights.

The stack is a linear patch embedding followed by pre-norm transformer
blocks (norm -> attention -> residual; norm -> MLP -> residual) with
rotary position factors applied per head to queries and keys only, then
a merge stage that concatenates each merge cell's member tokens and
projects them through a two-layer MLP.

Three forward paths share one implementation:

- encode_dense: all N grid tokens.
- encode_packed: only retained tokens, each rotated by its original grid
  coordinate, so attention among survivors is position-faithful.
- encode_masked_dense_oracle: all N tokens, but attention logits to
  dropped keys forced to -inf; retained rows of the result are the
  reference against which the packed path is checked.

Weights are untrained: the mechanism under test (positional alignment,
packed/dense agreement, cost) does not depend on trained values, and
reproducible random weights make every comparison exact. All math runs
in float64 with a fixed summation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import FormatError, ValidationError
from .kvtext import parse_float, parse_int, parse_kv, require_keys
from .packing import PackedSequence
from .rope2d import RopeTable, apply_rope_many
from .saliency import PatchMask

_LN_EPS = 1e-5
_CONFIG_KEYS = [
    "patch_size", "channels", "d_model", "n_layers", "n_heads",
    "mlp_ratio", "merge_size", "d_out", "seed",
]


@dataclass(frozen=True)
class EncoderConfig:
    patch_size: int
    channels: int
    d_model: int
    n_layers: int
    n_heads: int
    mlp_ratio: float
    merge_size: int
    d_out: int
    seed: int

    def __post_init__(self):
        if self.patch_size < 1 or self.channels < 1:
            raise ValidationError("patch_size and channels must be >= 1")
        if self.d_model % 4 != 0:
            raise ValidationError(f"d_model must be divisible by 4, got {self.d_model}")
        if self.n_heads < 1 or self.d_model % self.n_heads != 0:
            raise ValidationError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if (self.d_model // self.n_heads) % 4 != 0:
            raise ValidationError(
                "head dimension must be divisible by 4 for per-head rotation"
            )
        if self.n_layers < 0:
            raise ValidationError("n_layers must be >= 0")
        if self.mlp_ratio <= 0:
            raise ValidationError("mlp_ratio must be > 0")
        if self.merge_size < 1:
            raise ValidationError("merge_size must be >= 1")
        if self.d_out < 1:
            raise ValidationError("d_out must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def mlp_hidden(self) -> int:
        return max(1, int(round(self.d_model * self.mlp_ratio)))

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def merge_dim(self) -> int:
        return self.d_model * self.merge_size * self.merge_size


def load_encoder_config(text: str) -> EncoderConfig:
    kv = parse_kv(text)
    require_keys(kv, _CONFIG_KEYS, "encoder config")
    extra = set(kv) - set(_CONFIG_KEYS)
    if extra:
        raise FormatError(f"encoder config: unknown keys {sorted(extra)}")
    return EncoderConfig(
        patch_size=parse_int(kv, "patch_size"),
        channels=parse_int(kv, "channels"),
        d_model=parse_int(kv, "d_model"),
        n_layers=parse_int(kv, "n_layers"),
        n_heads=parse_int(kv, "n_heads"),
        mlp_ratio=parse_float(kv, "mlp_ratio"),
        merge_size=parse_int(kv, "merge_size"),
        d_out=parse_int(kv, "d_out"),
        seed=parse_int(kv, "seed"),
    )


@dataclass(frozen=True, eq=False)
class LayerWeights:
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    w_up: np.ndarray
    b_up: np.ndarray
    w_down: np.ndarray
    b_down: np.ndarray


@dataclass(frozen=True, eq=False)
class EncoderWeights:
    w_embed: np.ndarray
    b_embed: np.ndarray
    layers: tuple[LayerWeights, ...]
    w_merge1: np.ndarray
    b_merge1: np.ndarray
    w_merge2: np.ndarray
    b_merge2: np.ndarray


def init_weights(config: EncoderConfig) -> EncoderWeights:
    """Draw every parameter from numpy's PCG64 stream for config.seed.

    The generator is ``np.random.Generator(np.random.PCG64(seed))`` and
    parameters are drawn as standard normals in this fixed order:

      1. w_embed (patch_dim, d_model), scaled 1/sqrt(patch_dim)
      2. b_embed (d_model,), scaled 0.02
      3. per layer: ln1_gamma = 1 + 0.02 z, ln1_beta = 0.02 z,
         wq, wk, wv, wo (d, d) scaled 1/sqrt(d),
         ln2_gamma = 1 + 0.02 z, ln2_beta = 0.02 z,
         w_up (d, h) scaled 1/sqrt(d), b_up (h,) scaled 0.02,
         w_down (h, d) scaled 1/sqrt(h), b_down (d,) scaled 0.02
      4. w_merge1 (merge_dim, merge_dim) scaled 1/sqrt(merge_dim),
         b_merge1 scaled 0.02, w_merge2 (merge_dim, d_out) scaled
         1/sqrt(merge_dim), b_merge2 scaled 0.02

    Same seed gives bit-identical weights on any platform.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    d = config.d_model
    h = config.mlp_hidden

    def normal(*shape, scale):
        return rng.standard_normal(shape) * scale

    w_embed = normal(config.patch_dim, d, scale=1.0 / np.sqrt(config.patch_dim))
    b_embed = normal(d, scale=0.02)
    layers = []
    for _ in range(config.n_layers):
        layers.append(LayerWeights(
            ln1_gamma=1.0 + normal(d, scale=0.02),
            ln1_beta=normal(d, scale=0.02),
            wq=normal(d, d, scale=1.0 / np.sqrt(d)),
            wk=normal(d, d, scale=1.0 / np.sqrt(d)),
            wv=normal(d, d, scale=1.0 / np.sqrt(d)),
            wo=normal(d, d, scale=1.0 / np.sqrt(d)),
            ln2_gamma=1.0 + normal(d, scale=0.02),
            ln2_beta=normal(d, scale=0.02),
            w_up=normal(d, h, scale=1.0 / np.sqrt(d)),
            b_up=normal(h, scale=0.02),
            w_down=normal(h, d, scale=1.0 / np.sqrt(h)),
            b_down=normal(d, scale=0.02),
        ))
    md = config.merge_dim
    return EncoderWeights(
        w_embed=w_embed,
        b_embed=b_embed,
        layers=tuple(layers),
        w_merge1=normal(md, md, scale=1.0 / np.sqrt(md)),
        b_merge1=normal(md, scale=0.02),
        w_merge2=normal(md, config.d_out, scale=1.0 / np.sqrt(md)),
        b_merge2=normal(config.d_out, scale=0.02),
    )


@dataclass(frozen=True, eq=False)
class TokenFeatures:
    tokens: np.ndarray  # (n, d_model)
    positions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.tokens.shape[0] != len(self.positions):
            raise ValidationError("one position per token row required")


@dataclass(frozen=True, eq=False)
class ProjectedTokens:
    tokens: np.ndarray  # (n_merged, d_out)
    cells: tuple[tuple[int, int], ...]


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """Cut an (H, W, C) raster into N x (p*p*C) rows in raster order.

    N = floor(H/p) * floor(W/p); each row is its p x p x C block
    flattened row-major with channels last. Trailing pixels beyond the
    last full patch are dropped.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValidationError("image must have shape (H, W) or (H, W, C)")
    p = patch_size
    height, width, channels = img.shape
    if height < p or width < p:
        raise ValidationError(f"image {width}x{height} smaller than one {p}x{p} patch")
    rows = height // p
    cols = width // p
    cropped = img[: rows * p, : cols * p, :]
    blocks = cropped.reshape(rows, p, cols, p, channels)
    return blocks.transpose(0, 2, 1, 3, 4).reshape(rows * cols, p * p * channels)


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * gamma + beta


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(
    patches: np.ndarray,
    positions: tuple[tuple[int, int], ...],
    rope: RopeTable,
    weights: EncoderWeights,
    config: EncoderConfig,
    key_keep: np.ndarray | None = None,
) -> np.ndarray:
    n = patches.shape[0]
    if patches.shape[1] != weights.w_embed.shape[0]:
        raise ValidationError(
            f"patch dim {patches.shape[1]} != embedding input {weights.w_embed.shape[0]}"
        )
    if rope.d != config.head_dim:
        raise ValidationError(
            f"rotary table dimension {rope.d} != head dimension {config.head_dim}"
        )
    h = patches @ weights.w_embed + weights.b_embed
    if n == 0:
        return h
    nh, dh = config.n_heads, config.head_dim
    scale = 1.0 / np.sqrt(dh)
    for lw in weights.layers:
        a = _layer_norm(h, lw.ln1_gamma, lw.ln1_beta)
        q = (a @ lw.wq).reshape(n, nh, dh)
        k = (a @ lw.wk).reshape(n, nh, dh)
        v = (a @ lw.wv).reshape(n, nh, dh)
        q = apply_rope_many(rope, positions, q)
        k = apply_rope_many(rope, positions, k)
        # (heads, n_q, n_k)
        logits = np.einsum("qhd,khd->hqk", q, k) * scale
        if key_keep is not None:
            logits[:, :, ~key_keep] = -np.inf
        attn = _softmax(logits)
        mixed = np.einsum("hqk,khd->qhd", attn, v).reshape(n, nh * dh)
        h = h + mixed @ lw.wo
        a2 = _layer_norm(h, lw.ln2_gamma, lw.ln2_beta)
        h = h + _gelu(a2 @ lw.w_up + lw.b_up) @ lw.w_down + lw.b_down
    return h


def _grid_positions(rows: int, cols: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, j) for i in range(rows) for j in range(cols))


def encode_dense(
    patches: np.ndarray,
    rope: RopeTable,
    weights: EncoderWeights,
    config: EncoderConfig,
) -> TokenFeatures:
    """Run the full stack over every grid token."""
    seq = np.asarray(patches, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] != rope.rows * rope.cols:
        raise ValidationError(
            f"expected {rope.rows * rope.cols} patch rows for a "
            f"{rope.rows}x{rope.cols} grid"
        )
    positions = _grid_positions(rope.rows, rope.cols)
    return TokenFeatures(_forward(seq, positions, rope, weights, config), positions)


def encode_packed(
    packed: PackedSequence,
    rope: RopeTable,
    weights: EncoderWeights,
    config: EncoderConfig,
) -> TokenFeatures:
    """Run the stack over retained tokens only.

    Each token's rotary factors come from its original grid coordinate,
    not its index in the shortened sequence.
    """
    if packed.origin_grid != (rope.rows, rope.cols):
        raise ValidationError(
            f"packed grid {packed.origin_grid} != rope extent "
            f"{(rope.rows, rope.cols)}"
        )
    return TokenFeatures(
        _forward(packed.tokens, packed.kept, rope, weights, config), packed.kept
    )


def encode_masked_dense_oracle(
    patches: np.ndarray,
    rope: RopeTable,
    mask: PatchMask,
    weights: EncoderWeights,
    config: EncoderConfig,
) -> TokenFeatures:
    """Reference path: keep all tokens, exclude dropped keys from attention.

    Logits from any query to a dropped key are set to -inf before the
    softmax, so dropped tokens cannot leak into retained rows; after the
    full stack only the retained rows are returned, in raster order.
    """
    seq = np.asarray(patches, dtype=np.float64)
    if (mask.rows, mask.cols) != (rope.rows, rope.cols):
        raise ValidationError("mask grid does not match rope extent")
    if seq.ndim != 2 or seq.shape[0] != mask.rows * mask.cols:
        raise ValidationError("patch count does not match mask grid")
    keep = mask.bits.ravel().astype(bool)
    if not keep.any():
        empty = np.zeros((0, config.d_model), dtype=np.float64)
        return TokenFeatures(empty, ())
    positions = _grid_positions(mask.rows, mask.cols)
    full = _forward(seq, positions, rope, weights, config, key_keep=keep)
    kept_positions = tuple(p for p, k in zip(positions, keep) if k)
    return TokenFeatures(full[keep], kept_positions)


def merge_project(
    features: TokenFeatures,
    config: EncoderConfig,
    weights: EncoderWeights,
) -> ProjectedTokens:
    """Concatenate each complete merge cell and project through the MLP.

    Positions are grouped into merge_size x merge_size cells; members are
    concatenated in raster order and passed through
    merge_dim -> merge_dim (gelu) -> d_out. A cell with only some of its
    members present means a patch-granularity mask was combined with
    merge_size > 1 and is rejected.
    """
    m = config.merge_size
    groups: dict[tuple[int, int], list[int]] = {}
    for idx, (i, j) in enumerate(features.positions):
        groups.setdefault((i // m, j // m), []).append(idx)

    cells = sorted(groups)
    member_count = m * m
    gathered = np.zeros((len(cells), member_count, config.d_model), dtype=np.float64)
    for c, cell in enumerate(cells):
        members = groups[cell]
        if len(members) != member_count:
            raise ValidationError(
                f"merge cell {cell} has {len(members)} of {member_count} members; "
                f"mask granularity must match merge_size {m}"
            )
        members.sort(key=lambda idx: features.positions[idx])
        gathered[c] = features.tokens[members]

    flat = gathered.reshape(len(cells), config.merge_dim)
    hidden = _gelu(flat @ weights.w_merge1 + weights.b_merge1)
    out = hidden @ weights.w_merge2 + weights.b_merge2
    return ProjectedTokens(out, tuple(cells))
