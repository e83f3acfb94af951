"""Cross-modal transformer and prediction heads.

Per layer::

    x  = LN(SVCA(v, s, s) + v)      sketch-video cross-attention
    y  = LN(CSA(x, x, x) + x)       content self-attention
    v' = LN(FFN1(y) + y)
    p  = LN(TSA(r, r, r) + r)       token self-attention (object tokens as positions)
    q  = LN(CTCA(p, v', v') + p)    content-token cross-attention
    r' = LN(FFN2(q) + q)

The token stream starts at zero, so the first layer skips the TSA call: with a
zero value stream it contributes an exact zero.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .attention import AttentionWeights, multi_head_attention, positional_encoding
from .encoders import PatchEmbed, encode_sketch, encode_video, grid_code
from .errors import ConfigError, ShapeError
from .rng import PARAMS, make_rng
from .tensor import Tensor


@dataclass
class ModelConfig:
    frames: int = 32
    slots: int = 10
    width: int = 32
    heads: int = 8
    layers: int = 2
    patch: int = 8
    image_size: int = 32
    ffn_mult: int = 4
    dropout: float = 0.0

    @property
    def num_tokens(self) -> int:
        return self.frames * self.slots

    @property
    def grid(self) -> int:
        return (self.image_size // self.patch) ** 2

    def validate(self) -> "ModelConfig":
        if min(self.frames, self.slots, self.width, self.heads, self.patch, self.image_size) <= 0:
            raise ConfigError("model sizes must be positive")
        if self.width % self.heads:
            raise ConfigError(f"width {self.width} is not divisible by {self.heads} heads")
        if self.width % 4:
            raise ConfigError("width must be divisible by 4 for the sinusoidal codes")
        if self.image_size % self.patch:
            raise ConfigError(f"image size {self.image_size} not divisible by patch {self.patch}")
        if not 1 <= self.layers <= 4:
            raise ConfigError("layers must be between 1 and 4")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PredictionSet:
    boxes: Tensor   # (..., L, M, 4) cxcywh in [0, 1]
    scores: Tensor  # (..., L, M) in (0, 1)


@dataclass
class FFN:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __call__(self, x: Tensor, dropout: float = 0.0, rng=None) -> Tensor:
        h = T.relu(x @ self.w1 + self.b1)
        h = T.dropout(h, dropout, rng)
        return h @ self.w2 + self.b2


@dataclass
class LayerNormParams:
    gain: Tensor
    bias: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, 1e-5)


@dataclass
class CmtLayerParams:
    svca: AttentionWeights
    csa: AttentionWeights
    tsa: AttentionWeights
    ctca: AttentionWeights
    ffn1: FFN
    ffn2: FFN
    ln: dict[str, LayerNormParams]

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for op in ("svca", "csa", "tsa", "ctca"):
            for k, t in getattr(self, op).tensors().items():
                yield f"{prefix}.{op}.{k}", t
        for f in ("ffn1", "ffn2"):
            for k, t in asdict_shallow(getattr(self, f)).items():
                yield f"{prefix}.{f}.{k}", t
        for k, ln in self.ln.items():
            yield f"{prefix}.ln_{k}.gain", ln.gain
            yield f"{prefix}.ln_{k}.bias", ln.bias


def asdict_shallow(obj) -> dict:
    return {k: getattr(obj, k) for k in obj.__dataclass_fields__}


LN_NAMES = ("svca", "csa", "ffn1", "tsa", "ctca", "ffn2")


# ------------------------------------------------------------- attention ops

def svca_attention(v: Tensor, s: Tensor, w: AttentionWeights, pos_v) -> Tensor:
    """Content rows query the sketch; ``s`` is ``(..., 1, C)`` with no key encoding."""
    return multi_head_attention(v, s, s, pos_v, None, w)


def csa_attention(x: Tensor, w: AttentionWeights, pos_v) -> Tensor:
    return multi_head_attention(x, x, x, pos_v, pos_v, w)


def tsa_attention(r: Tensor, tkn: Tensor, w: AttentionWeights) -> Tensor:
    """Self-attention over the token stream with object tokens on query and key."""
    return multi_head_attention(r, r, r, tkn, tkn, w)


def ctca_attention(p: Tensor, v_next: Tensor, tkn: Tensor, w: AttentionWeights, pos_v) -> Tensor:
    return multi_head_attention(p, v_next, v_next, tkn, pos_v, w)


def cmt_layer(v: Tensor, s: Tensor, r: Tensor, tkn: Tensor, params: CmtLayerParams,
              layer_index: int, pos_v, skip_tsa: bool | None = None,
              dropout: float = 0.0, rng=None) -> tuple[Tensor, Tensor]:
    """One transformer layer over the content stream ``v`` and token stream ``r``.

    ``skip_tsa`` defaults to skipping exactly when ``layer_index == 0`` and ``r``
    is all zeros.
    """
    if v.shape[-1] != params.svca.width or r.shape[-1] != params.svca.width:
        raise ShapeError(f"stream widths {v.shape[-1]}/{r.shape[-1]} vs layer width {params.svca.width}")
    ln = params.ln

    def drop(t):
        return T.dropout(t, dropout, rng)

    x = ln["svca"](drop(svca_attention(v, s, params.svca, pos_v)) + v)
    y = ln["csa"](drop(csa_attention(x, params.csa, pos_v)) + x)
    v_next = ln["ffn1"](drop(params.ffn1(y, dropout, rng)) + y)
    if skip_tsa is None:
        skip_tsa = layer_index == 0 and not np.any(r.data)
    if skip_tsa:
        p = ln["tsa"](r)
    else:
        p = ln["tsa"](drop(tsa_attention(r, tkn, params.tsa)) + r)
    q = ln["ctca"](drop(ctca_attention(p, v_next, tkn, params.ctca, pos_v)) + p)
    r_next = ln["ffn2"](drop(params.ffn2(q, dropout, rng)) + q)
    return v_next, r_next


# ------------------------------------------------------------------ model

def _uniform(rng, shape, fan_in) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def _init_ffn(rng, c, hidden) -> FFN:
    return FFN(_uniform(rng, (c, hidden), c), _uniform(rng, (hidden,), c),
               _uniform(rng, (hidden, c), hidden), _uniform(rng, (c,), hidden))


def _init_layer(rng, cfg: ModelConfig) -> CmtLayerParams:
    c = cfg.width
    att = [AttentionWeights.init(c, cfg.heads, rng) for _ in range(4)]
    ln = {k: LayerNormParams(Tensor(np.ones(c), requires_grad=True),
                             Tensor(np.zeros(c), requires_grad=True)) for k in LN_NAMES}
    return CmtLayerParams(*att, _init_ffn(rng, c, cfg.ffn_mult * c),
                          _init_ffn(rng, c, cfg.ffn_mult * c), ln)


class Model:
    """Encoders, ``layers`` CMT layers and the box/score heads.

    Parameters are reachable by canonical names through :meth:`parameters`;
    those names are the keys used in checkpoints.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg.validate()
        rng = make_rng(seed, PARAMS)
        c = cfg.width
        self.video_embed = PatchEmbed.init(cfg.patch, c, rng)
        self.sketch_embed = PatchEmbed.init(cfg.patch, c, rng)
        self.tokens = Tensor(rng.uniform(-1.0, 1.0, (cfg.num_tokens, c)), requires_grad=True)
        self.layers = [_init_layer(rng, cfg) for _ in range(cfg.layers)]
        self.box_w = _uniform(rng, (c, 4), c)
        self.box_b = _uniform(rng, (4,), c)
        self.score_w = _uniform(rng, (c, 1), c)
        self.score_b = _uniform(rng, (1,), c)

    def parameters(self) -> dict[str, Tensor]:
        out = {
            "enc.video.weight": self.video_embed.weight,
            "enc.video.bias": self.video_embed.bias,
            "enc.sketch.weight": self.sketch_embed.weight,
            "enc.sketch.bias": self.sketch_embed.bias,
            "cmt.tokens": self.tokens,
        }
        for i, layer in enumerate(self.layers):
            out.update(layer.named(f"cmt.layer{i}"))
        out.update({
            "head.box.weight": self.box_w,
            "head.box.bias": self.box_b,
            "head.score.weight": self.score_w,
            "head.score.bias": self.score_b,
        })
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.parameters().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise ConfigError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for k, t in params.items():
            if arrays[k].shape != t.shape:
                raise ConfigError(f"{k}: checkpoint shape {arrays[k].shape} vs model {t.shape}")
            t.data = np.array(arrays[k], dtype=np.float64)

    def zero_grad(self) -> None:
        for t in self.parameters().values():
            t.grad = None

    def content_positions(self) -> Tensor:
        return positional_encoding(self.cfg.frames * self.cfg.grid, self.cfg.width)

    def encode(self, frames, sketch) -> tuple[Tensor, Tensor]:
        cfg = self.cfg
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim < 3 or frames.shape[-3] != cfg.frames:
            raise ShapeError(f"expected {cfg.frames} frames, got shape {frames.shape}")
        fv = encode_video(frames, self.video_embed)
        fv = fv + grid_code(frames.shape[-1] // cfg.patch, cfg.width)
        *lead, l, hw, c = fv.shape
        v = fv.reshape(*lead, l * hw, c)
        s = encode_sketch(sketch, self.sketch_embed)
        s = s.reshape(*s.shape[:-1], 1, c)
        return v, s

    def forward(self, frames, sketch, rng=None, skip_first_tsa: bool | None = None) -> PredictionSet:
        """Predict ``L x M`` boxes and scores; slot ``j`` of frame ``i`` is token ``i*M + j``."""
        cfg = self.cfg
        v, s = self.encode(frames, sketch)
        lead = v.shape[:-2]
        pos_v = self.content_positions()
        r = Tensor(np.zeros(lead + (cfg.num_tokens, cfg.width)))
        for i, layer in enumerate(self.layers):
            skip = skip_first_tsa if i == 0 else False
            v, r = cmt_layer(v, s, r, self.tokens, layer, i, pos_v, skip_tsa=skip,
                             dropout=cfg.dropout, rng=rng)
        boxes = T.sigmoid(r @ self.box_w + self.box_b)
        scores = T.sigmoid(r @ self.score_w + self.score_b)
        return PredictionSet(boxes.reshape(*lead, cfg.frames, cfg.slots, 4),
                             scores.reshape(*lead, cfg.frames, cfg.slots))
