"""The trajectory-image + time-embedding sequence classifier.

Per timestep: CNN frame features and the projected cyclic time features are
concatenated, run through an LSTM, pooled by additive attention over the
hidden states, and classified by a two-layer MLP.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .ingest import TimeParts
from .temporal import (DEFAULT_COMPONENTS, DEFAULT_TIME_DIM, TimeProjectionParams,
                       allocate_dims, cyclic_encode_many, project, resolve_components)

DTYPES = {"F32": np.float32, "F64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    R: int = 64
    T: int = 60
    K: int = 2
    frame_dim: int = 64
    time_dim: int = DEFAULT_TIME_DIM
    lstm_hidden: int = 128
    attn_hidden: int = 64
    mlp_hidden: int = 64
    cnn_channels: tuple = (16, 32, 64)
    time_components: tuple = DEFAULT_COMPONENTS
    seed: int = 0
    precision: str = "F32"

    def __post_init__(self):
        for name in ("R", "T", "K", "frame_dim", "lstm_hidden", "attn_hidden", "mlp_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"ModelConfig.{name} must be positive")
        if self.precision not in DTYPES:
            raise ValueError(f"precision must be one of {sorted(DTYPES)}")
        if len(self.cnn_channels) != 3 or min(self.cnn_channels) <= 0:
            raise ValueError("cnn_channels needs three positive widths")
        resolve_components(self.time_components)
        if self.time_components:
            allocate_dims(self.time_dim, len(self.time_components))

    @property
    def dtype(self):
        return DTYPES[self.precision]

    @property
    def effective_time_dim(self) -> int:
        return self.time_dim if self.time_components else 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cnn_channels"] = list(self.cnn_channels)
        d["time_components"] = list(self.time_components)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["cnn_channels"] = tuple(d.get("cnn_channels", (16, 32, 64)))
        d["time_components"] = tuple(d.get("time_components", DEFAULT_COMPONENTS))
        return cls(**d)


@dataclass
class ForwardOutput:
    logits: Tensor        # (B, K)
    attention: Tensor     # (B, T)
    context: Tensor       # (B, H)
    hidden: Tensor        # (B, T, H)
    scores: np.ndarray    # (B, T) attention scores including b2


def init_params(cfg: ModelConfig) -> "OrderedDict[str, Tensor]":
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.dtype
    p: "OrderedDict[str, Tensor]" = OrderedDict()

    def uni(shape, bound):
        return Tensor(rng.uniform(-bound, bound, shape).astype(dt), requires_grad=True)

    def zeros(shape):
        return Tensor(np.zeros(shape, dtype=dt), requires_grad=True)

    c_in = 3
    for i, c_out in enumerate(cfg.cnn_channels, start=1):
        fan_in = c_in * 9
        p[f"cnn.conv{i}.weight"] = uni((c_out, c_in, 3, 3), math.sqrt(6.0 / fan_in))
        p[f"cnn.conv{i}.bias"] = zeros((c_out,))
        c_in = c_out
    p["cnn.proj.weight"] = uni((cfg.frame_dim, c_in), 1 / math.sqrt(c_in))
    p["cnn.proj.bias"] = zeros((cfg.frame_dim,))

    comps = resolve_components(cfg.time_components)
    tp = TimeProjectionParams.init(cfg.effective_time_dim, len(comps), rng, dt)
    for spec, W, b in zip(comps, tp.weights, tp.biases):
        p[f"time.{spec.attr}.weight"] = W
        p[f"time.{spec.attr}.bias"] = b

    H = cfg.lstm_hidden
    D = cfg.frame_dim + cfg.effective_time_dim
    p["lstm.weight"] = uni((D + H, 4 * H), 1 / math.sqrt(H))
    bias = np.zeros(4 * H, dtype=dt)
    bias[H:2 * H] = 1.0  # forget gate starts open
    p["lstm.bias"] = Tensor(bias, requires_grad=True)

    A = cfg.attn_hidden
    p["attn.W1"] = uni((A, H), 1 / math.sqrt(H))
    p["attn.b1"] = zeros((A,))
    p["attn.w2"] = uni((A,), 1 / math.sqrt(A))
    p["attn.b2"] = zeros(())

    M = cfg.mlp_hidden
    p["mlp.fc1.weight"] = uni((M, H), 1 / math.sqrt(H))
    p["mlp.fc1.bias"] = zeros((M,))
    p["mlp.fc2.weight"] = uni((cfg.K, M), 1 / math.sqrt(M))
    p["mlp.fc2.bias"] = zeros((cfg.K,))
    return p


class MarauderModel:
    def __init__(self, cfg: ModelConfig, params: Optional["OrderedDict[str, Tensor]"] = None):
        self.cfg = cfg
        self.components = resolve_components(cfg.time_components)
        self.params = init_params(cfg) if params is None else params
        expected = init_params_shapes(cfg)
        got = {k: v.shape for k, v in self.params.items()}
        if got != expected:
            raise ad.ShapeMismatch(f"parameter shapes do not match config: {sorted(set(got.items()) ^ set(expected.items()))[:4]}")

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def load_state(self, state) -> None:
        for k, v in state.items():
            self.params[k].data = np.array(v, dtype=self.cfg.dtype)

    @property
    def time_params(self) -> TimeProjectionParams:
        return TimeProjectionParams(
            [self.params[f"time.{c.attr}.weight"] for c in self.components],
            [self.params[f"time.{c.attr}.bias"] for c in self.components],
        )

    # -- pieces --------------------------------------------------------------
    def encode_frames(self, frames) -> Tensor:
        """(N, 3, R, R) frames -> (N, frame_dim) features."""
        p = self.params
        x = frames if isinstance(frames, Tensor) else Tensor(np.asarray(frames, dtype=self.cfg.dtype))
        if x.ndim == 3:
            x = ad.reshape(x, (1,) + x.shape)
        if x.shape[1:] != (3, self.cfg.R, self.cfg.R):
            raise ad.ShapeMismatch(f"frames {x.shape} do not match R={self.cfg.R}")
        for i in range(1, 4):
            x = ad.conv2d(x, p[f"cnn.conv{i}.weight"], p[f"cnn.conv{i}.bias"], stride=1, padding=1)
            x = ad.maxpool2d(ad.relu(x), 2)
        x = ad.mean(x, axis=(2, 3))
        return ad.linear(x, p["cnn.proj.weight"], p["cnn.proj.bias"])

    def encode_frame(self, frame) -> Tensor:
        return ad.reshape(self.encode_frames(frame), (self.cfg.frame_dim,))

    def time_features(self, parts_seq: Sequence[Sequence[TimeParts]]) -> np.ndarray:
        """(B, T, C, 2) cyclic features for B sequences of T timestamps."""
        B = len(parts_seq)
        T = len(parts_seq[0]) if B else 0
        flat = [tp for seq in parts_seq for tp in seq]
        return cyclic_encode_many(flat, self.components).reshape(B, T, len(self.components), 2)

    # -- full pass -------------------------------------------------------------
    def forward_batch(self, frames, frame_index: np.ndarray, time_feats: Optional[np.ndarray]) -> ForwardOutput:
        """Run B windows whose frames are given as unique frames plus an index.

        ``frames`` is (U, 3, R, R); ``frame_index`` (B, T) selects the frame
        shown at each timestep; ``time_feats`` is (B, T, C, 2).
        """
        cfg, p = self.cfg, self.params
        frame_index = np.asarray(frame_index, dtype=np.int64)
        B, T = frame_index.shape
        feats = self.encode_frames(frames)
        seq = ad.index(feats, frame_index)  # (B, T, F)
        if self.components:
            tf = np.asarray(time_feats, dtype=cfg.dtype)
            if tf.shape != (B, T, len(self.components), 2):
                raise ad.ShapeMismatch(f"time features {tf.shape} for batch {(B, T)}")
            seq = ad.concat([seq, project(Tensor(tf), self.time_params)], axis=-1)

        H = cfg.lstm_hidden
        h = Tensor(np.zeros((B, H), dtype=cfg.dtype))
        c = Tensor(np.zeros((B, H), dtype=cfg.dtype))
        hs = []
        for t in range(T):
            h, c = ad.lstm_cell(seq[:, t, :], h, c, p["lstm.weight"], p["lstm.bias"])
            hs.append(h)
        hidden = ad.stack(hs, axis=1)  # (B, T, H)

        # Scores use an elementwise product + row sum so identical rows give
        # bit-identical scores. b2 shifts every score equally and cancels in
        # the softmax, so it is left out of the normalised scores.
        a = ad.tanh(ad.linear(hidden, p["attn.W1"], p["attn.b1"]))
        u = ad.tsum(ad.mul(a, p["attn.w2"]), axis=-1)  # (B, T)
        alpha = ad.softmax(u, axis=-1)
        context = ad.tsum(ad.mul(hidden, ad.reshape(alpha, (B, T, 1))), axis=1)
        z = ad.relu(ad.linear(context, p["mlp.fc1.weight"], p["mlp.fc1.bias"]))
        logits = ad.linear(z, p["mlp.fc2.weight"], p["mlp.fc2.bias"])
        return ForwardOutput(logits, alpha, context, hidden, u.data + p["attn.b2"].data)

    def forward(self, frames, parts_seq: Sequence[TimeParts]) -> ForwardOutput:
        """Single window: frames (T, 3, R, R) and one TimeParts per frame."""
        frames = np.asarray(frames.data if isinstance(frames, Tensor) else frames)
        T = frames.shape[0]
        if len(parts_seq) != T:
            raise ad.ShapeMismatch(f"{T} frames but {len(parts_seq)} timestamps")
        tf = self.time_features([list(parts_seq)]) if self.components else None
        return self.forward_batch(frames, np.arange(T)[None, :], tf)


def init_params_shapes(cfg: ModelConfig) -> dict:
    c_in, shapes = 3, {}
    for i, c_out in enumerate(cfg.cnn_channels, start=1):
        shapes[f"cnn.conv{i}.weight"] = (c_out, c_in, 3, 3)
        shapes[f"cnn.conv{i}.bias"] = (c_out,)
        c_in = c_out
    shapes["cnn.proj.weight"] = (cfg.frame_dim, c_in)
    shapes["cnn.proj.bias"] = (cfg.frame_dim,)
    comps = resolve_components(cfg.time_components)
    for spec, dx in zip(comps, allocate_dims(cfg.effective_time_dim, len(comps))):
        shapes[f"time.{spec.attr}.weight"] = (dx, 2)
        shapes[f"time.{spec.attr}.bias"] = (dx,)
    H, A, M = cfg.lstm_hidden, cfg.attn_hidden, cfg.mlp_hidden
    shapes["lstm.weight"] = (cfg.frame_dim + cfg.effective_time_dim + H, 4 * H)
    shapes["lstm.bias"] = (4 * H,)
    shapes.update({"attn.W1": (A, H), "attn.b1": (A,), "attn.w2": (A,), "attn.b2": (),
                   "mlp.fc1.weight": (M, H), "mlp.fc1.bias": (M,),
                   "mlp.fc2.weight": (cfg.K, M), "mlp.fc2.bias": (cfg.K,)})
    return shapes
