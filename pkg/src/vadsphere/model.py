"""Style pooling network with a region-classification head and a VAD head.

Pipeline per utterance batch (B, T, feat_dim)::

    LayerNorm -> 2x (FC + Mish) -> 2x gated conv block -> MHSA -> FC
    -> temporal average pooling (or attentive statistics pooling)
    -> region logits (B, N) and VAD regression (B, 3)
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import layers as L
from .errors import ConfigurationError, ShapeError, StateError

__all__ = ["Pooling", "ModelConfig", "ModelOutput", "Model", "init_model", "parameter_specs"]


class Pooling(Enum):
    STYLE = "style"
    ATTENTIVE_STATS = "attentive_stats"


@dataclass(frozen=True)
class ModelConfig:
    feat_dim: int = 16
    hidden_dim: int = 32
    n_heads: int = 2
    kernel_size: int = 5
    n_regions: int = 8
    pooling: Pooling = Pooling.STYLE
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.pooling, str):
            object.__setattr__(self, "pooling", Pooling(self.pooling))
        for name in ("feat_dim", "hidden_dim", "n_heads", "kernel_size", "n_regions"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.hidden_dim % self.n_heads:
            raise ConfigurationError(
                f"hidden_dim {self.hidden_dim} is not divisible by n_heads {self.n_heads}"
            )
        if self.kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel_size must be odd, got {self.kernel_size}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pooling"] = self.pooling.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def parameter_specs(cfg: ModelConfig) -> List[Tuple[str, Tuple[int, ...], int]]:
    """Ordered (name, shape, fan_in) for every parameter.

    This order is also the on-disk order of checkpoint parameters.
    """
    f, h, k, n = cfg.feat_dim, cfg.hidden_dim, cfg.kernel_size, cfg.n_regions
    specs = [
        ("ln.gain", (f,), f),
        ("ln.bias", (f,), f),
        ("fc1.weight", (f, h), f),
        ("fc1.bias", (h,), f),
        ("fc2.weight", (h, h), h),
        ("fc2.bias", (h,), h),
        ("conv1.weight", (k, h, 2 * h), k * h),
        ("conv1.bias", (2 * h,), k * h),
        ("conv2.weight", (k, h, 2 * h), k * h),
        ("conv2.bias", (2 * h,), k * h),
    ]
    for part in ("q", "k", "v", "out"):
        specs += [(f"attn.{part}.weight", (h, h), h), (f"attn.{part}.bias", (h,), h)]
    specs += [("proj.weight", (h, h), h), ("proj.bias", (h,), h)]
    if cfg.pooling is Pooling.ATTENTIVE_STATS:
        specs += [
            ("asp.score1.weight", (h, h), h),
            ("asp.score1.bias", (h,), h),
            ("asp.score2.weight", (h,), h),
            ("asp.score2.bias", (1,), h),
            ("asp.out.weight", (2 * h, h), 2 * h),
            ("asp.out.bias", (h,), 2 * h),
        ]
    specs += [
        ("region_head.weight", (h, n), h),
        ("region_head.bias", (n,), h),
        ("vad_head.weight", (h, 3), h),
        ("vad_head.bias", (3,), h),
    ]
    return specs


@dataclass
class ModelOutput:
    region_logits: np.ndarray
    vad_pred: np.ndarray
    pooled: np.ndarray


class Model:
    """Parameters plus the activation cache of the most recent forward pass.

    A single instance must not be trained from several threads at once.
    """

    def __init__(self, cfg: ModelConfig, params: Dict[str, np.ndarray]):
        expected = parameter_specs(cfg)
        if [name for name, _, _ in expected] != list(params):
            raise ConfigurationError("parameter names do not match the configuration")
        for name, shape, _ in expected:
            if params[name].shape != shape:
                raise ShapeError(f"{name}: expected {shape}, got {params[name].shape}")
        self.cfg = cfg
        self.params = params
        self._cache = None

    def copy(self) -> "Model":
        return Model(self.cfg, {k: v.copy() for k, v in self.params.items()})

    def forward(self, features) -> ModelOutput:
        p = self.params
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 3 or x.shape[-1] != self.cfg.feat_dim or x.shape[1] < 1:
            raise ShapeError(
                f"features shape {x.shape} does not match (B, T>=1, {self.cfg.feat_dim})"
            )
        caches = {}
        h, caches["ln"] = L.layer_norm_forward(x, p["ln.gain"], p["ln.bias"])
        h, caches["fc"] = L.spectral_fc_forward(
            h, p["fc1.weight"], p["fc1.bias"], p["fc2.weight"], p["fc2.bias"]
        )
        h, caches["conv"] = L.gated_conv_forward(
            h, p["conv1.weight"], p["conv1.bias"], p["conv2.weight"], p["conv2.bias"]
        )
        h, caches["attn"] = L.mhsa_forward(
            h, self.cfg.n_heads,
            p["attn.q.weight"], p["attn.q.bias"],
            p["attn.k.weight"], p["attn.k.bias"],
            p["attn.v.weight"], p["attn.v.bias"],
            p["attn.out.weight"], p["attn.out.bias"],
        )
        h, caches["proj"] = L.linear_forward(h, p["proj.weight"], p["proj.bias"])
        if self.cfg.pooling is Pooling.STYLE:
            pooled, caches["pool"] = L.temporal_average_pool(h)
        else:
            pooled, caches["pool"] = L.attentive_stats_pool(
                h,
                p["asp.score1.weight"], p["asp.score1.bias"],
                p["asp.score2.weight"], p["asp.score2.bias"],
                p["asp.out.weight"], p["asp.out.bias"],
            )
        logits, caches["region_head"] = L.linear_forward(
            pooled, p["region_head.weight"], p["region_head.bias"]
        )
        vad, caches["vad_head"] = L.linear_forward(pooled, p["vad_head.weight"], p["vad_head.bias"])
        self._cache = caches
        return ModelOutput(region_logits=logits, vad_pred=vad, pooled=pooled)

    def attention_weights(self) -> np.ndarray:
        """Attention matrices (B, heads, T, T) from the last forward pass."""
        if self._cache is None:
            raise StateError("no forward pass has been run")
        return self._cache["attn"][4]

    def backward(
        self, grad_logits: Optional[np.ndarray], grad_vad: Optional[np.ndarray]
    ) -> Dict[str, np.ndarray]:
        """Gradients of a scalar loss for every parameter, in parameter order.

        ``grad_logits`` / ``grad_vad`` are the loss gradients w.r.t. the two
        head outputs; ``None`` means zero.
        """
        if self._cache is None:
            raise StateError("backward called before forward")
        c = self._cache
        g: Dict[str, np.ndarray] = {}
        pooled_shape = c["vad_head"][0].shape
        gpool = np.zeros(pooled_shape)
        n_out = {"region_head": self.cfg.n_regions, "vad_head": 3}
        for head, upstream in (("region_head", grad_logits), ("vad_head", grad_vad)):
            if upstream is None:
                upstream = np.zeros((pooled_shape[0], n_out[head]))
            gx, gw, gb = L.linear_backward(np.asarray(upstream, dtype=np.float64), c[head])
            g[f"{head}.weight"], g[f"{head}.bias"] = gw, gb
            gpool += gx

        if self.cfg.pooling is Pooling.STYLE:
            gh = L.temporal_average_pool_backward(gpool, c["pool"])
        else:
            gh, ga = L.attentive_stats_pool_backward(gpool, c["pool"])
            g["asp.score1.weight"], g["asp.score1.bias"] = ga["w1"], ga["b1"]
            g["asp.score2.weight"], g["asp.score2.bias"] = ga["w2"], ga["b2"]
            g["asp.out.weight"], g["asp.out.bias"] = ga["wo"], ga["bo"]

        gh, g["proj.weight"], g["proj.bias"] = L.linear_backward(gh, c["proj"])
        gh, ga = L.mhsa_backward(gh, c["attn"])
        for part, key in (("q", "q"), ("k", "k"), ("v", "v"), ("out", "o")):
            g[f"attn.{part}.weight"], g[f"attn.{part}.bias"] = ga["w" + key], ga["b" + key]
        gh, ga = L.gated_conv_backward(gh, c["conv"])
        g["conv1.weight"], g["conv1.bias"] = ga["w1"], ga["b1"]
        g["conv2.weight"], g["conv2.bias"] = ga["w2"], ga["b2"]
        gh, ga = L.spectral_fc_backward(gh, c["fc"])
        g["fc1.weight"], g["fc1.bias"] = ga["w1"], ga["b1"]
        g["fc2.weight"], g["fc2.bias"] = ga["w2"], ga["b2"]
        _, ga = L.layer_norm_backward(gh, c["ln"])
        g["ln.gain"], g["ln.bias"] = ga["gain"], ga["bias"]
        return {name: g[name] for name in self.params}


def init_model(cfg: ModelConfig) -> Model:
    """Seeded fan-in uniform initialization; LayerNorm starts as identity."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape, fan_in in parameter_specs(cfg):
        if name == "ln.gain":
            params[name] = np.ones(shape)
        elif name == "ln.bias":
            params[name] = np.zeros(shape)
        else:
            bound = np.sqrt(1.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return Model(cfg, params)
