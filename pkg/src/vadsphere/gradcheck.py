"""Central finite-difference checks for every layer and the composed model.

Relative error per element is ``|analytic - numeric| / max(|analytic|,
|numeric|, GRAD_FLOOR * max(1, |loss|))``. The floor keeps entries whose true
gradient is zero (e.g. attention key biases) from turning the round-off of the
difference quotient, which grows with the loss magnitude, into a relative error.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from . import layers as L
from .losses import ccc_loss, combined_loss, inverse_frequency_weights, weighted_cross_entropy
from .model import ModelConfig, Pooling, init_model

STEP = 1e-5
GRAD_FLOOR = 1e-6
LAYER_TOL = 1e-4
MODEL_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    seed: int
    max_rel_err: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(self.max_rel_err < self.tol)


def rel_error(analytic, numeric, loss_scale=1.0) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    floor = GRAD_FLOOR * max(1.0, abs(loss_scale))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_grad(f: Callable[[], float], arr: np.ndarray, idx=None, step=STEP) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``arr`` (perturbed in place).

    With ``idx`` (a list of index tuples) only those entries are computed and
    the result is a flat array in that order.
    """
    points = list(np.ndindex(arr.shape)) if idx is None else idx
    out = np.empty(len(points))
    for k, i in enumerate(points):
        old = arr[i]
        arr[i] = old + step
        fp = f()
        arr[i] = old - step
        fm = f()
        arr[i] = old
        out[k] = (fp - fm) / (2.0 * step)
    return out.reshape(arr.shape) if idx is None else out


def _check(name, seed, forward, backward, inputs: Dict[str, np.ndarray], rng, tol=LAYER_TOL):
    """Check a layer via the scalar loss ``sum(forward(**inputs) * R)``."""
    out, cache = forward(**inputs)
    proj = rng.normal(size=out.shape)
    grads = backward(proj, cache)

    def f():
        return float(np.sum(forward(**inputs)[0] * proj))

    # round-off of the sum scales with the magnitude of its terms
    scale = float(np.abs(out * proj).sum())
    worst = 0.0
    for key, analytic in grads.items():
        worst = max(worst, rel_error(analytic, numeric_grad(f, inputs[key]), scale))
    return CheckResult(name, seed, worst, tol)


def _with_input_grad(backward, mapping):
    def wrapped(g, cache):
        gx, gp = backward(g, cache)
        out = {"x": gx}
        out.update({arg: gp[key] for arg, key in mapping.items()})
        return out
    return wrapped


def check_layers(seed: int, batch=2, steps=5, width=8, heads=2, kernel=5) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    b, t, c = batch, steps, width
    x = lambda *shape: rng.normal(size=shape)
    results = []

    results.append(_check(
        "layer_norm", seed,
        lambda x, gain, bias: L.layer_norm_forward(x, gain, bias),
        _with_input_grad(L.layer_norm_backward, {"gain": "gain", "bias": "bias"}),
        {"x": x(b, t, c), "gain": x(c), "bias": x(c)}, rng,
    ))
    results.append(_check(
        "spectral_fc", seed, L.spectral_fc_forward,
        _with_input_grad(L.spectral_fc_backward, {k: k for k in ("w1", "b1", "w2", "b2")}),
        {"x": x(b, t, c + 3), "w1": x(c + 3, c) * 0.5, "b1": x(c), "w2": x(c, c) * 0.5, "b2": x(c)}, rng,
    ))
    results.append(_check(
        "gated_conv", seed, L.gated_conv_forward,
        _with_input_grad(L.gated_conv_backward, {k: k for k in ("w1", "b1", "w2", "b2")}),
        {"x": x(b, t, c), "w1": x(kernel, c, 2 * c) * 0.3, "b1": x(2 * c),
         "w2": x(kernel, c, 2 * c) * 0.3, "b2": x(2 * c)}, rng,
    ))
    attn_keys = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")
    attn_inputs = {"x": x(b, t, c)}
    for k in attn_keys:
        attn_inputs[k] = x(c, c) * 0.5 if k.startswith("w") else x(c)
    results.append(_check(
        "mhsa", seed,
        lambda x, **p: L.mhsa_forward(x, heads, **p),
        _with_input_grad(L.mhsa_backward, {k: k for k in attn_keys}),
        attn_inputs, rng,
    ))
    results.append(_check(
        "temporal_average_pool", seed,
        lambda x: L.temporal_average_pool(x),
        lambda g, steps_: {"x": L.temporal_average_pool_backward(g, steps_)},
        {"x": x(b, t, c)}, rng,
    ))
    asp_keys = ("w1", "b1", "w2", "b2", "wo", "bo")
    results.append(_check(
        "attentive_stats_pool", seed, L.attentive_stats_pool,
        _with_input_grad(L.attentive_stats_pool_backward, {k: k for k in asp_keys}),
        {"x": x(b, t, c), "w1": x(c, c) * 0.5, "b1": x(c), "w2": x(c), "b2": x(1),
         "wo": x(2 * c, c) * 0.5, "bo": x(c)}, rng,
    ))
    results.append(_check(
        "linear_head", seed, L.linear_forward,
        lambda g, cache: dict(zip(("x", "weight", "bias"), L.linear_backward(g, cache))),
        {"x": x(b, c), "weight": x(c, 3), "bias": x(3)}, rng,
    ))

    # losses: gradient w.r.t. the network outputs they consume
    logits = x(6, 5)
    targets = rng.integers(0, 5, size=6)
    weights = inverse_frequency_weights(np.bincount(targets, minlength=5))
    wce = weighted_cross_entropy(logits, targets, weights)
    numeric = numeric_grad(lambda: weighted_cross_entropy(logits, targets, weights).value, logits)
    results.append(CheckResult(
        "weighted_cross_entropy", seed, rel_error(wce.grad, numeric, wce.value), LAYER_TOL
    ))

    pred, target = x(8, 3), x(8, 3)
    cl = ccc_loss(pred, target)
    numeric = numeric_grad(lambda: ccc_loss(pred, target).value, pred)
    results.append(CheckResult("ccc_loss", seed, rel_error(cl.grad, numeric, cl.value), LAYER_TOL))
    return results


def check_model(
    seed: int,
    pooling: Pooling = Pooling.STYLE,
    cfg: Optional[ModelConfig] = None,
    batch=4,
    steps=7,
    epoch=1,
    entries_per_tensor: Optional[int] = 12,
) -> CheckResult:
    """Combined-loss gradient of the whole network vs finite differences.

    ``entries_per_tensor`` limits the check to a seeded random subset of
    coordinates of each parameter tensor (None checks every coordinate).
    """
    cfg = cfg or ModelConfig(feat_dim=8, hidden_dim=16, n_heads=2, kernel_size=5,
                             n_regions=8, pooling=pooling, seed=seed)
    model = init_model(cfg)
    rng = np.random.default_rng(10_000 + seed)
    x = rng.normal(size=(batch, steps, cfg.feat_dim))
    vad = rng.uniform(-1.0, 1.0, size=(batch, 3))
    labels = rng.integers(0, cfg.n_regions, size=batch)
    weights = inverse_frequency_weights(np.bincount(labels, minlength=cfg.n_regions))

    def loss():
        out = model.forward(x)
        return combined_loss(
            ccc_loss(out.vad_pred, vad),
            weighted_cross_entropy(out.region_logits, labels, weights),
            epoch,
        )

    total = loss()
    grads = model.backward(total.grad_logits, total.grad_vad)
    worst = 0.0
    for name, param in model.params.items():
        all_idx = list(np.ndindex(param.shape))
        if entries_per_tensor is not None and len(all_idx) > entries_per_tensor:
            pick = rng.choice(len(all_idx), size=entries_per_tensor, replace=False)
            idx = [all_idx[i] for i in sorted(pick)]
        else:
            idx = all_idx
        numeric = numeric_grad(lambda: loss().value, param, idx)
        analytic = np.array([grads[name][i] for i in idx])
        worst = max(worst, rel_error(analytic, numeric, total.value))
    return CheckResult(f"model[{cfg.pooling.value}]", seed, worst, MODEL_TOL)


def run_suite(n_seeds: int = 20, cfg: Optional[ModelConfig] = None) -> List[CheckResult]:
    results = []
    for seed in range(n_seeds):
        results.extend(check_layers(seed))
        for pooling in Pooling:
            model_cfg = None
            if cfg is not None:
                model_cfg = ModelConfig(**{**cfg.to_dict(), "pooling": pooling, "seed": seed})
            results.append(check_model(seed, pooling, cfg=model_cfg))
    return results


def summarize(results: List[CheckResult]) -> Dict[str, CheckResult]:
    """Worst result per check name."""
    worst: Dict[str, CheckResult] = {}
    for r in results:
        if r.name not in worst or r.max_rel_err > worst[r.name].max_rel_err:
            worst[r.name] = r
    return worst
