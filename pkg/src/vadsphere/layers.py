"""Forward/backward pairs for the layers of the style pooling network.

Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
takes ``(grad_out, cache)`` and returns ``(grad_in, grads)`` where ``grads``
maps the parameter keys used by the forward call to their gradients. All
arrays are float64 with batch-major layout (B, T, C).
"""

import numpy as np

from . import _kernels

LN_EPS = 1e-5
ASP_VAR_EPS = 1e-10


# -- affine -----------------------------------------------------------------


def linear_forward(x, weight, bias):
    return x @ weight + bias, (x, weight)


def linear_backward(grad_out, cache):
    """Returns (grad_x, grad_weight, grad_bias); works for any leading dims."""
    x, weight = cache
    return _linear_grads(grad_out, x, weight)


def _linear_grads(grad_out, x, weight):
    flat_x = x.reshape(-1, x.shape[-1])
    flat_g = grad_out.reshape(-1, grad_out.shape[-1])
    return grad_out @ weight.T, flat_x.T @ flat_g, flat_g.sum(axis=0)


# -- nonlinearities ---------------------------------------------------------


def mish(x):
    return x * np.tanh(np.logaddexp(0.0, x))


def mish_grad(x):
    t = np.tanh(np.logaddexp(0.0, x))
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return t + x * (1.0 - t * t) * sig


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x, axis=-1):
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def softmax_backward(grad_out, probs, axis=-1):
    return probs * (grad_out - (grad_out * probs).sum(axis=axis, keepdims=True))


# -- layer norm -------------------------------------------------------------


def layer_norm_forward(x, gain, bias, eps=LN_EPS):
    """Standardize each frame over its last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv_std = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv_std
    return xhat * gain + bias, (xhat, inv_std, gain)


def layer_norm_backward(grad_out, cache):
    xhat, inv_std, gain = cache
    d = xhat.shape[-1]
    lead = tuple(range(grad_out.ndim - 1))
    grads = {
        "gain": (grad_out * xhat).sum(axis=lead),
        "bias": grad_out.sum(axis=lead),
    }
    gx = grad_out * gain
    grad_in = inv_std / d * (
        d * gx
        - gx.sum(axis=-1, keepdims=True)
        - xhat * (gx * xhat).sum(axis=-1, keepdims=True)
    )
    return grad_in, grads


# -- spectral (frame-wise) FC stack -----------------------------------------


def spectral_fc_forward(x, w1, b1, w2, b2):
    """Two frame-wise affine layers, each followed by Mish."""
    z1 = x @ w1 + b1
    h1 = mish(z1)
    z2 = h1 @ w2 + b2
    return mish(z2), (x, z1, h1, z2, w1, w2)


def spectral_fc_backward(grad_out, cache):
    x, z1, h1, z2, w1, w2 = cache
    g2 = grad_out * mish_grad(z2)
    gh1, gw2, gb2 = _linear_grads(g2, h1, w2)
    g1 = gh1 * mish_grad(z1)
    gx, gw1, gb1 = _linear_grads(g1, x, w1)
    return gx, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


# -- gated temporal convolution ---------------------------------------------


def glu_block_forward(x, weight, bias):
    """Same-padded conv to 2C channels, GLU gate, residual add."""
    z = _kernels.temporal_conv_forward(x, weight, bias)
    c = x.shape[-1]
    lin, gate = z[..., :c], z[..., c:]
    sg = sigmoid(gate)
    return x + lin * sg, (x, weight, lin, sg)


def glu_block_backward(grad_out, cache):
    x, weight, lin, sg = cache
    gz = np.concatenate([grad_out * sg, grad_out * lin * sg * (1.0 - sg)], axis=-1)
    gx, gw, gb = _kernels.temporal_conv_backward(x, weight, gz)
    return grad_out + gx, {"weight": gw, "bias": gb}


def gated_conv_forward(x, w1, b1, w2, b2):
    h, c1 = glu_block_forward(x, w1, b1)
    out, c2 = glu_block_forward(h, w2, b2)
    return out, (c1, c2)


def gated_conv_backward(grad_out, cache):
    c1, c2 = cache
    gh, g2 = glu_block_backward(grad_out, c2)
    gx, g1 = glu_block_backward(gh, c1)
    return gx, {"w1": g1["weight"], "b1": g1["bias"], "w2": g2["weight"], "b2": g2["bias"]}


# -- multi-head self-attention ----------------------------------------------


def _split_heads(x, n_heads):
    b, t, h = x.shape
    return x.reshape(b, t, n_heads, h // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, nh, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, nh * dh)


def mhsa_forward(x, n_heads, wq, bq, wk, bk, wv, bv, wo, bo):
    """Scaled dot-product self-attention with an output projection and residual."""
    dh = x.shape[-1] // n_heads
    scale = 1.0 / np.sqrt(dh)
    q = _split_heads(x @ wq + bq, n_heads)
    k = _split_heads(x @ wk + bk, n_heads)
    v = _split_heads(x @ wv + bv, n_heads)
    attn = softmax(q @ k.transpose(0, 1, 3, 2) * scale)
    ctx = _merge_heads(attn @ v)
    out = ctx @ wo + bo + x
    return out, (x, q, k, v, attn, ctx, scale, wq, wk, wv, wo)


def mhsa_backward(grad_out, cache):
    x, q, k, v, attn, ctx, scale, wq, wk, wv, wo = cache
    n_heads = q.shape[1]
    gctx, gwo, gbo = _linear_grads(grad_out, ctx, wo)
    gctx = _split_heads(gctx, n_heads)
    gattn = gctx @ v.transpose(0, 1, 3, 2)
    gv = attn.transpose(0, 1, 3, 2) @ gctx
    gscores = softmax_backward(gattn, attn) * scale
    gq = gscores @ k
    gk = gscores.transpose(0, 1, 3, 2) @ q
    gx = grad_out.copy()
    grads = {"wo": gwo, "bo": gbo}
    for name, g, w in (("q", gq, wq), ("k", gk, wk), ("v", gv, wv)):
        gx_part, gw, gb = _linear_grads(_merge_heads(g), x, w)
        gx += gx_part
        grads["w" + name] = gw
        grads["b" + name] = gb
    return gx, grads


# -- pooling ----------------------------------------------------------------


def temporal_average_pool(x):
    return x.mean(axis=1), x.shape[1]


def temporal_average_pool_backward(grad_out, steps):
    return np.repeat(grad_out[:, None, :] / steps, steps, axis=1)


def attentive_stats_pool(x, w1, b1, w2, b2, wo, bo):
    """Attention-weighted mean and standard deviation, projected to width C.

    Frame scores come from ``tanh(x @ w1 + b1) @ w2 + b2`` and are normalized
    with a softmax over time.
    """
    h = np.tanh(x @ w1 + b1)
    alpha = softmax(h @ w2 + b2, axis=1)
    a3 = alpha[:, :, None]
    mu = (a3 * x).sum(axis=1)
    xc = x - mu[:, None, :]
    var = (a3 * xc * xc).sum(axis=1)
    sigma = np.sqrt(var + ASP_VAR_EPS)
    stats = np.concatenate([mu, sigma], axis=-1)
    out = stats @ wo + bo
    return out, (x, h, alpha, xc, sigma, stats, w1, w2, wo)


def attentive_stats_pool_backward(grad_out, cache):
    x, h, alpha, xc, sigma, stats, w1, w2, wo = cache
    c = x.shape[-1]
    gstats = grad_out @ wo.T
    grads = {"wo": stats.T @ grad_out, "bo": grad_out.sum(axis=0)}
    gmu, gsigma = gstats[:, :c], gstats[:, c:]
    gvar = gsigma / (2.0 * sigma)
    a3 = alpha[:, :, None]
    # mean-shift terms vanish because sum_t alpha_t * xc_t = 0
    gx = a3 * (gmu[:, None, :] + 2.0 * xc * gvar[:, None, :])
    galpha = (x * gmu[:, None, :]).sum(axis=-1) + (xc * xc * gvar[:, None, :]).sum(axis=-1)
    gscore = softmax_backward(galpha, alpha, axis=1)
    grads["w2"] = np.einsum("bta,bt->a", h, gscore)
    grads["b2"] = np.array([gscore.sum()])
    gpre = gscore[:, :, None] * w2[None, None, :] * (1.0 - h * h)
    gx_s, gw1, gb1 = _linear_grads(gpre, x, w1)
    grads["w1"] = gw1
    grads["b1"] = gb1
    return gx + gx_s, grads
