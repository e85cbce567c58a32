"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``VADSPHERE_BACKEND``
(``numba`` or ``numpy``). When numba is requested but cannot be imported the
numpy path is used. Both implementations are always importable under explicit
names so they can be compared against each other.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "bin_regions",
    "temporal_conv_forward",
    "temporal_conv_backward",
]


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def bin_regions_numpy(azimuth_deg, elevation_deg, n_phi, n_theta):
    """Vectorized angular binning; returns int64 labels."""
    az = np.asarray(azimuth_deg, dtype=np.float64)
    el = np.asarray(elevation_deg, dtype=np.float64)
    a_idx = np.floor(az / (360.0 / n_phi)).astype(np.int64)
    e_idx = np.floor(el / (180.0 / n_theta)).astype(np.int64)
    np.clip(a_idx, 0, n_phi - 1, out=a_idx)
    np.clip(e_idx, 0, n_theta - 1, out=e_idx)
    return a_idx * n_theta + e_idx


def temporal_conv_forward_numpy(x, weight, bias):
    """Same-padded 1D convolution over the time axis.

    x: (B, T, Cin); weight: (K, Cin, Cout); bias: (Cout,) -> (B, T, Cout)
    """
    k = weight.shape[0]
    pad = (k - 1) // 2
    batch, steps, _ = x.shape
    xp = np.zeros((batch, steps + k - 1, x.shape[2]))
    xp[:, pad:pad + steps] = x
    out = np.broadcast_to(bias, (batch, steps, weight.shape[2])).copy()
    for j in range(k):
        out += xp[:, j:j + steps] @ weight[j]
    return out


def temporal_conv_backward_numpy(x, weight, grad_out):
    """Returns (grad_x, grad_weight, grad_bias) for temporal_conv_forward."""
    k = weight.shape[0]
    pad = (k - 1) // 2
    batch, steps, cin = x.shape
    xp = np.zeros((batch, steps + k - 1, cin))
    xp[:, pad:pad + steps] = x
    grad_xp = np.zeros_like(xp)
    grad_w = np.empty_like(weight)
    flat_g = grad_out.reshape(-1, grad_out.shape[2])
    for j in range(k):
        window = xp[:, j:j + steps].reshape(-1, cin)
        grad_w[j] = window.T @ flat_g
        grad_xp[:, j:j + steps] += grad_out @ weight[j].T
    grad_b = flat_g.sum(axis=0)
    return grad_xp[:, pad:pad + steps].copy(), grad_w, grad_b


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def bin_regions_numba(azimuth_deg, elevation_deg, n_phi, n_theta):
        n = azimuth_deg.shape[0]
        out = np.empty(n, dtype=np.int64)
        width_a = 360.0 / n_phi
        width_e = 180.0 / n_theta
        for i in range(n):
            a = int(np.floor(azimuth_deg[i] / width_a))
            e = int(np.floor(elevation_deg[i] / width_e))
            if a < 0:
                a = 0
            elif a > n_phi - 1:
                a = n_phi - 1
            if e < 0:
                e = 0
            elif e > n_theta - 1:
                e = n_theta - 1
            out[i] = a * n_theta + e
        return out

    @numba.njit(cache=True)
    def _pad_time(x, k):
        batch, steps, cin = x.shape
        pad = (k - 1) // 2
        xp = np.zeros((batch, steps + k - 1, cin))
        xp[:, pad:pad + steps, :] = x
        return xp

    @numba.njit(cache=True)
    def _window(xp, j, steps):
        # contiguous (B*T, C) view of the frames feeding tap j
        batch, _, cin = xp.shape
        out = np.empty((batch, steps, cin))
        out[:] = xp[:, j:j + steps, :]
        return out.reshape((batch * steps, cin))

    @numba.njit(cache=True)
    def _conv_forward_numba(x, weight, bias):
        batch, steps, cin = x.shape
        k, _, cout = weight.shape
        xp = _pad_time(x, k)
        out = np.empty((batch * steps, cout))
        out[:] = bias
        for j in range(k):
            out += _window(xp, j, steps) @ np.ascontiguousarray(weight[j])
        return out.reshape((batch, steps, cout))

    @numba.njit(cache=True)
    def _conv_backward_numba(x, weight, grad_out):
        batch, steps, cin = x.shape
        k, _, cout = weight.shape
        pad = (k - 1) // 2
        xp = _pad_time(x, k)
        g = np.ascontiguousarray(grad_out).reshape((batch * steps, cout))
        grad_xp = np.zeros_like(xp)
        grad_w = np.empty((k, cin, cout))
        for j in range(k):
            grad_w[j] = _window(xp, j, steps).T @ g
            gx = (g @ np.ascontiguousarray(weight[j].T)).reshape((batch, steps, cin))
            grad_xp[:, j:j + steps, :] += gx
        grad_b = np.zeros(cout)
        for r in range(batch * steps):
            grad_b += g[r]
        return np.ascontiguousarray(grad_xp[:, pad:pad + steps, :]), grad_w, grad_b

    def temporal_conv_forward_numba(x, weight, bias):
        return _conv_forward_numba(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(weight, dtype=np.float64),
            np.ascontiguousarray(bias, dtype=np.float64),
        )

    def temporal_conv_backward_numba(x, weight, grad_out):
        return _conv_backward_numba(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(weight, dtype=np.float64),
            np.ascontiguousarray(grad_out, dtype=np.float64),
        )

    def _bin_regions_numba_entry(azimuth_deg, elevation_deg, n_phi, n_theta):
        az, el = np.broadcast_arrays(
            np.asarray(azimuth_deg, dtype=np.float64),
            np.asarray(elevation_deg, dtype=np.float64),
        )
        labels = bin_regions_numba(
            np.ascontiguousarray(az.ravel()), np.ascontiguousarray(el.ravel()),
            int(n_phi), int(n_theta),
        )
        return labels.reshape(az.shape)


def _select_backend():
    requested = os.environ.get("VADSPHERE_BACKEND", "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(
            f"VADSPHERE_BACKEND must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numba" and not HAVE_NUMBA:
        return "numpy"
    return requested


BACKEND = _select_backend()

if BACKEND == "numba":
    bin_regions = _bin_regions_numba_entry
    temporal_conv_forward = temporal_conv_forward_numba
    temporal_conv_backward = temporal_conv_backward_numba
else:
    bin_regions = bin_regions_numpy
    temporal_conv_forward = temporal_conv_forward_numpy
    temporal_conv_backward = temporal_conv_backward_numpy
