"""NumPy implementation of the round loop.

Semantics match ``_ckernel.simulate_chunk`` exactly; only floating-point
summation order may differ between the two.
"""
import numpy as np

from .algorithms import DIVERGENCE_NORM

_LIMIT2 = DIVERGENCE_NORM * DIVERGENCE_NORM


def simulate_chunk(W, w, Z, Y, sel, offsets, round0, M, tau, mu, partial,
                   G=None, gb=None, gc=0.0, mse_out=None, trace_out=None):
    n, K, D = Z.shape
    S = sel.shape[1]
    cols = np.arange(D)
    for i in range(n):
        r = round0 + i
        s = sel[i]
        z = Z[i]
        if partial:
            off = (offsets + r * tau) % D
            base = W.copy()
            act = ((cols - off[s, None]) % D) < M
            base[s] = np.where(act, w, W[s])
            err = Y[i] - (base * z).sum(axis=1)
            W[:] = base + (mu * err)[:, None] * z
            bad = ~((W * W).sum(axis=1) < _LIMIT2)
            if bad.any():
                return int(r), int(np.flatnonzero(bad)[0])
            act2 = ((cols - (off[s, None] + tau)) % D) < M
            picked = np.where(act2, W[s], w)
        else:
            zs = z[s]
            base = np.broadcast_to(w, (S, D))
            err = Y[i, s] - (base * zs).sum(axis=1)
            W[s] = base + (mu * err)[:, None] * zs
            bad = ~((W[s] * W[s]).sum(axis=1) < _LIMIT2)
            if bad.any():
                return int(r), int(s[np.flatnonzero(bad)[0]])
            picked = W[s]
        acc = np.zeros(D)
        for row in picked:
            acc += row
        w[:] = acc / S
        if mse_out is not None:
            mse_out[i] = w @ G @ w - 2.0 * (gb @ w) + gc
        if trace_out is not None:
            trace_out[i, 0] = w
            trace_out[i, 1:] = W
    return None
