"""Backend selection for the round loop.

The compiled extension is used when it imports; otherwise the NumPy version.
Set ``PSOFED_BACKEND=python`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

BACKENDS = {"python": _pykernel.simulate_chunk}
if _ckernel is not None:
    BACKENDS["cython"] = _ckernel.simulate_chunk

_requested = os.environ.get("PSOFED_BACKEND", "").strip().lower()
if _requested and _requested not in BACKENDS:
    raise ImportError(f"PSOFED_BACKEND={_requested!r} is not available; have {sorted(BACKENDS)}")
BACKEND = _requested or ("cython" if "cython" in BACKENDS else "python")


def simulate_chunk(W, w, Z, Y, sel, offsets, round0, M, tau, mu, partial,
                   G=None, gb=None, gc=0.0, mse_out=None, trace_out=None, backend=None):
    """Advance ``W`` (client models) and ``w`` (global model) in place over ``len(Z)`` rounds.

    Returns ``None`` or the ``(round, client)`` of the first divergence.
    """
    fn = BACKENDS[backend or BACKEND]
    sel = np.ascontiguousarray(sel, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if G is not None:
        G = np.ascontiguousarray(G, dtype=np.float64)
        gb = np.ascontiguousarray(gb, dtype=np.float64)
    return fn(W, w, Z, Y, sel, offsets, int(round0), int(M), int(tau), float(mu), bool(partial),
              G, gb, float(gc), mse_out, trace_out)
