"""Random Fourier features for the Gaussian kernel.

A single frozen :class:`RffMapper` is shared by every client and the server so
that coordinate ``i`` of a model means the same thing everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidArgument


@dataclass(frozen=True, eq=False)
class RffMapper:
    """Cosine feature map ``z_i(x) = sqrt(2/D) cos(w_i . x + b_i)``.

    Parameters
    ----------
    frequencies : ndarray, shape (L, D)
        One column per feature.
    phases : ndarray, shape (D,)
        Offsets in ``[0, 2*pi)``.
    bandwidth : float
        Kernel width used to draw ``frequencies``; kept for bookkeeping.
    """

    frequencies: np.ndarray
    phases: np.ndarray
    bandwidth: float = 1.0

    def __post_init__(self):
        freq = np.array(self.frequencies, dtype=np.float64, copy=True)
        ph = np.array(self.phases, dtype=np.float64, copy=True)
        if freq.ndim != 2 or ph.ndim != 1 or freq.shape[1] != ph.shape[0]:
            raise DimensionMismatch(
                f"frequencies {freq.shape} and phases {ph.shape} disagree")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise InvalidArgument(f"bandwidth must be positive, got {self.bandwidth}")
        freq.flags.writeable = False
        ph.flags.writeable = False
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "phases", ph)

    @property
    def dim_in(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dim_out(self) -> int:
        return self.frequencies.shape[1]

    @property
    def scale(self) -> float:
        return math.sqrt(2.0 / self.dim_out)

    def map(self, x) -> np.ndarray:
        """Map a single length-L window to its D features."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim_in,):
            raise DimensionMismatch(f"expected input of length {self.dim_in}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidArgument("input contains non-finite values")
        return self.map_batch(x[None, :])[0]

    def map_batch(self, X) -> np.ndarray:
        """Map an array of windows with trailing axis L; returns trailing axis D."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim_in:
            raise DimensionMismatch(f"expected trailing axis {self.dim_in}, got shape {X.shape}")
        lead = X.shape[:-1]
        flat = X.reshape(-1, self.dim_in)
        # explicit tap sum instead of BLAS: each row's result must not depend on batch size
        out = np.multiply.outer(flat[:, 0], self.frequencies[0])
        for i in range(1, self.dim_in):
            out += np.multiply.outer(flat[:, i], self.frequencies[i])
        out += self.phases
        np.cos(out, out=out)
        out *= self.scale
        return out.reshape(*lead, self.dim_out)

    def __eq__(self, other):
        if not isinstance(other, RffMapper):
            return NotImplemented
        return (self.bandwidth == other.bandwidth
                and np.array_equal(self.frequencies, other.frequencies)
                and np.array_equal(self.phases, other.phases))

    __hash__ = None


def new_mapper(L: int, D: int, bandwidth: float = 1.0, seed=None) -> RffMapper:
    """Draw a Gaussian-kernel RFF map.

    Frequencies are i.i.d. ``N(0, 1/bandwidth**2)``, phases uniform on
    ``[0, 2*pi)``. ``seed`` may be anything accepted by
    :func:`numpy.random.default_rng`.
    """
    if int(L) != L or L < 1:
        raise InvalidArgument(f"window length must be >= 1, got {L}")
    if int(D) != D or D < 1:
        raise InvalidArgument(f"feature dimension must be >= 1, got {D}")
    if not (bandwidth > 0 and math.isfinite(bandwidth)):
        raise InvalidArgument(f"bandwidth must be positive, got {bandwidth}")
    rng = np.random.default_rng(seed)
    freq = rng.normal(0.0, 1.0 / bandwidth, size=(int(L), int(D)))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=int(D))
    return RffMapper(freq, phases, float(bandwidth))


def gaussian_kernel(x, y, bandwidth: float = 1.0) -> float:
    """Exact kernel ``exp(-||x-y||^2 / (2 bandwidth^2))`` that the features approximate."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-np.dot(d, d) / (2.0 * bandwidth ** 2)))
