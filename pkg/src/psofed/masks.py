"""Selection masks for partial model sharing.

A mask marks the ``M`` of ``D`` coordinates a client exchanges with the server
in a given round. Masks start as a contiguous block and move by a right
circular shift of ``shift`` positions per round, so a mask is fully described
by its block start (``offset``). The dense ``D x D`` diagonal matrix is never
built.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, InvalidArgument

SCHEMES = ("coordinated", "uncoordinated")


def _validate(D, M, tau, K=1):
    if D < 1:
        raise InvalidArgument(f"dimension must be >= 1, got {D}")
    if not 0 <= M <= D:
        raise InvalidArgument(f"share count must satisfy 0 <= M <= D, got M={M}, D={D}")
    if not 1 <= tau <= D:
        raise InvalidArgument(f"shift must satisfy 1 <= tau <= D, got {tau}")
    if K < 1:
        raise InvalidArgument(f"client count must be >= 1, got {K}")


@dataclass(frozen=True)
class SelectionMask:
    dim: int
    count: int
    offset: int = 0
    shift: int = 1

    def __post_init__(self):
        _validate(self.dim, self.count, self.shift)
        object.__setattr__(self, "offset", int(self.offset) % self.dim)

    @property
    def active(self) -> np.ndarray:
        """Sorted indices of shared coordinates."""
        return np.sort((self.offset + np.arange(self.count)) % self.dim)

    @property
    def indicator(self) -> np.ndarray:
        """Boolean vector of length ``dim``; the diagonal of the selection matrix."""
        rel = (np.arange(self.dim) - self.offset) % self.dim
        return rel < self.count

    def __contains__(self, i) -> bool:
        return (int(i) - self.offset) % self.dim < self.count

    def advance(self, steps: int = 1) -> "SelectionMask":
        """Right circular shift by ``shift * steps`` positions."""
        return replace(self, offset=self.offset + self.shift * steps)

    def _check(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise DimensionMismatch(f"mask of dim {self.dim} applied to shape {w.shape}")
        return w

    def apply(self, w) -> np.ndarray:
        """Keep the shared coordinates of ``w``; zero the rest."""
        w = self._check(w)
        return np.where(self.indicator, w, 0.0)

    def apply_complement(self, w) -> np.ndarray:
        w = self._check(w)
        return np.where(self.indicator, 0.0, w)


def coordinated_init(D: int, M: int, tau: int, K: int) -> list[SelectionMask]:
    """Every client gets the block ``{0, ..., M-1}``."""
    _validate(D, M, tau, K)
    mask = SelectionMask(D, M, 0, tau)
    return [mask] * K


def uncoordinated_init(D: int, M: int, tau: int, K: int, seed=None) -> list[SelectionMask]:
    """Each client's block starts at an independent uniform offset in ``[0, D)``."""
    _validate(D, M, tau, K)
    rng = np.random.default_rng(seed)
    offsets = rng.integers(0, D, size=K)
    return [SelectionMask(D, M, int(o), tau) for o in offsets]


def init_masks(scheme: str, D: int, M: int, tau: int, K: int, seed=None) -> list[SelectionMask]:
    if scheme == "coordinated":
        return coordinated_init(D, M, tau, K)
    if scheme == "uncoordinated":
        return uncoordinated_init(D, M, tau, K, seed)
    raise InvalidArgument(f"unknown mask scheme {scheme!r}; expected one of {SCHEMES}")
