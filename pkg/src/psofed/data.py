"""Synthetic non-IID streaming regression data.

Each client drives a first-order autoregressive process with its own
coefficient, innovation mean/variance and observation-noise level. Targets
come from a fixed nonlinear function of the last four input samples.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidArgument
from .rff import RffMapper


@dataclass(frozen=True)
class DataRanges:
    """Uniform ranges client parameters are drawn from."""
    theta: tuple[float, float] = (0.2, 0.9)
    input_mean: tuple[float, float] = (-0.2, 0.2)
    input_var: tuple[float, float] = (0.2, 1.2)
    noise_var: tuple[float, float] = (0.005, 0.03)


@dataclass(frozen=True)
class ClientParams:
    theta: float
    input_mean: float
    input_var: float
    noise_var: float


@dataclass
class TestSet:
    Z: np.ndarray
    y: np.ndarray

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if len(self.y) < 1 or self.Z.shape[0] != len(self.y):
            raise InvalidArgument(f"bad test set shapes Z={self.Z.shape}, y={self.y.shape}")

    @property
    def size(self) -> int:
        return len(self.y)


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def target(X) -> np.ndarray:
    """Nonlinear regression target on windows ``X[..., :4]`` (newest sample first)."""
    X = np.asarray(X, dtype=np.float64)
    x1, x2, x3, x4 = X[..., 0], X[..., 1], X[..., 2], X[..., 3]
    return np.sqrt(x1 ** 2 + np.sin(np.pi * x4) ** 2) + (0.8 - 0.5 * np.exp(-x2 ** 2)) * x3


def draw_client_params(K: int, seed=None, ranges: DataRanges = DataRanges()) -> list[ClientParams]:
    if K < 1:
        raise InvalidArgument(f"client count must be >= 1, got {K}")
    rng = np.random.default_rng(seed)
    cols = [rng.uniform(lo, hi, size=K) for lo, hi in
            (ranges.theta, ranges.input_mean, ranges.input_var, ranges.noise_var)]
    return [ClientParams(*(float(c[k]) for c in cols)) for k in range(K)]


class ClientDataSource:
    """One client's input stream.

    Innovations and observation noise come from two independent generators,
    so drawing ``n`` samples at once via :meth:`take` gives exactly the same
    stream as ``n`` calls to :meth:`next_sample`.
    """

    def __init__(self, params: ClientParams, L: int = 4, seed=None, warmup: int = 100):
        if L < 1:
            raise InvalidArgument(f"window length must be >= 1, got {L}")
        self.params = params
        self.L = int(L)
        innov_ss, noise_ss = as_seed_sequence(seed).spawn(2)
        self._innov = np.random.default_rng(innov_ss)
        self._noise = np.random.default_rng(noise_ss)
        self._gain = float(np.sqrt(1.0 - params.theta ** 2))
        self._sd_u = float(np.sqrt(params.input_var))
        self._sd_nu = float(np.sqrt(params.noise_var))
        self.history = np.zeros(self.L)  # newest first
        self._advance(max(int(warmup), self.L))

    def _advance(self, n: int) -> np.ndarray:
        """Run the AR recursion ``n`` steps; returns the new raw samples."""
        u = self._innov.normal(self.params.input_mean, self._sd_u, size=n)
        x, _ = lfilter([self._gain], [1.0, -self.params.theta], u,
                       zi=[self.params.theta * self.history[0]])
        full = np.concatenate([self.history[::-1], x])
        self.history = full[-self.L:][::-1].copy()
        return full

    def take(self, n: int, f: Callable = target, noiseless: bool = False):
        """Next ``n`` windows, shape (n, L), and targets, shape (n,)."""
        full = self._advance(n)
        # full holds L old samples followed by n new ones, oldest first
        idx = np.arange(n)[:, None] + self.L - np.arange(self.L)[None, :]
        X = full[idx]
        nu = self._noise.normal(0.0, self._sd_nu, size=n)
        y = f(X)
        if not noiseless:
            y = y + nu
        return X, y

    def next_sample(self, f: Callable = target):
        X, y = self.take(1, f)
        return X[0], float(y[0])


def make_sources(params: Sequence[ClientParams], L: int, seed=None, warmup: int = 100) -> list[ClientDataSource]:
    children = as_seed_sequence(seed).spawn(len(params))
    return [ClientDataSource(p, L, ss, warmup) for p, ss in zip(params, children)]


def build_test_set(params: Sequence[ClientParams], mapper: RffMapper, per_client: int = 20,
                   noiseless: bool = True, seed=None, warmup: int = 100,
                   f: Callable = target) -> TestSet:
    """Held-out samples from every client's distribution.

    Uses fresh AR chains seeded independently of the training streams.
    """
    if per_client < 1:
        raise InvalidArgument(f"per_client must be >= 1, got {per_client}")
    sources = make_sources(params, mapper.dim_in, seed, warmup)
    Xs, ys = zip(*(s.take(per_client, f, noiseless=noiseless) for s in sources))
    X = np.concatenate(Xs)
    return TestSet(mapper.map_batch(X), np.concatenate(ys))
