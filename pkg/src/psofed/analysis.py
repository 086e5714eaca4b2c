"""Mean-convergence analysis of PSO-Fed on the stacked server+clients system.

The extended state is ``col{w, w_1, ..., w_K}`` of length ``(K+1) D``. One
round maps the extended error ``e = 1 (x) w_star - w_e`` as

    e' = B (I - mu Z Z^T) A e - mu B Z nu

with ``A`` the download/blend matrix for round ``n`` and ``B`` the aggregation
matrix built from the shifted masks. Dense matrices are only built for small
systems; this module is a verification tool, not a simulation path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from . import kernel
from .algorithms import selection_schedule
from .data import ClientParams, DataRanges, as_seed_sequence, draw_client_params, make_sources
from .errors import DimensionMismatch, DivergenceError, InvalidArgument
from .masks import SCHEMES, SelectionMask, init_masks
from .rff import RffMapper, new_mapper

MAX_EXTENDED = 4096

UNBOUNDED = math.inf


def _guard(K, D):
    if (K + 1) * D > MAX_EXTENDED:
        raise InvalidArgument(
            f"extended system of size (K+1)*D = {(K + 1) * D} exceeds {MAX_EXTENDED}; "
            "use a smaller configuration")


def _diag_blocks(masks, participation):
    if len(masks) != len(participation):
        raise DimensionMismatch(f"{len(masks)} masks but {len(participation)} participation flags")
    if not masks:
        raise InvalidArgument("need at least one client")
    D = masks[0].dim
    if any(m.dim != D for m in masks):
        raise DimensionMismatch("masks have different dimensions")
    return D, [float(a) * m.indicator.astype(np.float64) for m, a in zip(masks, participation)]


def build_A(masks: Sequence[SelectionMask], participation) -> np.ndarray:
    """Download/blend matrix: client ``k`` takes ``a_k S_k w + (I - a_k S_k) w_k``."""
    D, sel = _diag_blocks(masks, participation)
    K = len(masks)
    _guard(K, D)
    A = np.eye((K + 1) * D)
    for k, s in enumerate(sel):
        rows = slice((k + 1) * D, (k + 2) * D)
        A[rows, :D] = np.diag(s)
        A[rows, rows] = np.diag(1.0 - s)
    return A


def build_B(masks_next: Sequence[SelectionMask], participation, count=None) -> np.ndarray:
    """Aggregation matrix built from the post-shift masks."""
    D, sel = _diag_blocks(masks_next, participation)
    K = len(masks_next)
    _guard(K, D)
    if count is None:
        count = int(np.sum(np.asarray(participation) != 0))
    if count < 1:
        raise InvalidArgument("aggregation needs at least one participating client")
    B = np.eye((K + 1) * D)
    total = np.zeros(D)
    for k, s in enumerate(sel):
        c = s / count
        B[:D, (k + 1) * D:(k + 2) * D] = np.diag(c)
        total += c
    B[:D, :D] = np.diag(1.0 - total)
    return B


def extended_features(zs: Sequence[np.ndarray]) -> np.ndarray:
    """``blockdiag{0, z_1, ..., z_K}``, shape ((K+1) D, K+1)."""
    zs = [np.asarray(z, dtype=np.float64).reshape(-1, 1) for z in zs]
    D = zs[0].shape[0]
    return block_diag(np.zeros((D, 1)), *zs)


def error_recursion_step(A, B, Z_e, mu, err, noise=None) -> np.ndarray:
    """Exact one-round map of the extended error (noise vector includes the leading 0)."""
    n = A.shape[0]
    out = B @ ((np.eye(n) - mu * Z_e @ Z_e.T) @ (A @ err))
    if noise is not None:
        out -= mu * B @ (Z_e @ np.asarray(noise, dtype=np.float64))
    return out


def extended_correlation(R_blocks: Sequence[np.ndarray]) -> np.ndarray:
    D = R_blocks[0].shape[0]
    return block_diag(np.zeros((D, D)), *R_blocks)


@dataclass
class ExtendedSystem:
    """Stacked representation of the optimum and client correlations."""
    w_star: np.ndarray
    R_blocks: list

    def __post_init__(self):
        self.w_star = np.asarray(self.w_star, dtype=np.float64)
        D = self.w_star.shape[0]
        for R in self.R_blocks:
            if R.shape != (D, D):
                raise DimensionMismatch(f"correlation block {R.shape} vs dim {D}")
        _guard(self.K, D)

    @property
    def K(self) -> int:
        return len(self.R_blocks)

    @property
    def D(self) -> int:
        return self.w_star.shape[0]

    @property
    def w_e_star(self) -> np.ndarray:
        return np.kron(np.ones(self.K + 1), self.w_star)

    @property
    def R_e(self) -> np.ndarray:
        return extended_correlation(self.R_blocks)


def max_eigenvalue(R) -> float:
    return float(np.linalg.eigvalsh(np.asarray(R, dtype=np.float64))[-1])


def step_size_bound(R_blocks: Sequence[np.ndarray]) -> float:
    """``2 / max_k lambda_max(R_k)``; :data:`UNBOUNDED` when every block is zero."""
    if len(R_blocks) == 0:
        raise InvalidArgument("need at least one correlation matrix")
    lam = max(max_eigenvalue(R) for R in R_blocks)
    if lam <= 0.0:
        return UNBOUNDED
    return 2.0 / lam


def share_probabilities(D: int, M: int, K: int, count: int) -> tuple[float, float]:
    """Expected weights ``(E[a_k S_k], E[a_k S_k / |S_n|])`` per coordinate."""
    if not 0 <= M <= D or D < 1:
        raise InvalidArgument(f"need 0 <= M <= D, got M={M}, D={D}")
    if not 1 <= count <= K:
        raise InvalidArgument(f"need 1 <= count <= K, got count={count}, K={K}")
    p = (count / K) * (M / D)
    return p, p / count


def expected_matrices(scheme: str, D: int, M: int, tau: int, K: int, count: int):
    """Closed-form ``(E[A], E[B])`` with independent participation and selection.

    Both schemes share the same marginal, so ``scheme`` and ``tau`` are only
    validated.
    """
    if scheme not in SCHEMES:
        raise InvalidArgument(f"unknown scheme {scheme!r}")
    if not 1 <= tau <= D:
        raise InvalidArgument(f"shift must lie in [1, D], got {tau}")
    p_a, p_b = share_probabilities(D, M, K, count)
    _guard(K, D)
    I = np.eye(D)
    EA = np.eye((K + 1) * D)
    EB = np.eye((K + 1) * D)
    for k in range(K):
        rows = slice((k + 1) * D, (k + 2) * D)
        EA[rows, :D] = p_a * I
        EA[rows, rows] = (1.0 - p_a) * I
        EB[:D, rows] = p_b * I
    EB[:D, :D] = (1.0 - K * p_b) * I
    return EA, EB


def recursion_matrix(EA, EB, R_e, mu) -> np.ndarray:
    n = EA.shape[0]
    if EB.shape != (n, n) or R_e.shape != (n, n):
        raise DimensionMismatch(f"shapes {EA.shape}, {EB.shape}, {R_e.shape} disagree")
    return EB @ (np.eye(n) - mu * R_e) @ EA


def mean_recursion_step(EA, EB, R_e, mu, err_mean) -> np.ndarray:
    """``E[B] (I - mu R_e) E[A] err_mean``."""
    err_mean = np.asarray(err_mean, dtype=np.float64)
    n = EA.shape[0]
    if EB.shape != (n, n) or R_e.shape != (n, n) or err_mean.shape != (n,):
        raise DimensionMismatch(
            f"shapes {EA.shape}, {EB.shape}, {R_e.shape}, {err_mean.shape} disagree")
    v = EA @ err_mean
    v = v - mu * (R_e @ v)
    return EB @ v


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def estimate_correlations(params: Sequence[ClientParams], mapper: RffMapper,
                          samples: int = 100_000, seed=None, warmup: int = 100,
                          batch: int = 20_000) -> list[np.ndarray]:
    """Sample-average ``E[z z^T]`` per client from its own input process."""
    sources = make_sources(params, mapper.dim_in, seed, warmup)
    out = []
    for src in sources:
        R = np.zeros((mapper.dim_out, mapper.dim_out))
        left = samples
        while left > 0:
            n = min(batch, left)
            X, _ = src.take(n)
            Z = mapper.map_batch(X)
            R += Z.T @ Z
            left -= n
        R /= samples
        out.append(0.5 * (R + R.T))
    return out


@dataclass(frozen=True)
class AnalysisConfig:
    num_clients: int = 10
    dim: int = 16
    window: int = 4
    share: int = 8
    shift: int | None = None
    selected: int = 4
    scheme: str = "coordinated"
    rounds: int = 2000
    bandwidth: float = 1.0
    noise_var: float = 1e-3
    ranges: DataRanges = field(default_factory=DataRanges)
    corr_samples: int = 100_000
    warmup: int = 100
    seed: int = 0

    @property
    def tau(self) -> int:
        return self.shift if self.shift is not None else max(self.share, 1)


@dataclass
class ConvergenceReport:
    mu: float
    bound: float
    trials: int
    initial_norm: float
    final_norm: float
    trajectory: np.ndarray = field(repr=False)
    diverged_trials: int = 0
    spectral_radius: float = float("nan")
    norm2: float = float("nan")

    @property
    def ratio(self) -> float:
        return self.final_norm / self.initial_norm

    @property
    def converged(self) -> bool:
        return self.diverged_trials == 0 and self.ratio < 0.01

    @property
    def diverged(self) -> bool:
        return self.diverged_trials > 0 or not self.ratio <= 10.0

    @property
    def verdict(self) -> str:
        if self.diverged:
            return "diverged"
        if self.converged:
            return "converged"
        return "inconclusive"

    def lines(self) -> list[str]:
        return [
            f"step_size_bound: {self.bound:.10g}",
            f"mu: {self.mu:.10g}",
            f"mu_over_bound: {self.mu / self.bound:.6g}",
            f"spectral_radius: {self.spectral_radius:.10g}",
            f"norm2: {self.norm2:.10g}",
            f"trials: {self.trials}",
            f"diverged_trials: {self.diverged_trials}",
            f"initial_error_norm: {self.initial_norm:.10g}",
            f"final_error_norm: {self.final_norm:.10g}",
            f"error_ratio: {self.ratio:.6g}",
            f"verdict: {self.verdict}",
        ]


@dataclass
class LinearProblem:
    """Clients whose targets are exactly linear in feature space plus noise."""
    config: AnalysisConfig
    mapper: RffMapper
    params: list
    w_star: np.ndarray
    R_blocks: list

    @property
    def bound(self) -> float:
        return step_size_bound(self.R_blocks)

    def system(self) -> ExtendedSystem:
        return ExtendedSystem(self.w_star, self.R_blocks)


def linear_problem(cfg: AnalysisConfig) -> LinearProblem:
    _guard(cfg.num_clients, cfg.dim)
    ss_map, ss_params, ss_w, ss_corr = as_seed_sequence(cfg.seed).spawn(4)
    mapper = new_mapper(cfg.window, cfg.dim, cfg.bandwidth, ss_map)
    params = [ClientParams(p.theta, p.input_mean, p.input_var, cfg.noise_var)
              for p in draw_client_params(cfg.num_clients, ss_params, cfg.ranges)]
    w_star = np.random.default_rng(ss_w).normal(size=cfg.dim)
    R = estimate_correlations(params, mapper, cfg.corr_samples, ss_corr, cfg.warmup)
    return LinearProblem(cfg, mapper, params, w_star, R)


def verify_mean_convergence(cfg: AnalysisConfig, mu: float, trials: int = 200,
                            problem: LinearProblem | None = None, backend=None) -> ConvergenceReport:
    """Monte-Carlo check of the mean extended error under step size ``mu``.

    Every trial runs the full PSO-Fed recursion from zero models on fresh
    streams (same mapper, clients and ``w_star``). The extended error is
    averaged over trials; the report compares the final average to the
    initial error ``1 (x) w_star``.
    """
    if trials < 1:
        raise InvalidArgument("need at least one trial")
    if mu < 0:
        raise InvalidArgument(f"step size must be non-negative, got {mu}")
    problem = problem or linear_problem(cfg)
    K, D = cfg.num_clients, cfg.dim
    w_star = problem.w_star
    f = lambda X: problem.mapper.map_batch(X) @ w_star  # noqa: E731
    target_e = np.tile(w_star, (K + 1, 1))

    mean_err = np.zeros((cfg.rounds, K + 1, D))
    trace = np.empty((cfg.rounds, K + 1, D))
    diverged = 0
    trial_root = np.random.SeedSequence([cfg.seed, 1])
    for t, ss in enumerate(trial_root.spawn(trials)):
        ss_stream, ss_mask, ss_sel = ss.spawn(3)
        sources = make_sources(problem.params, cfg.window, ss_stream, cfg.warmup)
        drawn = [s.take(cfg.rounds, f) for s in sources]
        X = np.stack([x for x, _ in drawn], axis=1)
        Y = np.stack([y for _, y in drawn], axis=1)
        Z = problem.mapper.map_batch(X)
        masks = init_masks(cfg.scheme, D, cfg.share, cfg.tau, K, ss_mask)
        offsets = np.array([m.offset for m in masks], dtype=np.int64)
        sel = selection_schedule(int(ss_sel.generate_state(1)[0]), 0, cfg.rounds, K, cfg.selected)
        W = np.zeros((K, D))
        w = np.zeros(D)
        bad = kernel.simulate_chunk(W, w, Z, Y, sel, offsets, 0, cfg.share, cfg.tau, mu, True,
                                    trace_out=trace, backend=backend)
        if bad is not None:
            diverged += 1
            continue
        mean_err += target_e[None] - trace

    kept = trials - diverged
    if kept:
        mean_err /= kept
        traj = np.linalg.norm(mean_err.reshape(cfg.rounds, -1), axis=1)
    else:
        traj = np.full(cfg.rounds, np.inf)
    initial = float(np.linalg.norm(target_e))

    EA, EB = expected_matrices(cfg.scheme, D, cfg.share, cfg.tau, K, cfg.selected)
    T = recursion_matrix(EA, EB, extended_correlation(problem.R_blocks), mu)
    return ConvergenceReport(mu, problem.bound, trials, initial, float(traj[-1]), traj,
                             diverged, spectral_radius(T), float(np.linalg.norm(T, 2)))
