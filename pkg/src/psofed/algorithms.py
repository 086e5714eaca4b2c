"""Client updates and server aggregation for Online-Fed and PSO-Fed.

This is the readable per-client reference path. Full experiments run through
:mod:`psofed.kernel`, which implements the same round on stacked arrays and is
checked against this module in the test-suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DivergenceError, InvalidArgument
from .masks import SelectionMask

ALGORITHMS = ("online-fed", "pso-fed")

# models with norm at or above this are treated as diverged
DIVERGENCE_NORM = 1e9


@dataclass
class ClientState:
    id: int
    w_local: np.ndarray
    mask: SelectionMask
    step: float
    last_error: float = 0.0


@dataclass
class ServerState:
    w_global: np.ndarray
    round: int = 0
    seed: int = 0


@dataclass
class RoundStats:
    """Bookkeeping for one global iteration."""
    round: int
    selected: np.ndarray
    scalars_up: int
    scalars_down: int
    errors: np.ndarray = field(repr=False, default=None)


def check_finite(w: np.ndarray, round: int, client=None) -> None:
    norm = np.linalg.norm(w)
    if not norm < DIVERGENCE_NORM:
        raise DivergenceError(round, client)


def select_clients(server: ServerState, num_clients: int, count: int) -> np.ndarray:
    """Uniform random subset of ``count`` client ids for the server's current round.

    The draw depends only on ``(server.seed, server.round)``.
    """
    return selection_for_round(server.seed, server.round, num_clients, count)


def selection_for_round(seed: int, round: int, num_clients: int, count: int) -> np.ndarray:
    if not 1 <= count <= num_clients:
        raise InvalidArgument(f"need 1 <= count <= K, got count={count}, K={num_clients}")
    rng = np.random.default_rng([int(seed), int(round)])
    return np.sort(rng.choice(num_clients, size=count, replace=False))


def selection_schedule(seed: int, start: int, rounds: int, num_clients: int, count: int) -> np.ndarray:
    """Selected ids for rounds ``start .. start+rounds-1``, shape (rounds, count)."""
    out = np.empty((rounds, count), dtype=np.int64)
    for i in range(rounds):
        out[i] = selection_for_round(seed, start + i, num_clients, count)
    return out


def _lms_step(client: ClientState, base: np.ndarray, z, y, round: int) -> ClientState:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != base.shape:
        raise DimensionMismatch(f"feature shape {z.shape} does not match model {base.shape}")
    err = float(y - base @ z)
    w = base + (client.step * err) * z
    check_finite(w, round, client.id)
    return replace(client, w_local=w, last_error=err)


def online_fed_client_update(client: ClientState, w_global, z, y, round: int = 0) -> ClientState:
    """One SGD step started from the global model."""
    return _lms_step(client, np.asarray(w_global, dtype=np.float64), z, y, round)


def online_fed_aggregate(server: ServerState, updates: Sequence[np.ndarray]) -> ServerState:
    if len(updates) == 0:
        raise InvalidArgument("cannot aggregate an empty list of updates")
    acc = np.zeros_like(server.w_global, dtype=np.float64)
    for u in updates:
        acc = acc + u
    w = acc / len(updates)
    check_finite(w, server.round)
    return replace(server, w_global=w, round=server.round + 1)


def psofed_participant_update(client: ClientState, masked_global, z, y, round: int = 0) -> ClientState:
    """Selected-client update.

    ``masked_global`` is what the server sent: the global model on the
    client's active coordinates (other entries are ignored). The client fills
    the rest from its own model before taking the LMS step.
    """
    masked_global = np.asarray(masked_global, dtype=np.float64)
    if masked_global.shape != client.w_local.shape:
        raise DimensionMismatch(
            f"global slice shape {masked_global.shape} vs local {client.w_local.shape}")
    blend = np.where(client.mask.indicator, masked_global, client.w_local)
    return _lms_step(client, blend, z, y, round)


def psofed_nonparticipant_update(client: ClientState, z, y, round: int = 0) -> ClientState:
    return _lms_step(client, client.w_local, z, y, round)


def psofed_aggregate(server: ServerState, uploads: Sequence[tuple[SelectionMask, np.ndarray]]) -> ServerState:
    """Masked averaging.

    Each upload is ``(mask, masked model)`` with the client's already-shifted
    mask. Coordinates a client did not send are filled with the server's
    pre-round value before averaging.
    """
    if len(uploads) == 0:
        raise InvalidArgument("cannot aggregate an empty list of uploads")
    w_old = server.w_global
    acc = np.zeros_like(w_old, dtype=np.float64)
    for mask, w_k in uploads:
        if mask.dim != w_old.shape[0]:
            raise DimensionMismatch(f"mask dim {mask.dim} vs model dim {w_old.shape[0]}")
        acc = acc + np.where(mask.indicator, w_k, w_old)
    w = acc / len(uploads)
    check_finite(w, server.round)
    return replace(server, w_global=w, round=server.round + 1)


def run_round(server: ServerState, clients: Sequence[ClientState], samples,
              algorithm: str = "pso-fed", count: int = 1,
              selected=None) -> tuple[ServerState, list[ClientState], RoundStats]:
    """Execute one global iteration.

    ``samples`` holds one fresh ``(z, y)`` per client. Every client's mask
    advances by one shift whether or not it was selected. ``selected`` may
    override the server's own draw.
    """
    if algorithm not in ALGORITHMS:
        raise InvalidArgument(f"unknown algorithm {algorithm!r}")
    K = len(clients)
    if len(samples) != K:
        raise InvalidArgument(f"need one sample per client, got {len(samples)} for {K}")
    if selected is None:
        selected = select_clients(server, K, count)
    selected = np.asarray(selected, dtype=np.int64)
    if selected.size == 0:
        raise InvalidArgument("at least one client must be selected")
    chosen = set(selected.tolist())
    n = server.round
    w_g = server.w_global
    D = w_g.shape[0]

    new_clients = []
    if algorithm == "online-fed":
        updates = []
        for c, (z, y) in zip(clients, samples):
            if c.id in chosen:
                c = online_fed_client_update(c, w_g, z, y, n)
                updates.append(c.w_local)
            new_clients.append(replace(c, mask=c.mask.advance()))
        server = online_fed_aggregate(server, updates)
        per_client = D
    else:
        uploads = []
        for c, (z, y) in zip(clients, samples):
            if c.id in chosen:
                c = psofed_participant_update(c, c.mask.apply(w_g), z, y, n)
            else:
                c = psofed_nonparticipant_update(c, z, y, n)
            c = replace(c, mask=c.mask.advance())
            if c.id in chosen:
                uploads.append((c.mask, c.mask.apply(c.w_local)))
            new_clients.append(c)
        server = psofed_aggregate(server, uploads)
        per_client = clients[0].mask.count
    traffic = per_client * len(selected)
    stats = RoundStats(n, selected, traffic, traffic,
                       np.array([c.last_error for c in new_clients]))
    return server, new_clients, stats


def make_clients(K: int, D: int, step: float, masks: Sequence[SelectionMask]) -> list[ClientState]:
    if len(masks) != K:
        raise InvalidArgument(f"need {K} masks, got {len(masks)}")
    return [ClientState(k, np.zeros(D), masks[k], float(step)) for k in range(K)]
