"""Experiment configuration, multi-run learning curves and CSV output."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernel
from .algorithms import ALGORITHMS, selection_schedule
from .data import DataRanges, TestSet, as_seed_sequence, build_test_set, draw_client_params, make_sources
from .errors import DimensionMismatch, DivergenceError, InvalidArgument
from .masks import SCHEMES, init_masks
from .rff import new_mapper

log = logging.getLogger(__name__)

CSV_COLUMNS = ("n", "mse_db", "scalars_up", "scalars_down")


@dataclass(frozen=True)
class ExperimentConfig:
    num_clients: int = 100
    dim: int = 200
    window: int = 4
    share: int = 40
    shift: int | None = None  # defaults to ``share``
    selected: int = 4
    step: float = 0.75
    scheme: str = "coordinated"
    algorithm: str = "pso-fed"
    rounds: int = 2000
    runs: int = 50
    seed: int = 0
    bandwidth: float = 1.0
    test_per_client: int = 20
    noiseless_test: bool = True
    ranges: DataRanges = field(default_factory=DataRanges)
    warmup: int = 100
    workers: int = 1
    chunk: int = 100

    def __post_init__(self):
        if self.ranges is not None and isinstance(self.ranges, dict):
            object.__setattr__(self, "ranges", DataRanges(**{k: tuple(v) for k, v in self.ranges.items()}))
        self.validate()

    @property
    def tau(self) -> int:
        return self.shift if self.shift is not None else max(self.share, 1)

    @property
    def label(self) -> str:
        if self.algorithm == "online-fed":
            return "online-fed"
        return f"pso-fed/M={self.share}/{self.scheme}"

    def validate(self):
        for name in ("num_clients", "dim", "window", "selected", "rounds", "runs",
                     "test_per_client", "workers", "chunk"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be positive, got {getattr(self, name)}")
        if self.window < 4:
            raise InvalidArgument(f"the regression target reads 4 taps; window must be >= 4, got {self.window}")
        if not 0 <= self.share <= self.dim:
            raise InvalidArgument(f"share M={self.share} must lie in [0, D={self.dim}]")
        if not 1 <= self.tau <= self.dim:
            raise InvalidArgument(f"shift {self.tau} must lie in [1, D={self.dim}]")
        if self.selected > self.num_clients:
            raise InvalidArgument(f"cannot select {self.selected} of {self.num_clients} clients")
        if not self.step > 0:
            raise InvalidArgument(f"step size must be positive, got {self.step}")
        if not self.bandwidth > 0:
            raise InvalidArgument(f"bandwidth must be positive, got {self.bandwidth}")
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgument(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")

    @property
    def per_round_traffic(self) -> int:
        """Scalars sent each way per round."""
        per_client = self.dim if self.algorithm == "online-fed" else self.share
        return per_client * self.selected

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tau"] = self.tau
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


PRESETS = {
    "full": ExperimentConfig(num_clients=100, dim=200, share=40, selected=4, step=0.75,
                              rounds=2000, runs=500),
    "desk": ExperimentConfig(num_clients=20, dim=64, share=13, selected=4, step=0.75,
                             rounds=1000, runs=50),
}


@dataclass
class MetricsRecord:
    round: int
    mse: float
    mse_db: float
    scalars_up: float
    scalars_down: float
    label: str = ""
    share: int = 0
    scheme: str = ""


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    mse: np.ndarray  # linear MSE averaged over kept runs, one per round
    scalars_up: np.ndarray
    scalars_down: np.ndarray
    excluded: list = field(default_factory=list)  # (run, round, client) of diverged runs
    label: str = ""

    def __post_init__(self):
        if not self.label:
            self.label = self.config.label

    @property
    def rounds(self) -> int:
        return len(self.mse)

    @property
    def mse_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.mse)

    def records(self) -> list[MetricsRecord]:
        db = self.mse_db
        return [MetricsRecord(n + 1, float(self.mse[n]), float(db[n]), float(self.scalars_up[n]),
                              float(self.scalars_down[n]), self.label, self.config.share,
                              self.config.scheme)
                for n in range(self.rounds)]

    def metadata(self) -> dict:
        return {
            "label": self.label,
            "config": self.config.to_dict(),
            "runs_kept": self.config.runs - len(self.excluded),
            "excluded_runs": len(self.excluded),
            "excluded": [{"run": r, "round": n, "client": k} for r, n, k in self.excluded],
            "backend": kernel.BACKEND,
        }


def eval_mse(w, test: TestSet) -> float:
    """Mean squared residual of the linear model ``w`` on the test set."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (test.Z.shape[1],):
        raise DimensionMismatch(f"model shape {w.shape} vs test features {test.Z.shape}")
    r = test.y - test.Z @ w
    return float(r @ r) / test.size


def _run_seeds(cfg: ExperimentConfig, run: int) -> dict:
    # fixed layout so online-fed / pso-fed / any M see the same data for a seed
    ss = np.random.SeedSequence([cfg.seed, run])
    mapper_ss, params_ss, stream_ss, test_ss, mask_ss, sel_ss = ss.spawn(6)
    return dict(mapper=mapper_ss, params=params_ss, streams=stream_ss, test=test_ss,
                masks=mask_ss, selector=int(sel_ss.generate_state(1)[0]))


def simulate_run(cfg: ExperimentConfig, run: int, backend=None) -> np.ndarray:
    """One independent run; returns linear test MSE per round.

    Raises :class:`DivergenceError` if any model blows up.
    """
    seeds = _run_seeds(cfg, run)
    K, D, L = cfg.num_clients, cfg.dim, cfg.window
    mapper = new_mapper(L, D, cfg.bandwidth, seeds["mapper"])
    params = draw_client_params(K, seeds["params"], cfg.ranges)
    sources = make_sources(params, L, seeds["streams"], cfg.warmup)
    test = build_test_set(params, mapper, cfg.test_per_client, cfg.noiseless_test,
                          seeds["test"], cfg.warmup)
    masks = init_masks(cfg.scheme, D, cfg.share, cfg.tau, K, seeds["masks"])
    offsets = np.array([m.offset for m in masks], dtype=np.int64)

    N = test.size
    G = test.Z.T @ test.Z / N
    gb = test.Z.T @ test.y / N
    gc = float(test.y @ test.y) / N

    W = np.zeros((K, D))
    w = np.zeros(D)
    mse = np.empty(cfg.rounds)
    partial = cfg.algorithm == "pso-fed"
    for start in range(0, cfg.rounds, cfg.chunk):
        n = min(cfg.chunk, cfg.rounds - start)
        drawn = [s.take(n) for s in sources]
        X = np.stack([x for x, _ in drawn], axis=1)  # (n, K, L)
        Y = np.stack([y for _, y in drawn], axis=1)
        sel = selection_schedule(seeds["selector"], start, n, K, cfg.selected)
        if partial:
            Z = mapper.map_batch(X)
        else:
            # online-fed never reads features of unselected clients
            Z = np.zeros((n, K, D))
            rows = np.arange(n)[:, None]
            Z[rows, sel] = mapper.map_batch(X[rows, sel])
        bad = kernel.simulate_chunk(W, w, Z, Y, sel, offsets, start, cfg.share, cfg.tau,
                                    cfg.step, partial, G, gb, gc, mse[start:start + n],
                                    backend=backend)
        if bad is not None:
            raise DivergenceError(*bad)
    return mse


def _run_or_flag(args):
    cfg, run, backend = args
    try:
        return run, simulate_run(cfg, run, backend), None
    except DivergenceError as exc:
        return run, None, (run, exc.round, exc.client)


def run_experiment(cfg: ExperimentConfig, backend=None) -> ExperimentResult:
    """Average the learning curve over ``cfg.runs`` independent runs.

    Linear MSE is averaged first and converted to dB afterwards. Diverged
    runs are excluded and listed in the result metadata.
    """
    jobs = [(cfg, r, backend) for r in range(cfg.runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_run_or_flag, jobs))
    else:
        outcomes = [_run_or_flag(j) for j in jobs]
    outcomes.sort(key=lambda o: o[0])

    total = np.zeros(cfg.rounds)
    kept = 0
    excluded = []
    for run, mse, flag in outcomes:
        if flag is not None:
            excluded.append(flag)
            log.warning("run %d diverged at round %d (client %s); excluded", *flag)
            continue
        total += mse
        kept += 1
    if kept == 0:
        r, n, k = excluded[0]
        raise DivergenceError(n, k, f"all {cfg.runs} runs diverged (first: run {r}, round {n})")
    n = np.arange(1, cfg.rounds + 1, dtype=np.float64)
    traffic = cfg.per_round_traffic * n
    return ExperimentResult(cfg, total / kept, traffic, traffic.copy(), excluded)


def steady_state_db(result: ExperimentResult, fraction: float = 0.1) -> float:
    """dB of the mean linear MSE over the final ``fraction`` of rounds."""
    tail = max(1, int(math.ceil(result.rounds * fraction)))
    return float(10.0 * np.log10(result.mse[-tail:].mean()))


def write_result(result: ExperimentResult, path) -> Path:
    """Write ``path`` (CSV) and ``path.meta.json`` alongside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    db = result.mse_db
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for n in range(result.rounds):
            writer.writerow([n + 1, repr(float(db[n])), int(result.scalars_up[n]),
                             int(result.scalars_down[n])])
    with open(meta_path(path), "w") as fh:
        json.dump(result.metadata(), fh, indent=2, sort_keys=True)
    return path


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


@dataclass
class Table:
    """A learning curve loaded back from CSV."""
    label: str
    columns: dict  # column name -> list of values (rounds ascending)

    @property
    def rounds(self) -> int:
        return len(self.columns["n"])

    @classmethod
    def from_result(cls, result: ExperimentResult) -> "Table":
        return cls(result.label, {
            "n": list(range(1, result.rounds + 1)),
            "mse_db": [float(v) for v in result.mse_db],
            "scalars_up": [int(v) for v in result.scalars_up],
            "scalars_down": [int(v) for v in result.scalars_down],
        })


def read_table(path) -> Table:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {c: [] for c in CSV_COLUMNS}
    for row in rows:
        cols["n"].append(int(row["n"]))
        cols["mse_db"].append(float(row["mse_db"]))
        cols["scalars_up"].append(int(row["scalars_up"]))
        cols["scalars_down"].append(int(row["scalars_down"]))
    label = path.stem
    mp = meta_path(path)
    if mp.exists():
        with open(mp) as fh:
            label = json.load(fh).get("label", label)
    return Table(label, cols)


def compare_runs(tables: Sequence) -> tuple[list[str], list[list]]:
    """Merge curves into one wide table: ``n`` then one column group per curve.

    Accepts :class:`Table` or :class:`ExperimentResult` items. Returns the
    header and the rows.
    """
    tables = [Table.from_result(t) if isinstance(t, ExperimentResult) else t for t in tables]
    if not tables:
        raise InvalidArgument("nothing to compare")
    N = tables[0].rounds
    for t in tables[1:]:
        if t.rounds != N:
            raise InvalidArgument(f"round counts differ: {tables[0].label} has {N}, {t.label} has {t.rounds}")
    if len(tables) == 1:
        t = tables[0]
        return list(CSV_COLUMNS), [[t.columns[c][i] for c in CSV_COLUMNS] for i in range(N)]

    seen = {}
    header = ["n"]
    for t in tables:
        label = t.label
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        header += [f"{label}:{c}" for c in CSV_COLUMNS[1:]]
    rows = []
    for i in range(N):
        row = [tables[0].columns["n"][i]]
        for t in tables:
            row += [t.columns[c][i] for c in CSV_COLUMNS[1:]]
        rows.append(row)
    return header, rows


def write_table(header, rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def dump_streams(cfg: ExperimentConfig, path, run: int = 0) -> Path:
    """Write the raw training streams of one run as CSV (client, n, x0..x{L-1}, y)."""
    seeds = _run_seeds(cfg, run)
    params = draw_client_params(cfg.num_clients, seeds["params"], cfg.ranges)
    sources = make_sources(params, cfg.window, seeds["streams"], cfg.warmup)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["client", "n"] + [f"x{i}" for i in range(cfg.window)] + ["y"])
        for k, src in enumerate(sources):
            X, y = src.take(cfg.rounds)
            for n in range(cfg.rounds):
                writer.writerow([k, n + 1] + [repr(float(v)) for v in X[n]] + [repr(float(y[n]))])
    return path
