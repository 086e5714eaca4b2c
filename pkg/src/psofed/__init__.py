"""Partial-sharing online federated learning (PSO-Fed) simulator.

Clients learn a kernel regression model with RFF-based LMS on streaming data
and exchange only ``M`` of ``D`` model coordinates with the server per round.
Online-Fed (full sharing, selected clients only) is included as a baseline.
"""
from .errors import DimensionMismatch, DivergenceError, InvalidArgument
from .rff import RffMapper, new_mapper
from .masks import SelectionMask, coordinated_init, init_masks, uncoordinated_init
from .algorithms import (
    ClientState,
    ServerState,
    online_fed_aggregate,
    online_fed_client_update,
    psofed_aggregate,
    psofed_nonparticipant_update,
    psofed_participant_update,
    run_round,
    select_clients,
)
from .data import ClientDataSource, ClientParams, DataRanges, TestSet, build_test_set, draw_client_params, target
from .harness import ExperimentConfig, ExperimentResult, MetricsRecord, compare_runs, eval_mse, run_experiment
from .kernel import BACKEND

__version__ = "0.1.0"
