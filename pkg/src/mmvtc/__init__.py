"""Row-sparse MMV recovery with temporally correlated sources.

Library surface: problem/value types (`model`), iterative reweighted-l2
solvers (`solvers`), the exact block-space oracle (`block_oracle`),
synthetic instance generation (`synth`), support-recovery metrics
(`metrics`) and the Monte-Carlo sweep harness (`bench`). A FastAPI service
(`service`) and a CLI (`cli`) wrap the same functions.
"""

__version__ = "0.1.0"

from .block_oracle import (
    BlockModel,
    build_block_model,
    exact_b_update,
    exact_gamma_update,
    exact_x_update,
    exact_z_update,
    solve_exact,
)
from .errors import (
    EmptySet,
    InvalidSpec,
    NonFinite,
    NotPositiveDefinite,
    RecoveryError,
    SingularSystem,
)
from .metrics import TrialOutcome, failure_rate, is_failure, relative_mse, top_k_support
from .model import DEFAULT_CONFIG, Hyperparameters, MMVProblem, RecoveryResult, SolverConfig
from .solvers import (
    WeightVector,
    mahalanobis_row,
    reweighted_l2_step,
    solve_iter_l2,
    solve_mfocuss,
    solve_resbl_qm,
    solve_titer_l2,
    solve_tmfocuss,
    update_b,
    update_lambda,
    update_weights_resbl,
)
from .synth import GroundTruth, gen_ar1_row, gen_dictionary, gen_instance

__all__ = [
    "__version__",
    "MMVProblem",
    "Hyperparameters",
    "SolverConfig",
    "DEFAULT_CONFIG",
    "RecoveryResult",
    "WeightVector",
    "reweighted_l2_step",
    "mahalanobis_row",
    "update_b",
    "update_weights_resbl",
    "update_lambda",
    "solve_resbl_qm",
    "solve_mfocuss",
    "solve_tmfocuss",
    "solve_iter_l2",
    "solve_titer_l2",
    "BlockModel",
    "build_block_model",
    "exact_x_update",
    "exact_z_update",
    "exact_gamma_update",
    "exact_b_update",
    "solve_exact",
    "GroundTruth",
    "gen_dictionary",
    "gen_ar1_row",
    "gen_instance",
    "TrialOutcome",
    "top_k_support",
    "is_failure",
    "failure_rate",
    "relative_mse",
    "RecoveryError",
    "SingularSystem",
    "NotPositiveDefinite",
    "NonFinite",
    "InvalidSpec",
    "EmptySet",
]
