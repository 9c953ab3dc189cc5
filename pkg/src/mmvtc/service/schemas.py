"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..model import SolverConfig

AlgorithmName = Literal[
    "resbl_qm", "mfocuss", "tmfocuss", "iter_l2", "titer_l2", "exact_oracle"
]

Matrix = list[list[float]]


class SolverOptions(BaseModel):
    """Optional overrides of the solver defaults; unset fields keep them."""

    max_iter: Optional[int] = None
    tol: Optional[float] = None
    prune_threshold: Optional[float] = None
    p: Optional[float] = None
    epsilon_initial: Optional[float] = None
    epsilon_floor: Optional[float] = None
    epsilon_factor: Optional[float] = None
    b_ridge: Optional[float] = None
    lambda_mode: Optional[Literal["fixed", "learned"]] = None
    lambda_freeze_after: Optional[int] = None
    learn_b: Optional[bool] = None

    def to_config(self) -> SolverConfig:
        overrides = {k: v for k, v in self.model_dump().items() if v is not None}
        return SolverConfig(**overrides)


class SolveRequest(BaseModel):
    phi: Matrix = Field(description="dictionary, N rows of M entries")
    y: Matrix = Field(description="measurements, N rows of L entries")
    algorithm: AlgorithmName = "resbl_qm"
    noise_level: Optional[float] = Field(
        default=None, description="known noise variance; None means unknown"
    )
    options: Optional[SolverOptions] = None


class SolveResponse(BaseModel):
    x_hat: Matrix
    gamma: list[float]
    b: Matrix
    noise_var: float
    iterations: int
    converged: bool
    objective_trace: list[float]


class GenRequest(BaseModel):
    n: int
    m: int
    l: int
    k: int
    beta_low: float = 0.5
    beta_high: float = 1.0
    snr_db: Optional[float] = Field(default=25.0, description="None means noiseless")
    seed: int = 0


class GenResponse(BaseModel):
    phi: Matrix
    y: Matrix
    x_gen: Matrix
    support: list[int]
    betas: list[float]
    snr_db: Optional[float]
    noise_level: float
    seed: int


class SweepRequest(BaseModel):
    axis: Literal["k", "m_over_n"]
    values: list[float]
    n: int = 25
    m: Optional[int] = 100
    l: int = 3
    k: Optional[int] = None
    snr_db: Optional[float] = 25.0
    beta_low: float = 0.5
    beta_high: float = 1.0
    algorithms: list[AlgorithmName] = [
        "resbl_qm", "mfocuss", "tmfocuss", "iter_l2", "titer_l2"
    ]
    trials: int = 100
    base_seed: int = 0
    options: Optional[SolverOptions] = None
    workers: int = Field(default=1, ge=1, description="trial-level worker processes")


class SweepCellModel(BaseModel):
    axis_value: float
    algorithm: str
    trials: int
    failures: int
    failure_rate: float
    mean_iterations: float
    mean_runtime_ms: float


class SweepResponse(BaseModel):
    axis: str
    base_seed: int
    cells: list[SweepCellModel]


class HealthResponse(BaseModel):
    status: str
    version: str


class AlgorithmsResponse(BaseModel):
    algorithms: list[str]
