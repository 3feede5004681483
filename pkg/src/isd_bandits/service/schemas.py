"""Pydantic request/response models for the experiment service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class InstanceModel(BaseModel):
    p: int
    p_res: int
    K: int = 5
    T0: int
    T: int
    noise_sigma: float = 1.0
    cov_cycles: float = 1.0


class PolicyModel(BaseModel):
    variant: Literal["linucb", "sw-linucb", "d-linucb", "random", "isd"]
    id: Optional[str] = None
    lam: float = 0.1
    eta: Optional[float] = None
    sigma: Optional[float] = None
    window: Optional[int] = None
    discount: float = 0.999
    oracle: Literal["none", "subspaces", "subspaces_and_beta"] = "none"
    m: int = 8
    coupling_tol: Optional[float] = None
    invariance_tol: Optional[float] = None
    delta_pi_const: float = 1.0
    recompute: bool = False
    freeze_basis: bool = False


class SweepModel(BaseModel):
    param: Literal["p", "p_res", "K", "T0", "T", "noise_sigma"]
    values: list[float]


class ExperimentConfigModel(BaseModel):
    experiment: str = "experiment"
    instance: InstanceModel
    policies: list[PolicyModel]
    n_repetitions: int = 20
    root_seed: int = 0
    sweep: Optional[SweepModel] = None
    fixed_instance: bool = False
    threads: Optional[int] = None


class RunRequest(BaseModel):
    config: ExperimentConfigModel
    out_dir: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    include_records: bool = False


class FailureModel(BaseModel):
    sweep_value: Optional[float]
    repetition: int
    policy_id: str
    message: str


class AggregateRow(BaseModel):
    policy: str
    sweep_value: Optional[float]
    t: int
    n: int
    mean_inst: float
    std_inst: float
    mean_cum: float
    std_cum: float


class RunResponse(BaseModel):
    status: Literal["ok", "partial"]
    rows: int
    paths: list[str] = Field(default_factory=list)
    failures: list[FailureModel] = Field(default_factory=list)
    aggregates: list[AggregateRow] = Field(default_factory=list)
    records: Optional[list[dict]] = None


class FigureInfo(BaseModel):
    fig_id: str
    description: str


class InvariantRadiusRequest(BaseModel):
    T0: int
    eta: float
    L: float
    M: float
    sigma: float
    lambda0: float
    p_inv: int
    delta_pi_bound: float = 0.0
    oracle_subspaces: bool = True


class ResidualRadiusRequest(BaseModel):
    t: int
    eta: float
    L: float
    M: float
    sigma: float
    lam: float
    p_res: int
    delta_pi_bound: float = 0.0
    beta_err_2norm: float = 0.0


class RadiusResponse(BaseModel):
    radius: float


class HealthResponse(BaseModel):
    status: str
    version: str
