"""Request/response models of the aggregator service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from ..harness import ScenarioConfig


class ScenarioModel(BaseModel):
    """Wire mirror of the scenario configuration."""

    buildings: list[tuple[str, int]] = Field(
        default=[("A1", 1), ("A2", 1), ("A3", 1),
                 ("B1", 1), ("B2", 1), ("B3", 1)])
    season: Literal["winter", "summer"] = "winter"
    n1: int = 96
    n2: int = 48
    step_minutes: int = 30
    uncertainty: Literal["PC", "PEC"] = "PEC"
    eps: float = 0.3
    t_hours: float = 2.0
    granularity: Literal["daily", "hourly", "per_step"] = "daily"
    symmetric: bool = True
    aggregate_products: bool = False
    price_profile: Literal["flat", "two_tier"] = "flat"
    tariff: float = 0.1465
    ratio: float = 1.1
    signal_source: Literal["synthetic", "file"] = "synthetic"
    signal_seed: int = 2024
    signal_path: str | None = None
    days: int = 7
    master_seed: int = 0
    model_order: int = 4
    comfort: Literal["standard", "relaxed"] = "standard"

    def to_config(self) -> ScenarioConfig:
        data = self.model_dump()
        data["buildings"] = tuple(tuple(b) for b in data["buildings"])
        return ScenarioConfig(**data)

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "ScenarioModel":
        return cls(**cfg.to_dict())


class ScheduleRequest(BaseModel):
    scenario: ScenarioModel = Field(default_factory=ScenarioModel)
    oracle: bool = False


class ScheduleResponse(BaseModel):
    objective: float
    method: str
    average_capacity_kw: float
    committed_capacity_kw: float
    schedule_csv: str
    summary_csv: str
    oracle_ok: bool | None = None
    oracle_worst_margin: float | None = None


class SimulateRequest(BaseModel):
    scenario: ScenarioModel = Field(default_factory=ScenarioModel)
    oracle: bool = False
    mc_signals: int = 0
    signal_csv: str | None = None
    include_log: bool = True


class SimulateResponse(BaseModel):
    daily_capacity_kw: list[float]
    average_capacity_kw: float
    energy_kwh: float
    baseline_energy_kwh: float
    consumption_delta_pct: float
    comfort_violations: int
    comfort_violations_occupied: int
    input_violations: int
    projection_clips: int
    summary_csv: str
    allocation_csv: str
    schedule_csv: str
    log_csv: str | None = None
    report_text: str
    mc_runs: int | None = None
    mc_comfort_violations: int | None = None
    mc_input_violations: int | None = None


class BidSweepRequest(BaseModel):
    scenario: ScenarioModel = Field(default_factory=ScenarioModel)
    ratios: list[float]


class BidSweepResponse(BaseModel):
    ratio: list[float]
    pc_kw: list[float]
    pec_kw: list[float]
    csv: str


class TeGridRequest(BaseModel):
    scenario: ScenarioModel = Field(default_factory=ScenarioModel)
    t_hours: list[float] = Field(default=[1.0, 2.0, 4.0, 6.0, 8.0, 12.0])
    eps: list[float] = Field(
        default=[0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5])


class TeGridResponse(BaseModel):
    t_hours: list[float]
    eps: list[float]
    capacity_kw: list[list[float]]
    csv: str


class AnalyzeSignalRequest(BaseModel):
    signal_csv: str | None = None
    seed: int = 2024
    n_days: int = 14
    sample_period_s: float = 10.0
    t_hours: list[float] = Field(default=[1.0, 2.0, 4.0, 6.0, 8.0, 12.0])
    filter_order: int = 3
    ripple_db: float = 0.5


class AnalyzeSignalResponse(BaseModel):
    rows: list[dict]
    csv: str


class FilterSignalRequest(BaseModel):
    signal_csv: str | None = None
    seed: int = 2024
    n_days: int = 2
    sample_period_s: float = 10.0
    t_hours: float = 2.0
    filter_order: int = 3
    ripple_db: float = 0.5
    include_signals: bool = False


class FilterSignalResponse(BaseModel):
    order: int
    edge_hz: float
    ripple_db: float
    b: list[float]
    a: list[float]
    stable: bool
    lf_clip_count: int
    hf_clip_count: int
    hf_bias: dict[str, float]
    lf_csv: str | None = None
    hf_csv: str | None = None
