"""Request and response models for the HTTP endpoints."""

from typing import Optional

from pydantic import BaseModel, Field


class ThreatSpec(BaseModel):
    """Per-feature perturbation tokens plus the classes that may move."""

    tokens: list[str]
    attacked_classes: list[int] = [0, 1]


class FitOptions(BaseModel):
    max_depth: int = Field(4, ge=0)
    min_samples_split: int = Field(2, ge=2)
    rho: float = Field(1.0, ge=0.0, le=1.0)
    seed: int = 0


class FitRequest(BaseModel):
    rows: list[list[float]]
    labels: list[int]
    feature_names: Optional[list[str]] = None
    categorical: list[int] = []
    threat: Optional[ThreatSpec] = None
    options: FitOptions = FitOptions()
    scale: bool = True


class FitSummary(BaseModel):
    depth: int
    n_nodes: int
    n_leaves: int
    train_accuracy: float
    train_adversarial_accuracy: float
    fit_seconds: float


class FitResponse(BaseModel):
    model: dict
    summary: FitSummary
    config: dict


class EvaluateRequest(BaseModel):
    model: dict
    rows: list[list[float]]
    labels: list[int]
    threat: Optional[ThreatSpec] = None
    report: bool = False


class EvaluateResponse(BaseModel):
    accuracy: float
    adversarial_accuracy: float
    n_samples: int
    records: Optional[list[dict]] = None
    config: dict


class CrossValidateRequest(FitRequest):
    folds: int = Field(5, ge=2)
    attack: Optional[ThreatSpec] = None


class FoldMetrics(BaseModel):
    fold: int
    accuracy: float
    adversarial_accuracy: float
    fit_seconds: float


class CrossValidateResponse(BaseModel):
    folds: list[FoldMetrics]
    mean_accuracy: float
    std_accuracy: float
    mean_adversarial_accuracy: float
    std_adversarial_accuracy: float
    config: dict


class GridRequest(BaseModel):
    model: dict
    resolution: int = Field(100, ge=1)
    features: Optional[tuple[int, int]] = None


class GridResponse(BaseModel):
    feature_x: int
    feature_y: int
    rows: list[tuple[float, float, int]]
