"""Run configuration: one JSON document, validated in full before anything is computed."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError

PRESETS = ("figure1", "gaussian-bm", "cauchy-bm", "unkilled-bm")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Strict):
    key: str
    params: dict[str, Any] = Field(default_factory=dict)


class KillingSection(_Strict):
    K_override: float | None = None
    search_box: list[float] | list[list[float]] | None = None
    tol: float = Field(1e-10, gt=0)
    grid_points: int = Field(401, ge=3)
    constant_rate: float | None = Field(None, ge=0)


class SchemeSection(_Strict):
    dt: float = Field(0.01, gt=0)
    scheme: Literal["euler", "exact_ou", "exact_bm"] = "euler"
    bridge_levels: int = Field(0, ge=0, le=16)


class NormalSampler(_Strict):
    sampler: Literal["normal"]
    mean: float | list[float]
    var: float | list[float]


class EnsembleSection(_Strict):
    replicas: int = Field(10_000, ge=1)
    horizon: float = Field(20.0, gt=0)
    checkpoints: list[float] = Field(default_factory=lambda: [1.0, 5.0, 10.0, 20.0])
    seed: int = Field(0, ge=0, lt=2**64)
    x0: Union[float, list[float], Literal["target"], NormalSampler] = 0.0
    bins: Union[Literal["fd", "auto", "sturges", "scott", "sqrt"], int] = "fd"
    chunk_size: int = Field(1 << 17, ge=1)
    export_paths: int = Field(0, ge=0)
    rate_window: list[float] | None = None
    mean_window: list[float] | None = None

    @field_validator("checkpoints")
    @classmethod
    def _increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])) or any(t < 0 for t in v):
            raise ValueError("checkpoints must be non-negative and strictly increasing")
        return v

    @model_validator(mode="after")
    def _within_horizon(self):
        if self.checkpoints and self.checkpoints[-1] > self.horizon:
            raise ValueError("checkpoints must not exceed the horizon")
        for name in ("rate_window", "mean_window"):
            w = getattr(self, name)
            if w is not None and (len(w) != 2 or w[0] >= w[1]):
                raise ValueError(f"{name} must be [t_lo, t_hi] with t_lo < t_hi")
        return self


class SpectralSection(_Strict):
    lo: float = -20.0
    hi: float = 15.0
    n: int = Field(2000, ge=3)
    k: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _order(self):
        if not self.hi > self.lo:
            raise ValueError("spectral grid needs hi > lo")
        if self.k > self.n:
            raise ValueError("k must not exceed n")
        return self


class KappaGridSection(_Strict):
    lo: float = -4.0
    hi: float = 4.0
    n: int = Field(81, ge=2)

    @model_validator(mode="after")
    def _order(self):
        if not self.hi > self.lo:
            raise ValueError("kappa grid needs hi > lo")
        return self


class LangevinSection(_Strict):
    replicas: int = Field(1000, ge=1)
    horizon: float = Field(200.0, gt=0)
    burn_in: float = Field(0.5, ge=0, lt=1)
    x0: float | list[float] | None = None


class ChecksSection(_Strict):
    quad_box: list[float] | list[list[float]] | None = None
    quad_tol: float = Field(1e-10, gt=0)


class RunConfig(_Strict):
    model: ModelSection
    killing: KillingSection = Field(default_factory=KillingSection)
    scheme: SchemeSection = Field(default_factory=SchemeSection)
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    spectral: SpectralSection = Field(default_factory=SpectralSection)
    kappa_grid: KappaGridSection = Field(default_factory=KappaGridSection)
    langevin: LangevinSection = Field(default_factory=LangevinSection)
    checks: ChecksSection = Field(default_factory=ChecksSection)
    out: str = "qsmc-out"
    workers: int = Field(1, ge=1)

    def with_overrides(self, **changes) -> "RunConfig":
        """Apply CLI overrides (``seed``, ``workers``, ``out``) and revalidate."""
        data = self.model_dump()
        if changes.get("seed") is not None:
            data["ensemble"]["seed"] = changes["seed"]
        for key in ("workers", "out"):
            if changes.get(key) is not None:
                data[key] = changes[key]
        return parse_config(data)


def _describe(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: Any) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config: {_describe(exc)}") from None


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(data)


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {list(PRESETS)}")
    text = resources.files("qsmc.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return parse_config(json.loads(text))
