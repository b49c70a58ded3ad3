"""HTTP service wrapping the toolkit.

Experiments are long-running, so the package is exposed as a FastAPI
application; the CLI is a thin client of the same request/response models
and can either call these handlers in-process or POST to a running server.
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, field_validator

from . import __version__
from .harness import (
    DecaySeries,
    ExperimentConfig,
    beta_contrast,
    run_experiment,
    theoretical_rate,
    verify,
)
from .params import ModelParams
from .semigroup import kernel_factors

app = FastAPI(title="vewaves", version=__version__)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


class ParamsModel(BaseModel):
    nu: float = 1.0
    nu_prime: float = 0.0
    beta: float = 1.0
    gamma: float = 1.0

    def to_params(self) -> ModelParams:
        try:
            return ModelParams(self.nu, self.nu_prime, self.beta, self.gamma)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))


def _parse_p(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        value = float(value)
    p = float(value)
    if not p > 1:
        raise HTTPException(status_code=422, detail=f"p must lie in (1, inf], got {p}")
    return p


class LinearDecayRequest(BaseModel):
    params: ParamsModel = Field(default_factory=ParamsModel)
    kind: str = "density"  # density | potential | momentum
    amplitude: float = 1e-3
    radius: float = 2.0
    chi_amplitude: float = 5e-4
    chi_radius: float = 2.0
    t_start: float = 20.0
    t_end: float = 200.0
    n_samples: int = 13
    p_values: list = Field(default_factory=lambda: ["2", "4", "inf"])
    seed: int = 0

    @field_validator("kind")
    @classmethod
    def _kind_ok(cls, v):
        if v not in ("density", "potential", "momentum"):
            raise ValueError("kind must be density, potential or momentum")
        return v


class NonlinearDecayRequest(BaseModel):
    params: ParamsModel = Field(default_factory=ParamsModel)
    grid_n: int = 32
    grid_length: float = 8.0 * math.pi
    data_mode: str = "radial_potential"
    amplitude: float = 1e-2
    kappa: float = 1.0
    t_end: float = 3.0
    n_samples: int = 8
    p_values: list = Field(default_factory=lambda: ["2", "inf"])
    seed: int = 0


class VerifyRequest(BaseModel):
    suites: list | None = None
    params: ParamsModel = Field(default_factory=ParamsModel)
    seed: int = 0
    grid_n: int = 32


class KernelDumpRequest(BaseModel):
    params: ParamsModel = Field(default_factory=ParamsModel)
    k_values: list
    t_values: list


class ContrastRequest(BaseModel):
    params: ParamsModel = Field(default_factory=ParamsModel)
    t_start: float = 20.0
    t_end: float = 200.0
    n_samples: int = 11
    radius: float = 2.0


class DecaySeriesModel(BaseModel):
    mode: str
    times: list
    norms: dict
    exponents: dict
    targets: dict
    meta: dict


def _series_response(series: DecaySeries) -> DecaySeriesModel:
    return DecaySeriesModel(**series.as_dict())


# ---------------------------------------------------------------------------
# Endpoints
# ---------------------------------------------------------------------------


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.get("/rates/theoretical")
def rates_theoretical(p: str):
    value = _parse_p(p)
    return {"p": p, "exponent": theoretical_rate(value)}


@app.post("/verify")
def post_verify(req: VerifyRequest):
    try:
        report = verify(
            suites=req.suites, params=req.params.to_params(),
            seed=req.seed, grid_n=req.grid_n,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return report.as_dict()


@app.post("/kernel/dump")
def post_kernel_dump(req: KernelDumpRequest):
    params = req.params.to_params()
    rows = []
    for k in req.k_values:
        for t in req.t_values:
            if k < 0 or t < 0:
                raise HTTPException(status_code=422, detail="k and t must be nonnegative")
            f = kernel_factors(params, float(k), float(t))
            rows.append({
                "k": f.k, "t": f.t,
                "s_minus": f.s_minus, "s_plus": f.s_plus, "s_zero": f.s_zero,
                "c_minus": f.c_minus, "c_plus": f.c_plus, "c_zero": f.c_zero,
            })
    return {"rows": rows}


@app.post("/experiments/linear-decay", response_model=DecaySeriesModel)
def post_linear_decay(req: LinearDecayRequest):
    config = ExperimentConfig(
        mode="linear_radial",
        params=req.params.to_params(),
        radial_kind=req.kind,
        amplitude=req.amplitude,
        radius=req.radius,
        chi_amplitude=req.chi_amplitude,
        chi_radius=req.chi_radius,
        t_start=req.t_start,
        t_end=req.t_end,
        n_samples=req.n_samples,
        p_values=tuple(_parse_p(p) for p in req.p_values),
        seed=req.seed,
    )
    try:
        return _series_response(run_experiment(config))
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def nonlinear_config(req: NonlinearDecayRequest) -> ExperimentConfig:
    return ExperimentConfig(
        mode="nonlinear",
        params=req.params.to_params(),
        grid_n=req.grid_n,
        grid_length=req.grid_length,
        data_mode=req.data_mode,
        data_amplitude=req.amplitude,
        kappa=req.kappa,
        t_start=0.0,
        t_end=req.t_end,
        n_samples=req.n_samples,
        spacing="linear",
        p_values=tuple(_parse_p(p) for p in req.p_values),
        seed=req.seed,
        fit_window=None,
    )


@app.post("/experiments/nonlinear-decay", response_model=DecaySeriesModel)
def post_nonlinear_decay(req: NonlinearDecayRequest):
    try:
        return _series_response(run_experiment(nonlinear_config(req)))
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.post("/experiments/beta-contrast")
def post_beta_contrast(req: ContrastRequest):
    times = np.geomspace(req.t_start, req.t_end, req.n_samples)
    out = beta_contrast(req.params.to_params(), times=times, radius=req.radius)
    return {
        "elastic_exponent": out["elastic"]["fit"].exponent,
        "beta0_exponent": out["beta0"]["fit"].exponent,
        "exponent_gap": out["exponent_gap"],
        "heat_reference": out["heat_reference"],
        "times": list(map(float, times)),
        "elastic_norms": list(map(float, out["elastic"]["norms"])),
        "beta0_norms": list(map(float, out["beta0"]["norms"])),
    }
