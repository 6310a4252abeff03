"""Data files and experiment configuration.

Data files
    ``.csv``  optional header row, columns ``x1..xd, y``, '.' decimals.
              Malformed rows are rejected with their line number.
    ``.npy``  float64 array of shape ``(n, d + 1)``, same column order.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .design import Dataset, ProblemConstants


class DataFormatError(ValueError):
    pass


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_csv(path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(rows[0][1])
    if width < 2:
        raise DataFormatError(f"{path}: need at least one x column and a y column")
    vals = []
    for line, r in rows:
        if len(r) != width:
            raise DataFormatError(f"{path}: line {line} has {len(r)} fields, expected {width}")
        try:
            v = [float(c) for c in r]
        except ValueError:
            raise DataFormatError(f"{path}: line {line} has a non-numeric field") from None
        if not all(math.isfinite(x) for x in v):
            raise DataFormatError(f"{path}: line {line} has a non-finite value")
        vals.append(v)
    arr = np.array(vals)
    return Dataset(arr[:, :-1], arr[:, -1])


def read_npy(path) -> Dataset:
    arr = np.load(path, allow_pickle=False)
    if arr.ndim != 2 or arr.shape[1] < 2 or arr.shape[0] < 1:
        raise DataFormatError(f"{path}: expected an (n, d+1) array, got shape {arr.shape}")
    arr = arr.astype(float)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{path}: non-finite values")
    return Dataset(arr[:, :-1], arr[:, -1])


def read_dataset(path) -> Dataset:
    p = Path(path)
    if p.suffix == ".npy":
        return read_npy(p)
    return read_csv(p)


def write_csv(data: Dataset, path, header: bool = True):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{j}" for j in range(1, data.d + 1)] + ["y"])
        for xi, yi in zip(data.X, data.Y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def read_constants(path) -> ProblemConstants:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return ProblemConstants.from_dict(raw)


# ---------------------------------------------------------------------------
# experiment configuration

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FunctionConfig(_Strict):
    family: Literal["affine", "polynomial", "smooth"]
    intercept: float = 0.0
    linear: List[float] = []
    quadratic: List[float] = []
    coefficients: Optional[dict] = None
    name: Optional[str] = None


class GeneratorConfig(_Strict):
    d: int = Field(ge=1)
    n: Optional[int] = Field(default=None, ge=1)
    sigma: float = Field(default=0.0, ge=0)
    box: Tuple[float, float] = (-1.0, 1.0)
    x_query: Optional[List[float]] = None
    support: Optional[List[int]] = None
    function: FunctionConfig


class ConstantsConfig(_Strict):
    L: float = Field(gt=0)
    C: float = Field(ge=0)
    d0: Optional[int] = Field(default=None, ge=1)
    f_max: float = Field(default=1.0, ge=0)
    beta: float = Field(default=2.0, gt=1)
    M_K: Optional[float] = Field(default=None, ge=1)


class SelectionSection(_Strict):
    kernel: Literal["uniform"] = "uniform"
    procedure: Literal["plain", "translated"] = "translated"
    strict: bool = True
    h_fraction: Optional[float] = Field(default=0.9, gt=0, le=1)
    h: Optional[float] = Field(default=None, gt=0)
    lam: Optional[float] = Field(default=None, ge=0, alias="lambda")
    constants: ConstantsConfig

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class EstimationSection(_Strict):
    beta: float = Field(default=2.0, gt=1)
    f_max: float = Field(default=1.0, gt=0)
    kernel_star: Literal["gaussian_trunc", "ball_uniform"] = "gaussian_trunc"


class ExperimentConfig(_Strict):
    kind: Literal["selection", "rate"]
    replicates: int = Field(ge=1)
    n_grid: Optional[List[int]] = None
    generator: GeneratorConfig
    selection: SelectionSection
    estimation: Optional[EstimationSection] = None

    @field_validator("n_grid")
    @classmethod
    def _grid(cls, v):
        if v is not None and (len(v) == 0 or any(n < 1 for n in v)):
            raise ValueError("n_grid must be a non-empty list of positive sizes")
        return v


def load_experiment_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return ExperimentConfig.model_validate(raw)
