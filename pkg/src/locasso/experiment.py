"""Run experiments described by an :class:`~locasso.io.ExperimentConfig`
and write their outputs."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .io import EstimationSection, ExperimentConfig
from .kernels import get_kernel
from .selection import SelectionConfig, choose_parameters, penalty_for
from .simulation import (FunctionSpec, GeneratorSpec, compliance_report,
                         run_rate_experiment, run_selection_experiment,
                         run_selection_grid)

log = logging.getLogger(__name__)


def build_generator(cfg: ExperimentConfig, seed: int, n=None) -> GeneratorSpec:
    g = cfg.generator
    fn = g.function
    coeffs = None
    if fn.coefficients is not None:
        coeffs = {tuple(int(e) for e in k.split(",")): float(v) for k, v in fn.coefficients.items()}
    n = n or g.n or (cfg.n_grid[0] if cfg.n_grid else None)
    if n is None:
        raise ValueError("generator.n or n_grid is required")
    return GeneratorSpec(
        n=int(n), d=g.d,
        function=FunctionSpec(fn.family, fn.intercept, tuple(fn.linear), tuple(fn.quadratic),
                              coeffs, fn.name),
        sigma=g.sigma, seed=seed, box=tuple(g.box),
        x_query=None if g.x_query is None else tuple(g.x_query),
        support=None if g.support is None else tuple(g.support))


def build_selection(cfg: ExperimentConfig, spec: GeneratorSpec) -> SelectionConfig:
    s = cfg.selection
    c = s.constants
    constants = spec.design_constants(L=c.L, C=c.C, d0=c.d0, M_K=c.M_K, f_max=c.f_max,
                                      beta=c.beta, strict=s.strict)
    if s.h is None:
        return choose_parameters(constants, s.h_fraction, s.procedure, strict=s.strict)
    lam = penalty_for(constants, s.h) if s.lam is None else s.lam
    return SelectionConfig(h=s.h, lam=lam, procedure=s.procedure, constants=constants,
                           strict=s.strict)


def config_digest(cfg: ExperimentConfig, seed: int) -> str:
    payload = json.dumps({"config": cfg.model_dump(mode="json", by_alias=True),
                          "seed": seed, "version": __version__}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class ExperimentOutputs:
    manifest: Path
    csv: Path
    summary: Path


def run_experiment(cfg: ExperimentConfig, seed: int, out_dir, jobs: int = 1,
                   progress=None) -> tuple:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = ExperimentOutputs(out_dir / "manifest.json", out_dir / "replicates.csv",
                              out_dir / "summary.json")
    digest = config_digest(cfg, seed)
    manifest = {
        "config": cfg.model_dump(mode="json", by_alias=True),
        "version": __version__,
        "seed": seed,
        "config_sha256": digest,
        "started_at": datetime.now(timezone.utc).isoformat(),
        "outputs": {"csv": paths.csv.name, "summary": paths.summary.name},
    }
    paths.manifest.write_text(json.dumps(manifest, indent=2) + "\n")

    spec = build_generator(cfg, seed)
    sel_cfg = build_selection(cfg, spec)
    kernel = get_kernel(cfg.selection.kernel, spec.d)
    if progress:
        progress(f"{cfg.kind} experiment: {cfg.replicates} replicates, seed {seed}")
    if cfg.kind == "selection":
        if cfg.n_grid:
            summary = run_selection_grid(spec, sel_cfg, cfg.n_grid, cfg.replicates, kernel, jobs)
        else:
            summary = run_selection_experiment(spec, sel_cfg, cfg.replicates, kernel, jobs)
    else:
        if not cfg.n_grid:
            raise ValueError("rate experiments need n_grid")
        est = cfg.estimation or EstimationSection()
        summary = run_rate_experiment(spec, cfg.n_grid, cfg.replicates, sel_cfg,
                                      est.beta, est.f_max, est.kernel_star, jobs)

    header = f"# manifest={paths.manifest.name} config_sha256={digest}\n"
    paths.csv.write_text(header + summary.to_csv())
    result = summary.to_dict()
    result["seed"] = seed
    result["manifest"] = paths.manifest.name
    result["config_sha256"] = digest
    result["selection_config"] = sel_cfg.to_dict()
    result["compliance"] = compliance_report(spec, sel_cfg)
    paths.summary.write_text(json.dumps(result, indent=2, default=_json_default) + "\n")

    manifest["finished_at"] = datetime.now(timezone.utc).isoformat()
    paths.manifest.write_text(json.dumps(manifest, indent=2) + "\n")
    return summary, paths


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if isinstance(o, float):
        return repr(o)
    raise TypeError(type(o))
