"""Command-line entry point.

    approxmcmc run        --config cfg.json --out DIR   # chain trajectory CSV
    approxmcmc discretize --config cfg.json --out DIR   # transition matrix CSV
    approxmcmc certify    --config cfg.json --out DIR   # perturbation certificates JSON
    approxmcmc tradeoff   --config cfg.json --out DIR   # tradeoff table CSV
    approxmcmc reproduce  NAME|all [--config cfg.json] --out DIR

Exit codes: 0 success, 1 usage or configuration error, 2 numeric or
infeasibility error, 3 an experiment returned a Mismatch verdict.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import experiments as ex
from . import grid as gr
from . import kernels as kn
from . import model as md
from . import tradeoff as tr
from .errors import ApproxMCMCError, ConfigError

log = logging.getLogger("approxmcmc")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelCfg(_Strict):
    kind: Literal["gaussian", "bounded"] = "gaussian"
    prior_sd: float = Field(1.0, gt=0)
    clip: float = Field(0.5, gt=0)

    def build(self):
        if self.kind == "gaussian":
            return md.GaussianConjugate(self.prior_sd)
        return md.BoundedGaussian(self.prior_sd, self.clip)


class SynthCfg(_Strict):
    N: int = Field(ge=1)
    theta_star: float = 0.0
    seed: int = 0


class TwoPointCfg(_Strict):
    N: int = Field(ge=1)
    values: tuple[float, float] = (-0.25, 0.25)


class DataCfg(_Strict):
    values: Optional[list[float]] = None
    synthesize: Optional[SynthCfg] = None
    two_point: Optional[TwoPointCfg] = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("values", "synthesize", "two_point") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one data source required (values | synthesize | two_point), got {given}")
        if self.values is not None and len(self.values) < 1:
            raise ValueError("values must contain at least one point")
        return self

    def build(self) -> md.DataSet:
        if self.values is not None:
            return md.DataSet(np.array(self.values))
        if self.synthesize is not None:
            s = self.synthesize
            return md.DataSet.synthesize(s.N, s.theta_star, s.seed)
        return md.DataSet.two_point(self.two_point.N, self.two_point.values)

    @property
    def N(self) -> int:
        if self.values is not None:
            return len(self.values)
        return (self.synthesize or self.two_point).N


class KernelCfg(_Strict):
    kind: Literal["FullMH", "WideMH", "SubsampleNarrow", "SubsampleWide", "Austerity", "InfiniteResample"]
    n: Optional[int] = Field(None, ge=1)
    A: int = Field(1, ge=1)
    gamma: float = Field(2.0, gt=1)
    delta0: float = Field(0.01, gt=0, lt=1)
    rho: float = Field(0.5, gt=0, lt=1)
    theta_star: float = 0.0
    proposal_scale: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _needs_n(self):
        if self.kind in ("WideMH", "SubsampleNarrow", "SubsampleWide", "InfiniteResample") and self.n is None:
            raise ValueError(f"{self.kind} requires n (valid range 1 <= n <= N)")
        return self

    def build(self) -> kn.KernelConfig:
        k, s = self.kind, self.proposal_scale
        if k == "FullMH":
            return kn.FullMH(s)
        if k == "WideMH":
            return kn.WideMH(self.n, s)
        if k == "SubsampleNarrow":
            return kn.SubsampleNarrow(self.n, s)
        if k == "SubsampleWide":
            return kn.SubsampleWide(self.n, self.A, s)
        if k == "Austerity":
            return kn.Austerity(self.gamma, self.delta0, self.rho, s)
        return kn.InfiniteResample(self.n, self.theta_star, s)


class GridCfg(_Strict):
    G: int = Field(400, ge=2)
    width: float = Field(6.0, gt=0)
    lo: Optional[float] = None
    hi: Optional[float] = None


class ChainCfg(_Strict):
    T: int = Field(1000, ge=0)
    theta0: float = 0.0


class FunctionCfg(_Strict):
    kind: Literal["square_clipped", "square", "indicator"] = "square_clipped"
    lo: float = -1.0
    hi: float = 1.0

    def build(self):
        if self.kind == "square_clipped":
            return md.SquareClipped()
        if self.kind == "square":
            return md.Square()
        return md.IndicatorInterval(self.lo, self.hi)


class TradeoffCfg(_Strict):
    M: int = Field(10_000, ge=1)
    n_list: list[int] = Field(default_factory=lambda: [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024])
    reps: int = Field(0, ge=0)
    x0: float = 1.0
    G: int = Field(200, ge=2)
    theta_star: float = 0.0


class RunConfig(_Strict):
    model: ModelCfg = Field(default_factory=ModelCfg)
    data: Optional[DataCfg] = None
    kernel: Optional[KernelCfg] = None
    approx_kernel: Optional[KernelCfg] = None
    grid: GridCfg = Field(default_factory=GridCfg)
    chain: ChainCfg = Field(default_factory=ChainCfg)
    budget: Optional[int] = Field(None, ge=1)
    test_function: FunctionCfg = Field(default_factory=FunctionCfg)
    tradeoff: TradeoffCfg = Field(default_factory=TradeoffCfg)
    experiments: dict[str, dict] = Field(default_factory=dict)
    out_dir: str = "out"
    seed: int = 0

    @model_validator(mode="after")
    def _ranges(self):
        for key in ("kernel", "approx_kernel"):
            k = getattr(self, key)
            if k is None or k.kind == "InfiniteResample":
                continue
            if self.data is None:
                raise ValueError(f"{key}: kernel {k.kind} needs a data source")
            N = self.data.N
            if k.n is not None and k.kind != "SubsampleWide" and k.n > N:
                raise ValueError(f"{key}.n = {k.n} out of range (valid range 1 <= n <= N = {N})")
            if k.kind == "SubsampleWide" and k.A * k.n > N:
                raise ValueError(f"{key}: A*n = {k.A * k.n} out of range (valid range 1 <= A*n <= N = {N})")
        for name in self.experiments:
            if name not in ex.EXPERIMENTS:
                raise ValueError(f"experiments.{name}: unknown experiment; choose from {sorted(ex.EXPERIMENTS)}")
        return self


def _format_validation(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{path}: {e['msg']}")
    return "; ".join(parts)


def parse_config(source: Union[str, os.PathLike, dict]) -> RunConfig:
    """Validate a config given as a dict, a JSON file path or inline JSON text."""
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        if os.path.exists(text):
            with open(text) as fh:
                text = fh.read()
        if not text.strip():
            raise ConfigError("config text is empty")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _require(cfg: RunConfig, *keys):
    for k in keys:
        if getattr(cfg, k) is None:
            raise ConfigError(f"{k}: required for this command")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(gr._jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _grid(cfg: RunConfig, kcfg, model, data):
    g = cfg.grid
    if g.lo is not None and g.hi is not None:
        return gr.Grid(g.lo, g.hi, g.G)
    return gr.grid_for(kcfg, model, data, g.G, g.width)


def cmd_run(cfg: RunConfig, out: str):
    _require(cfg, "kernel")
    model, data = cfg.model.build(), cfg.data.build() if cfg.data else None
    kcfg = cfg.kernel.build()
    traj = kn.run_chain(kcfg, cfg.chain.T, cfg.chain.theta0, cfg.seed, model, data,
                        max_lik_evals=cfg.budget, on_budget="truncate")
    path = os.path.join(out, "trajectory.csv")
    traj.to_csv(path)
    summary = os.path.join(out, "run.json")
    _write_json(summary, {"steps": traj.T, "truncated": traj.truncated,
                          "total_lik_evals": traj.ledger.total_lik_evals,
                          "acceptance_rate": float(traj.accepted.mean()) if traj.T else math.nan,
                          "estimate": kn.mcmc_estimate(traj, cfg.test_function.build())})
    return [path, summary], 0


def cmd_discretize(cfg: RunConfig, out: str):
    _require(cfg, "kernel")
    model, data = cfg.model.build(), cfg.data.build() if cfg.data else None
    kcfg = cfg.kernel.build()
    K = gr.discretize(kcfg, model, data, _grid(cfg, kcfg, model, data), seed=cfg.seed)
    path = os.path.join(out, "matrix.csv")
    K.to_csv(path)
    return [path], 0


def cmd_certify(cfg: RunConfig, out: str):
    _require(cfg, "kernel")
    model, data = cfg.model.build(), cfg.data.build() if cfg.data else None
    kcfg = cfg.kernel.build()
    acfg = cfg.approx_kernel.build() if cfg.approx_kernel else kcfg
    grid = _grid(cfg, kcfg, model, data)
    scale = kn.proposal_scale(kcfg, model, data)
    if acfg.proposal_scale is None:
        acfg = dataclasses.replace(acfg, proposal_scale=scale)
    K = gr.discretize(kcfg, model, data, grid, seed=cfg.seed)
    Kt = gr.discretize(acfg, model, data, grid, seed=cfg.seed)
    rep = gr.certify_perturbation(K, Kt)
    path = os.path.join(out, "certificates.json")
    with open(path, "w") as fh:
        fh.write(rep.to_json() + "\n")
    return [path], 0


def cmd_tradeoff(cfg: RunConfig, out: str):
    _require(cfg, "data")
    model, data = cfg.model.build(), cfg.data.build()
    t = cfg.tradeoff
    f = cfg.test_function.build()
    pts, tau, pi_f = tr.build_family(
        model, data, t.n_list, f,
        approx=lambda n, s: kn.SubsampleWide(n, 1, s),
        ref=lambda n, s: kn.InfiniteResample(n, t.theta_star, s), G=t.G)
    consts = tr.fit_constants(pts, tau)
    curve = tr.tradeoff_curve(consts, t.M, t.n_list)
    empirical = {}
    if t.reps > 0:
        for n in t.n_list:
            if n * 1 <= t.M:
                empirical[n] = tr.empirical_error(kn.SubsampleWide(n, 1), f, t.M, t.x0, t.reps, pi_f,
                                                  model, data, seed=cfg.seed)
    path = os.path.join(out, "tradeoff.csv")
    tr.write_table(path, curve, pts, empirical)
    emp_star = min(empirical, key=lambda n: (empirical[n].total, n)) if empirical else None
    summary = os.path.join(out, "tradeoff.json")
    _write_json(summary, {"constants": consts.__dict__, "n0": consts.n0, "n_hat": curve.n_hat,
                          "argmin_bound": curve.argmin, "bound_at_n_hat": curve.bound_at_n_hat,
                          "bound_main": curve.bound_main, "empirical_argmin": emp_star,
                          "reference_mean": pi_f, "M": t.M})
    return [path, summary], 0


def _reproduce_one(args):
    name, params, seed, out = args
    result, paths = ex.run_experiment(name, out, seed=seed, **params)
    return name, result.verdict, paths


def cmd_reproduce(cfg: RunConfig, out: str, name: str, jobs: int = 1):
    names = sorted(ex.EXPERIMENTS) if name == "all" else [name]
    for nm in names:
        if nm not in ex.EXPERIMENTS:
            raise ConfigError(f"unknown experiment {nm!r}; choose from {sorted(ex.EXPERIMENTS)} or 'all'")
    work = [(nm, cfg.experiments.get(nm, {}), cfg.seed, out) for nm in names]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_reproduce_one, work))
    else:
        results = [_reproduce_one(w) for w in work]
    files, status = [], 0
    for nm, verdict, paths in results:
        log.info("%s: %s", nm, verdict)
        files.extend(paths)
        if verdict == ex.MISMATCH:
            status = 3
    return files, status


COMMANDS = ("run", "discretize", "certify", "tradeoff", "reproduce")


def dispatch(cfg: RunConfig, command: str, experiment: Optional[str] = None, jobs: int = 1) -> int:
    """Run one subcommand and write its manifest; returns the exit status."""
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    files, status, error = [], 0, None
    try:
        if command == "reproduce":
            files, status = cmd_reproduce(cfg, out, experiment or "all", jobs)
        else:
            files, status = {"run": cmd_run, "discretize": cmd_discretize, "certify": cmd_certify,
                             "tradeoff": cmd_tradeoff}[command](cfg, out)
    except ApproxMCMCError as exc:
        error, status = exc, exc.exit_code
    manifest = {
        "command": command if experiment is None else f"{command} {experiment}",
        "config": cfg.model_dump(mode="json"),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "files": [{"path": os.path.relpath(p, out), "config_hash": config_hash(cfg), "seed": cfg.seed}
                  for p in files],
        "partial": error is not None,
        "exit_status": status,
    }
    if error is not None:
        manifest["error"] = str(error)
    _write_json(os.path.join(out, "manifest.json"), manifest)
    if error is not None:
        print(f"error: {error}", file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="approxmcmc", description="Exact and subsampling MH kernels")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("experiment", nargs="?", help="experiment name or 'all' (reproduce only)")
    p.add_argument("--config", help="JSON config file or inline JSON text")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel jobs for reproduce all")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command != "reproduce" and args.config is None:
            raise ConfigError(f"{args.command} requires --config")
        if args.command != "reproduce" and args.experiment is not None:
            raise ConfigError("only reproduce takes a positional experiment name")
        cfg = parse_config(args.config) if args.config else RunConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = args.out
        if overrides:
            cfg = parse_config({**cfg.model_dump(mode="json"), **overrides})
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return dispatch(cfg, args.command, args.experiment, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
