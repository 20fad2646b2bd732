"""
Batch experiments: config parsing, filter runs, convergence ladders, plot data.

A config is a JSON document with sections ``model``, ``grids``, ``seeds``,
``methods``, ``ladder`` and ``output``. See ``README.md`` for the keys. All
randomness derives from ``seeds.master``; path ``p`` uses the seed
``SeedSequence([master, p])`` so records do not depend on how many paths run
or in which order they finish.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import model as cm
from .filtering import (
    PARTICLE_STREAM,
    filter_estimate_spde,
    kalman_bucy_oracle,
    particle_ks_estimate,
)
from .flow import check_evolution_identity, lemma1_residual, simulate_system
from .model import CoefficientFn, FlowModel, SystemModel
from .paths import TimeGrid, coarsen, sample_brownian
from .spde import NumericalError, SpatialGrid, auto_half_width, write_field_csv

__all__ = [
    "ConfigError",
    "CONFIG_SCHEMA",
    "ExperimentConfig",
    "ResultRecord",
    "load_config",
    "parse_config",
    "path_seed",
    "run_filter_experiment",
    "run_convergence_study",
    "run_flow_validation",
    "write_records",
    "emit_plot_data",
]

log = logging.getLogger(__name__)

METHODS = ("spde", "particle", "kalman")
LEMMA1_STREAM_OFFSET = 1_000_000

_coef = {
    "type": "object",
    "properties": {
        "kind": {"type": "string", "enum": sorted(set(cm.KINDS) | {"Constant", "Linear", "Quadratic", "Tanh", "SineBounded", "GaussianBump"})},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "scale": {"type": "number"},
        "shift": {"type": "number"},
    },
    "required": ["kind", "params"],
    "additionalProperties": False,
}
_level = {
    "type": "object",
    "properties": {"N": {"type": "integer", "minimum": 1}, "M": {"type": "integer", "minimum": 5}},
    "required": ["N", "M"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "f": _coef, "h": _coef, "g": _coef,
                "x0": {"type": "number"}, "y0": {"type": "number"},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "allow_unbounded": {"type": "boolean"},
            },
            "required": ["f", "h", "g"],
            "additionalProperties": False,
        },
        "grids": {
            "type": "object",
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "M": {"type": "integer", "minimum": 5},
                "half_width": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto"}]},
            },
            "required": ["N", "M"],
            "additionalProperties": False,
        },
        "seeds": {
            "type": "object",
            "properties": {
                "master": {"type": "integer", "minimum": 0},
                "paths": {"type": "integer", "minimum": 1},
            },
            "required": ["master"],
            "additionalProperties": False,
        },
        "methods": {
            "type": "object",
            "properties": {
                "spde": {"type": "boolean"},
                "particle": {"type": "boolean"},
                "kalman": {"type": "boolean"},
                "n_particles": {"type": "integer", "minimum": 100},
            },
            "additionalProperties": False,
        },
        "ladder": {
            "type": "object",
            "properties": {
                "levels": {"type": "array", "items": _level},
                "oracle": {"enum": ["quadrature", "particle", "kalman", "none"]},
                "lemma1_seeds": {"type": "integer", "minimum": 0},
            },
            "required": ["levels"],
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "required": ["model", "grids", "seeds"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Config failed validation; ``where`` names the offending field."""

    def __init__(self, message, where=""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True)
class ExperimentConfig:
    model: SystemModel
    N: int
    M: int
    half_width: float
    master_seed: int
    n_paths: int
    methods: tuple
    n_particles: int
    ladder: tuple = ()
    oracle: str = "none"
    lemma1_seeds: int = 0
    out_dir: str = "results"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def tgrid(self) -> TimeGrid:
        return TimeGrid.uniform_grid(self.model.T, self.N)

    @property
    def sgrid(self) -> SpatialGrid:
        return SpatialGrid.around(self.model.x0, self.half_width, self.M)

    @property
    def digest(self) -> str:
        """Stable hash of the canonical config (output location excluded)."""
        canon = {k: v for k, v in self.raw.items() if k != "output"}
        blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _where(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _canonical(raw: dict) -> dict:
    """Fill defaults and normalise numbers so equal meanings hash equally."""
    cfg = copy.deepcopy(raw)
    m = cfg["model"]
    for key in ("f", "h", "g"):
        m[key] = CoefficientFn.from_record(m[key]).to_record()
    m["x0"] = float(m.get("x0", 0.0))
    m["y0"] = float(m.get("y0", 0.0))
    m["T"] = float(m.get("T", 1.0))
    m["allow_unbounded"] = bool(m.get("allow_unbounded", False))
    g = cfg["grids"]
    hw = g.get("half_width", "auto")
    g["half_width"] = hw if hw == "auto" else float(hw)
    cfg["seeds"].setdefault("paths", 1)
    meth = cfg.setdefault("methods", {})
    for name in METHODS:
        meth.setdefault(name, name == "spde")
    meth.setdefault("n_particles", 100_000)
    if "ladder" in cfg:
        cfg["ladder"].setdefault("oracle", "none")
        cfg["ladder"].setdefault("lemma1_seeds", 0)
    return cfg


def parse_config(raw: dict, seed: int | None = None, methods=None, out_dir=None) -> ExperimentConfig:
    """Validate a config mapping and build an :class:`ExperimentConfig`.

    ``seed``, ``methods`` and ``out_dir`` override the file's values (as the
    CLI flags do) before validation and hashing.
    """
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw.setdefault("seeds", {})["master"] = int(seed)
    if methods is not None:
        meth = raw.setdefault("methods", {})
        for name in METHODS:
            meth[name] = name in methods
        unknown = set(methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}", "methods")
    if out_dir is not None:
        raw.setdefault("output", {})["dir"] = str(out_dir)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(errors[0].message, _where(errors[0]))
    try:
        cfg = _canonical(raw)
        mrec = cfg["model"]
        model = SystemModel(
            CoefficientFn.from_record(mrec["f"]),
            CoefficientFn.from_record(mrec["h"]),
            CoefficientFn.from_record(mrec["g"]),
            mrec["x0"], mrec["y0"], mrec["T"], mrec["allow_unbounded"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "model") from exc

    grids = cfg["grids"]
    if grids["half_width"] == "auto":
        try:
            half_width = auto_half_width(model)
        except ValueError as exc:
            raise ConfigError(str(exc), "grids/half_width") from exc
    else:
        half_width = grids["half_width"]
    for where, M in [("grids/M", grids["M"])] + [
        (f"ladder/levels/{i}/M", lv["M"]) for i, lv in enumerate(cfg.get("ladder", {}).get("levels", []))
    ]:
        if not SpatialGrid.around(model.x0, half_width, M).contains_interior(model.x0):
            raise ConfigError(f"M={M} leaves x0 within 5 nodes of the boundary", where)
    methods_sel = tuple(m for m in METHODS if cfg["methods"][m])
    if "kalman" in methods_sel:
        _kalman_params(model)
    ladder, oracle, lemma_seeds = (), "none", 0
    if "ladder" in cfg:
        ladder = tuple((lv["N"], lv["M"]) for lv in cfg["ladder"]["levels"])
        oracle = cfg["ladder"]["oracle"]
        lemma_seeds = cfg["ladder"]["lemma1_seeds"]
        if oracle == "quadrature" and not (model.f.is_zero and model.h.is_zero):
            raise ConfigError("quadrature oracle needs f == 0 and h == 0", "ladder/oracle")
        if oracle == "kalman":
            _kalman_params(model)
    return ExperimentConfig(
        model=model,
        N=grids["N"],
        M=grids["M"],
        half_width=float(half_width),
        master_seed=cfg["seeds"]["master"],
        n_paths=cfg["seeds"]["paths"],
        methods=methods_sel,
        n_particles=cfg["methods"]["n_particles"],
        ladder=ladder,
        oracle=oracle,
        lemma1_seeds=lemma_seeds,
        out_dir=cfg.get("output", {}).get("dir", "results"),
        raw=cfg,
    )


def load_config(path, **overrides) -> ExperimentConfig:
    """Read and validate a JSON config file.

    Raises
    ------
    ConfigError
        With the line and column for malformed JSON, or the field path for
        schema violations.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return parse_config(raw, **overrides)


def _kalman_params(model: SystemModel):
    if model.f.kind != "linear" or model.h.kind != "linear" or model.g.kind != "linear":
        raise ConfigError("kalman oracle needs linear f, h and g", "methods/kalman")
    if any(fn.scale != 1.0 or fn.shift != 0.0 for fn in (model.f, model.h, model.g)):
        raise ConfigError("kalman oracle needs unshifted linear coefficients", "methods/kalman")
    return model.f.params[0], model.h.params[0], model.g.params[0]


def path_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0])


@dataclass
class ResultRecord:
    """Everything computed for one observation path.

    ``timings`` holds wall-clock seconds per stage; it is logged but never
    written to the record files, which must be byte-reproducible.
    """

    config_digest: str
    path_index: int
    path_seed: int
    truth: float
    x_T: float
    estimates: dict
    status: str = "ok"
    errors: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "path_index": self.path_index,
            "path_seed": self.path_seed,
            "status": self.status,
            "truth": self.truth,
            "x_T": self.x_T,
            "estimates": {k: v.to_record() for k, v in self.estimates.items()},
            "errors": dict(self.errors),
        }


def _estimate(method, cfg: ExperimentConfig, Y, tgrid, seed):
    model = cfg.model
    if method == "spde":
        return filter_estimate_spde(model, cfg.sgrid, tgrid, Y)
    if method == "particle":
        return particle_ks_estimate(model, Y, tgrid, cfg.n_particles, seed, PARTICLE_STREAM)
    a, c, scale = _kalman_params(model)
    est = kalman_bucy_oracle(a, c, model.x0, Y, tgrid)
    est.m_T *= scale
    est.numerator *= scale
    return est


def _run_path(cfg: ExperimentConfig, index: int) -> ResultRecord:
    seed = path_seed(cfg.master_seed, index)
    tgrid = cfg.tgrid
    t0 = time.perf_counter()
    X, Y, _, _ = simulate_system(cfg.model, tgrid, seed)
    timings = {"simulate": time.perf_counter() - t0}
    x_T = float(X.values[-1])
    rec = ResultRecord(cfg.digest, index, seed, float(cm.eval(cfg.model.g, x_T)), x_T, {},
                       timings=timings)
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            rec.estimates[method] = _estimate(method, cfg, Y, tgrid, seed)
        except NumericalError as exc:
            rec.status = "failed"
            rec.errors[method] = str(exc)
        rec.timings[method] = time.perf_counter() - t0
    return rec


def _map_ordered(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def run_filter_experiment(cfg: ExperimentConfig, workers: int = 1) -> list:
    """Simulate each path, record its observations and run the selected methods.

    Records come back in ascending path order whatever the worker count. A
    numerical failure in one method marks that record ``failed`` and the run
    continues.
    """
    records = _map_ordered(lambda p: _run_path(cfg, p), range(cfg.n_paths), workers)
    for r in records:
        log.info("path %d: %s", r.path_index,
                 ", ".join(f"{k}={v:.3f}s" for k, v in r.timings.items()))
    return records


def write_records(records, out_dir) -> tuple:
    """Write ``records.jsonl`` and ``summary.csv``; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jl = out / "records.jsonl"
    with open(jl, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_index", "path_seed", "status", "truth", "method", "m_T", "stderr", "ess"])
        for r in records:
            for method, est in r.estimates.items():
                w.writerow([r.path_index, r.path_seed, r.status, repr(r.truth), method,
                            repr(est.m_T), "" if est.stderr is None else repr(est.stderr),
                            "" if est.ess is None else repr(est.ess)])
            for method in r.errors:
                w.writerow([r.path_index, r.path_seed, r.status, repr(r.truth), method, "", "", ""])
    return jl, summary


def _quadrature_oracle(model: SystemModel, nodes: int = 120) -> float:
    # E g(x0 + W_T) for f == h == 0
    u, w = np.polynomial.hermite_e.hermegauss(nodes)
    vals = cm.eval(model.g, model.x0 + math.sqrt(model.T) * u)
    return float(np.sum(w * vals) / math.sqrt(2 * math.pi))


def _lemma1_rms(model: SystemModel, fine: TimeGrid, factor: int, master: int, n_seeds: int) -> float:
    fmodel = FlowModel.scalar(model.f, T=model.T)
    res = []
    for j in range(n_seeds):
        w = sample_brownian(fine, path_seed(master, LEMMA1_STREAM_OFFSET + j), 0)
        wc = coarsen(w, factor)
        res.append(lemma1_residual(fmodel, wc.grid, model.x0, wc))
    return float(np.sqrt(np.mean(np.square(res))))


def run_convergence_study(cfg: ExperimentConfig) -> list:
    """Error table along a refinement ladder.

    Every level sees the same Brownian paths: the finest level is simulated
    and coarser observation paths are obtained by summing increments. Each row
    has the mean absolute SPDE error against the oracle over the paths and
    the RMS flow-SPDE residual (see :func:`lemma1_residual`) of the drift flow over ``lemma1_seeds`` seeds.
    """
    if len(cfg.ladder) < 3:
        raise ConfigError("a convergence ladder needs at least 3 levels", "ladder/levels")
    finest = max(N for N, _ in cfg.ladder)
    if any(finest % N for N, _ in cfg.ladder):
        raise ConfigError("every ladder N must divide the finest N", "ladder/levels")
    model = cfg.model
    fine = TimeGrid.uniform_grid(model.T, finest)
    paths = []
    for p in range(cfg.n_paths):
        seed = path_seed(cfg.master_seed, p)
        _, Y, _, _ = simulate_system(model, fine, seed)
        if cfg.oracle == "quadrature":
            ref = _quadrature_oracle(model)
        elif cfg.oracle == "kalman":
            a, c, scale = _kalman_params(model)
            ref = scale * kalman_bucy_oracle(a, c, model.x0, Y, fine).m_T
        elif cfg.oracle == "particle":
            ref = particle_ks_estimate(model, Y, fine, cfg.n_particles, seed).m_T
        else:
            ref = float("nan")
        paths.append((Y, ref))

    rows = []
    for level, (N, M) in enumerate(cfg.ladder):
        factor = finest // N
        sgrid = SpatialGrid.around(model.x0, cfg.half_width, M)
        errs = []
        for Y, ref in paths:
            Yc = coarsen(Y, factor)
            est = filter_estimate_spde(model, sgrid, Yc.grid, Yc)
            errs.append(abs(est.m_T - ref))
        lrms = (_lemma1_rms(model, fine, factor, cfg.master_seed, cfg.lemma1_seeds)
                if cfg.lemma1_seeds else float("nan"))
        rows.append({"level": level, "N": N, "M": M, "abs_error": float(np.mean(errs)),
                     "lemma1_rms": lrms})
    return rows


def write_convergence_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "N", "M", "abs_error", "lemma1_rms"])
        for r in rows:
            w.writerow([r["level"], r["N"], r["M"], repr(r["abs_error"]), repr(r["lemma1_rms"])])


def run_flow_validation(cfg: ExperimentConfig, lattice_half_width: float = 1.0,
                        lattice_points: int = 11) -> list:
    """Evolution-identity and flow-SPDE residuals of the drift flow, one row per path."""
    model = cfg.model
    fmodel = FlowModel.scalar(model.f, T=model.T)
    grid = cfg.tgrid
    lattice = model.x0 + np.linspace(-lattice_half_width, lattice_half_width, lattice_points)
    rows = []
    for p in range(cfg.n_paths):
        seed = path_seed(cfg.master_seed, p)
        w = sample_brownian(grid, seed, 1)
        rows.append({
            "path_index": p,
            "path_seed": seed,
            "evolution_residual": check_evolution_identity(fmodel, grid, lattice, grid.N // 2, w),
            "lemma1_residual": lemma1_residual(fmodel, grid, model.x0, w),
        })
    return rows


def emit_plot_data(records, out_dir, convergence_rows=None) -> list:
    """Tidy CSVs for plotting; returns the written paths.

    ``scatter.csv`` has one row per (path, method). Each SPDE record adds
    ``field_path<p>.csv`` (the numerator field) and ``norm_path<p>.csv`` (the
    normaliser), both ``t,x,value``. ``convergence.csv`` is written when rows
    are given.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    scatter = out / "scatter.csv"
    with open(scatter, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_index", "method", "m_T", "truth"])
        for r in records:
            for method, est in r.estimates.items():
                w.writerow([r.path_index, method, repr(est.m_T), repr(r.truth)])
    written.append(scatter)
    for r in records:
        est = r.estimates.get("spde")
        if est is None or not est.fields:
            continue
        for name, fld in zip(("field", "norm"), est.fields):
            path = out / f"{name}_path{r.path_index}.csv"
            write_field_csv(path, fld)
            written.append(path)
    if convergence_rows is not None:
        path = out / "convergence.csv"
        write_convergence_csv(convergence_rows, path)
        written.append(path)
    return written
