"""Seeded experiment runner: builds each trial from a config and writes CSV outputs.

All randomness comes from ``experiment.seed``. Each trial draws independent
streams for the graph, Byzantine placement, data, attack, coordinate order
and initialization, keyed by (seed, trial, stream). Swept values do not enter
the keys, so every cell of a sweep sees the same graph and data per trial.
"""
from __future__ import annotations

import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BaselineConfig, run_centralized_cd, run_dgd, run_local_cd
from .config import ExperimentConfig
from .data import as_binary, cap_per_class, load_csv, load_iris, partition, pool, synth_two_class
from .errors import ByrdieError, ConfigError, DegreeViolation
from .learning import LossModel, format_params
from .metrics import Evaluator, MetricsRecord, records_to_csv, summarize, write_summary
from .protocol import AttackSpec, ProtocolConfig, StepSchedule, run_byrdie
from .topology import (
    DirectedGraph,
    certify_assumption3,
    generate_erdos_renyi,
    generate_valid_erdos_renyi,
    read_edge_list,
    validate_degrees,
)

STREAMS = {"graph": 0, "byzantine": 1, "data": 2, "attack": 3, "order": 4, "init": 5, "certify": 6, "partition": 7}


def stream(seed: int, trial: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, STREAMS[name])))


def stream_seed(seed: int, trial: int, name: str) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(trial, STREAMS[name]))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------- cells


@dataclass(frozen=True)
class Cell:
    key: str | None
    value: object
    cfg: ExperimentConfig

    @property
    def suffix(self) -> str:
        return "" if self.key is None else f"__{self.key}={self.value}"

    def tag(self, algo: str) -> str:
        return algo if self.key is None else f"{algo}[{self.key}={self.value}]"


def cells(cfg: ExperimentConfig) -> list:
    key, values = cfg.sweep()
    if key is None:
        return [Cell(None, None, cfg)]
    return [Cell(key, v, cfg.replace(key, v)) for v in values]


def byzantine_count(cfg: ExperimentConfig) -> int:
    if cfg["byzantine"]["ids"]:
        return len(cfg["byzantine"]["ids"])
    count = cfg["byzantine"]["count"]
    return cfg["protocol"]["b"] if count == "b" else int(count)


def _maxima(cfg):
    all_cells = cells(cfg)
    return {
        "b": max(c.cfg["protocol"]["b"] for c in all_cells),
        "N": max(c.cfg["data"]["N"] for c in all_cells),
        "byz": max(byzantine_count(c.cfg) for c in all_cells),
    }


# ---------------------------------------------------------------- trial construction


@dataclass
class TrialSetup:
    graph: DirectedGraph
    byzantine: tuple
    honest: list
    shards: dict
    pooled: object
    test: object
    model: LossModel
    oracle_risk: float | None = None


def build_graph(cfg: ExperimentConfig, trial: int, b_graph: int) -> DirectedGraph:
    t = cfg["topology"]
    if t["generator"] == "edge_list":
        return read_edge_list(t["edge_list"])
    if t["generator"] == "complete":
        return DirectedGraph.complete(t["M"])
    if t["generator"] == "ring":
        return DirectedGraph.ring(t["M"])
    rng = stream(cfg["experiment"]["seed"], trial, "graph")
    needs_degree = "byrdie" in cfg["experiment"]["algorithms"]
    if t["resample"] and needs_degree:
        return generate_valid_erdos_renyi(t["M"], t["p"], b_graph, rng, t["symmetric"], t["max_attempts"])
    return generate_erdos_renyi(t["M"], t["p"], rng, t["symmetric"])


def place_byzantine(cfg: ExperimentConfig, graph: DirectedGraph, trial: int) -> tuple:
    ids = cfg["byzantine"]["ids"]
    if ids:
        unknown = set(ids) - set(graph.nodes)
        if unknown:
            raise ConfigError(f"byzantine.ids not in graph: {sorted(unknown)}")
        return tuple(sorted(ids))
    count = byzantine_count(cfg)
    if count >= graph.node_count:
        raise ConfigError("every node would be Byzantine")
    order = stream(cfg["experiment"]["seed"], trial, "byzantine").permutation(graph.node_count) + 1
    return tuple(sorted(order[:count].tolist()))


def load_dataset(cfg: ExperimentConfig, trial: int, n_max: int, M: int):
    d = cfg["data"]
    if d["source"] == "synthetic":
        count = d["count"] or M * n_max + 2 * d["test_per_class"]
        ds = synth_two_class(d["P"], d["margin"], d["noise"], count, stream(cfg["experiment"]["seed"], trial, "data"))
    elif d["source"] == "iris":
        ds = load_iris(normalize=d["normalize"], standardize=d["standardize"])
    else:
        ds = load_csv(d["path"], label_col=d["label_col"], normalize=d["normalize"], standardize=d["standardize"])
    if d["binary_positive"] is not None:
        ds = as_binary(ds, d["binary_positive"])
    return ds


def build_trial(cell: Cell, trial: int, maxima: dict, with_oracle: bool = True) -> TrialSetup:
    cfg = cell.cfg
    graph = build_graph(cfg, trial, maxima["b"])
    byz = place_byzantine(cfg, graph, trial)
    honest = [n for n in graph.nodes if n not in set(byz)]
    ds = load_dataset(cfg, trial, maxima["N"], graph.node_count)
    d = cfg["data"]
    part = partition(ds, honest, d["N"], d["class_balanced"], stream(cfg["experiment"]["seed"], trial, "partition"))
    test = cap_per_class(part.test, d["test_per_class"]) if len(part.test) else part.test
    m = cfg["model"]
    model = LossModel(m["kind"], m["lam"], m["bias"], tuple(m["layers"]))
    pooled = pool([part.shards[n] for n in honest])
    setup = TrialSetup(graph, byz, honest, part.shards, pooled, test, model)
    if with_oracle and cfg["experiment"]["oracle"] and model.convex:
        setup.oracle_risk = run_centralized_cd(pooled, model, cfg["experiment"]["oracle_tolerance"]).risk
    return setup


def attack_for(cfg: ExperimentConfig, byz: tuple, trial: int) -> AttackSpec:
    a = cfg["byzantine"]
    kind = a["attack"] if byz else "none"
    return AttackSpec(kind, byz if byz else (), a["lo"], a["hi"], a["value"], a["scale"],
                      stream_seed(cfg["experiment"]["seed"], trial, "attack"))


def schedule_for(cfg: ExperimentConfig) -> StepSchedule:
    p = cfg["protocol"]
    return StepSchedule(p["rho0"], p["tau0"], p["power"])


# ---------------------------------------------------------------- running


@dataclass
class TaskResult:
    cell_index: int
    trial: int
    records: dict = field(default_factory=dict)  # algo -> list of MetricsRecord
    checkpoints: dict = field(default_factory=dict)  # algo -> list of csv rows
    wall_ms: dict = field(default_factory=dict)
    error: str | None = None


def _checkpointer(every: int, rows: list):
    def hook(r, honest, W):
        if every and r % every == 0:
            for node, w in zip(honest, W):
                rows.append(f"{r},{node},{format_params(w)}")
    return hook


def run_task(cfg: ExperimentConfig, cell_index: int, trial: int) -> TaskResult:
    cell = cells(cfg)[cell_index]
    c = cell.cfg
    e, p, bl = c["experiment"], c["protocol"], c["baselines"]
    out = TaskResult(cell_index, trial)
    try:
        setup = build_trial(cell, trial, _maxima(cfg))
        model = setup.model
        evaluator = Evaluator(model, setup.pooled, setup.test, setup.oracle_risk, e["accuracy_on"])
        P = model.n_params(setup.pooled.dim)
        attack = attack_for(c, setup.byzantine, trial)
        schedule = schedule_for(c)
        init_seed = stream_seed(e["seed"], trial, "init")
        every = e["metric_every"]
        for algo in e["algorithms"]:
            rows = []
            hook = _checkpointer(e["checkpoint_every"], rows)
            started = time.perf_counter()
            tag = cell.tag(algo)
            if algo == "byrdie":
                pcfg = ProtocolConfig(
                    b=p["b"], T=p["T"], r_bar=p["r_bar"], schedule=schedule, order=p["order"],
                    order_seed=stream_seed(e["seed"], trial, "order"), init=p["init"],
                    init_scale=p["init_scale"], init_seed=init_seed,
                    cadence=e["metric_cadence"], every=every,
                )
                res = run_byrdie(setup.graph, setup.shards, model, pcfg, attack, evaluator=evaluator,
                                 trial=trial, algo=tag, on_round=hook, record_wall_time=e["record_wall_time"])
            elif algo == "dgd":
                iters = bl["dgd_iterations"] or p["r_bar"] * P * p["T"]
                dgd_every = every * P * p["T"] if bl["dgd_iterations"] is None else every
                bcfg = BaselineConfig("dgd", schedule, iters, init=p["init"], init_scale=p["init_scale"],
                                      init_seed=init_seed, every=dgd_every)
                res = run_dgd(setup.graph, setup.shards, model, bcfg, attack, evaluator=evaluator,
                              trial=trial, algo=tag, on_round=hook)
            elif algo == "local-cd":
                iters = bl["local_iterations"] or p["r_bar"] * p["T"]
                bcfg = BaselineConfig("local-cd", schedule, iters, init=p["init"], init_scale=p["init_scale"],
                                      init_seed=init_seed, every=every)
                res = run_local_cd(setup.shards, model, bcfg, evaluator=evaluator, trial=trial, algo=tag,
                                   honest=setup.honest)
                if e["metric_cadence"] == "r":
                    res.records = [rec for rec in res.records if rec.k == P]
            else:
                res = _run_centralized(c, setup, evaluator, trial, tag, schedule, init_seed)
            out.records[algo] = res.records
            rows.extend(f"final,{n},{format_params(w)}" for n, w in sorted(res.states.items()))
            out.checkpoints[algo] = rows
            out.wall_ms[algo] = int((time.perf_counter() - started) * 1000)
    except ByrdieError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _run_centralized(cfg, setup, evaluator, trial, tag, schedule, init_seed):
    from .protocol import RunResult, initial_states

    p, e, bl = cfg["protocol"], cfg["experiment"], cfg["baselines"]
    model = setup.model
    P = model.n_params(setup.pooled.dim)
    w0 = initial_states(p["init"], p["init_scale"], init_seed, 1, P)[0]
    sweeps = bl["centralized_sweeps"] or p["r_bar"]
    result = RunResult(states={})

    def on_sweep(r, w):
        if r % e["metric_every"] == 0 or r == sweeps:
            result.records.append(MetricsRecord(trial, tag, r, P, 1, r * P, **evaluator(w[None])))
        return False

    if model.convex:
        res = run_centralized_cd(setup.pooled, model, e["oracle_tolerance"], w0=w0, max_sweeps=sweeps,
                                 on_sweep=on_sweep)
    else:
        res = run_centralized_cd(setup.pooled, model, e["oracle_tolerance"], w0=w0, max_sweeps=sweeps,
                                 schedule=schedule, on_sweep=on_sweep)
    result.states = {0: res.w}
    return result


# ---------------------------------------------------------------- validation


def validate(cfg: ExperimentConfig) -> list:
    """Build every trial's graph and data to surface problems before running.

    Raises :class:`DegreeViolation` or :class:`ConfigError`; returns the
    certification outcomes when certification is configured.
    """
    maxima = _maxima(cfg)
    certs = []
    for idx, cell in enumerate(cells(cfg)):
        c = cell.cfg
        for trial in range(c["experiment"]["trials"]):
            graph = build_graph(c, trial, maxima["b"])
            if "byrdie" in c["experiment"]["algorithms"]:
                report = validate_degrees(graph, c["protocol"]["b"])
                if not report.ok:
                    raise DegreeViolation(report)
            if byzantine_count(c) > c["protocol"]["b"] and "byrdie" in c["experiment"]["algorithms"]:
                raise ConfigError(f"{byzantine_count(c)} Byzantine nodes exceed protocol.b={c['protocol']['b']}")
            build_trial(cell, trial, maxima, with_oracle=False)
            mode = c["topology"]["certify"]
            if mode != "none":
                cert = certify_assumption3(graph, c["protocol"]["b"], mode, c["topology"]["certify_trials"],
                                           stream(c["experiment"]["seed"], trial, "certify"))
                certs.append((idx, trial, cert))
                if cert.status == "refuted":
                    raise ConfigError(f"trial {trial}: reduced-graph condition refuted\n{cert}")
    return certs


# ---------------------------------------------------------------- output


@dataclass
class RunSummary:
    out_dir: Path
    files: list
    errors: list
    wall_seconds: float


def run_experiment(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> RunSummary:
    started = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.cfg").write_text(cfg.dumps())
    certs = validate(cfg)
    all_cells = cells(cfg)
    tasks = [(i, t) for i in range(len(all_cells)) for t in range(cfg["experiment"]["trials"])]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool_:
            results = list(pool_.map(run_task, [cfg] * len(tasks), *zip(*tasks)))
    else:
        results = [run_task(cfg, i, t) for i, t in tasks]
    files, errors = _write_outputs(cfg, all_cells, results, out_dir)
    wall = time.perf_counter() - started
    manifest = {
        "name": cfg["experiment"]["name"],
        "seed": cfg["experiment"]["seed"],
        "trials": cfg["experiment"]["trials"],
        "cells": [c.tag("*") for c in all_cells],
        "stream_keys": STREAMS,
        "versions": {"byrdie": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "notes": ["dgd and local-cd reuse the protocol step schedule"],
        "certification": [{"cell": i, "trial": t, "status": c.status, "checked": c.checked} for i, t, c in certs],
        "files": files,
        "errors": errors,
        "task_wall_ms": [{"cell": r.cell_index, "trial": r.trial, **r.wall_ms} for r in results],
        "wall_seconds": round(wall, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunSummary(out_dir, files, errors, wall)


def _write_outputs(cfg, all_cells, results, out_dir):
    files, errors = [], []
    summary_input = {}
    ckpt_dir = out_dir / "checkpoints"
    for idx, cell in enumerate(all_cells):
        mine = sorted((r for r in results if r.cell_index == idx), key=lambda r: r.trial)
        for r in mine:
            if r.error:
                errors.append({"cell": idx, "trial": r.trial, "error": r.error})
        for algo in cfg["experiment"]["algorithms"]:
            records = [rec for r in mine for rec in r.records.get(algo, [])]
            name = f"{algo}{cell.suffix}.csv"
            (out_dir / name).write_text(records_to_csv(records))
            files.append(name)
            summary_input[cell.tag(algo)] = records
            for r in mine:
                rows = r.checkpoints.get(algo)
                if rows:
                    ckpt_dir.mkdir(exist_ok=True)
                    cname = f"checkpoints/{algo}{cell.suffix}_trial{r.trial}.csv"
                    width = len(rows[0].split(",")) - 2
                    header = ",".join(["r", "node"] + [f"w{i + 1}" for i in range(width)])
                    (out_dir / cname).write_text(header + "\n" + "\n".join(rows) + "\n")
                    files.append(cname)
    write_summary(summarize(summary_input), out_dir / "summary.csv")
    files.append("summary.csv")
    return files, errors
