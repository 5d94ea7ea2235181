"""Comparison algorithms: DGD, local coordinate descent, centralized coordinate descent."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceFailure, NumericFault
from .metrics import MetricsRecord
from .protocol import AttackSpec, RunResult, StepSchedule, _Layout, _resolve_honest, _stack_shards, initial_states
from .topology import DirectedGraph

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BaselineConfig:
    """Step schedule, iteration budget and bookkeeping for a baseline run.

    ``iterations`` counts vector exchanges for DGD and sweeps over all
    coordinates for local CD. With ``line_search`` local CD minimizes exactly
    along each coordinate instead of taking a scheduled gradient step.
    """

    kind: str = "dgd"
    schedule: StepSchedule = field(default_factory=StepSchedule)
    iterations: int = 100
    line_search: bool = False
    init: object = "zero"
    init_scale: float = 0.1
    init_seed: int = 0
    every: int = 1

    def __post_init__(self):
        if self.kind not in ("dgd", "local-cd", "centralized-cd"):
            raise ConfigError(f"unknown baseline kind {self.kind!r}")
        if self.iterations < 0 or self.every < 1:
            raise ConfigError("iterations must be >= 0 and every >= 1")


def _check_finite(W, honest, where):
    if not np.all(np.isfinite(W)):
        row = int(np.flatnonzero(~np.all(np.isfinite(W), axis=-1))[0])
        raise NumericFault("non-finite state", {"node": honest[row], **where})


# ---------------------------------------------------------------- DGD


def run_dgd(
    graph: DirectedGraph,
    shards: dict,
    model,
    cfg: BaselineConfig,
    attack: AttackSpec | None = None,
    sink=None,
    evaluator=None,
    trial: int = 0,
    algo: str = "dgd",
    on_round=None,
) -> RunResult:
    """Equal-weight neighborhood averaging followed by a local gradient step.

    Every iteration node j replaces its vector by the plain average over its
    in-neighbors and itself, then subtracts ``rho(r)`` times its local gradient
    evaluated before mixing. Nothing is screened.
    """
    attack = attack or AttackSpec()
    honest = _resolve_honest(graph, shards, attack)
    layout = _Layout(graph, attack.byzantine, honest)
    X, y = _stack_shards(shards, honest)
    H = len(honest)
    P = model.n_params(X.shape[-1])
    W = initial_states(cfg.init, cfg.init_scale, cfg.init_seed, H, P)
    rng = np.random.default_rng(attack.seed)
    weight = 1.0 / (layout.deg + 1.0)
    result = RunResult(states={})
    for r in range(1, cfg.iterations + 1):
        byz = attack.emit(rng, W, H)
        if attack.per_receiver:
            table = np.zeros((H, layout.M + 1, P))
            table[:, layout.honest_cols] = W[None]
            if len(layout.byz_cols):
                table[:, layout.byz_cols] = byz
            received = np.take_along_axis(table, layout.senders[..., None], axis=1)
        else:
            table = np.zeros((layout.M + 1, P))
            table[layout.honest_cols] = W
            if len(layout.byz_cols):
                table[layout.byz_cols] = byz
            received = table[layout.senders]
        with np.errstate(over="ignore", invalid="ignore"):  # reported as NumericFault below
            mixed = (W + received.sum(axis=1)) * weight[:, None]
            W = mixed - cfg.schedule(r) * model.grad(W, X, y)
        _check_finite(W, honest, {"r": r})
        if evaluator is not None and (r % cfg.every == 0 or r == cfg.iterations):
            rec = MetricsRecord(trial, algo, r, None, None, r, **evaluator(W))
            result.records.append(rec)
            if sink is not None:
                sink(rec)
        if on_round is not None:
            on_round(r, honest, W.copy())
    result.states = {n: W[row].copy() for row, n in enumerate(honest)}
    return result


# ---------------------------------------------------------------- coordinate line search


def _coordinate_curvature(model, X, k):
    """Crude upper bound on the second derivative of the risk along coordinate k."""
    D = X.shape[-1]
    xk2 = float(np.mean(X[:, k] ** 2)) if k < D else 1.0
    return (0.25 if model.kind == "logistic" else 2.0) * xk2 + model.lam


def line_minimize(model, w, X, y, k, bracket_tol=1e-10):
    """Exact minimization of a convex risk along coordinate ``k``.

    The minimum is bracketed by doubling steps downhill from the current
    point, then narrowed by golden-section search until the bracket is
    shorter than ``bracket_tol``. Returns the optimal displacement.
    """
    D = X.shape[-1]
    z0 = model.scores(w, X)
    xk = X[:, k] if k < D else np.ones(X.shape[0])
    wk = float(w[k])
    half_lam = 0.5 * model.lam

    def phi(delta):
        return float(model.loss_of_scores(z0 + delta * xk, y).mean()) + half_lam * (wk + delta) ** 2

    g = float(model.coord_grad(w, X, y, k))
    if g == 0.0:
        return 0.0
    s = -1.0 if g > 0 else 1.0
    h = abs(g) / _coordinate_curvature(model, X, k)
    lo, f_lo = 0.0, phi(0.0)
    mid, f_mid = s * h, phi(s * h)
    if f_mid >= f_lo:
        # the first trial overshoots: minimum lies in [0, h]
        a, c = 0.0, s * h
    else:
        while True:
            h *= 2.0
            hi, f_hi = s * h, phi(s * h)
            if f_hi >= f_mid:
                break
            lo, f_lo, mid, f_mid = mid, f_mid, hi, f_hi
            if h > 1e12:
                raise ConvergenceFailure(f"line search along coordinate {k} did not bracket a minimum")
        a, c = lo, hi
    a, c = min(a, c), max(a, c)
    x1 = c - GOLDEN * (c - a)
    x2 = a + GOLDEN * (c - a)
    f1, f2 = phi(x1), phi(x2)
    while c - a > bracket_tol:
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - GOLDEN * (c - a)
            f1 = phi(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (c - a)
            f2 = phi(x2)
    best = 0.5 * (a + c)
    return best if phi(best) <= phi(0.0) else 0.0


def _cd_sweep(model, w, X, y, rho, line_search, order):
    for k in order:
        if line_search:
            w[k] += line_minimize(model, w, X, y, k)
        else:
            w[k] -= rho * float(model.coord_grad(w, X, y, k))
    return w


# ---------------------------------------------------------------- local CD


def run_local_cd(
    shards: dict,
    model,
    cfg: BaselineConfig,
    sink=None,
    evaluator=None,
    trial: int = 0,
    algo: str = "local-cd",
    honest=None,
) -> RunResult:
    """Cyclic coordinate descent on each node's own shard, with no communication.

    Records use ``t_c`` for the number of per-dimension updates so far.
    """
    honest = sorted(shards) if honest is None else list(honest)
    X, y = _stack_shards(shards, honest)
    H = len(honest)
    P = model.n_params(X.shape[-1])
    W = initial_states(cfg.init, cfg.init_scale, cfg.init_seed, H, P)
    result = RunResult(states={})
    for r in range(1, cfg.iterations + 1):
        rho = cfg.schedule(r)
        logged = evaluator is not None and (r % cfg.every == 0 or r == cfg.iterations)
        for k in range(P):
            if cfg.line_search:
                for row in range(H):
                    W[row, k] += line_minimize(model, W[row], X[row], y[row], k)
            else:
                W[:, k] -= rho * model.coord_grad(W, X, y, k)
            _check_finite(W, honest, {"r": r, "k": k + 1})
            if logged:
                rec = MetricsRecord(trial, algo, r, k + 1, 1, (r - 1) * P + k + 1, **evaluator(W))
                result.records.append(rec)
                if sink is not None:
                    sink(rec)
    result.states = {n: W[row].copy() for row, n in enumerate(honest)}
    return result


# ---------------------------------------------------------------- centralized CD


@dataclass
class CentralizedResult:
    w: np.ndarray
    risk: float
    sweeps: int
    risks: list = field(default_factory=list)  # risk after each sweep


def run_centralized_cd(
    dataset,
    model,
    tolerance: float = 1e-12,
    w0=None,
    max_sweeps: int = 10000,
    schedule: StepSchedule | None = None,
    on_sweep=None,
) -> CentralizedResult:
    """Cyclic coordinate descent on the pooled data.

    Convex kinds use exact line search on every coordinate and stop once a
    sweep lowers the risk by less than ``tolerance``; running out of sweeps
    first raises :class:`ConvergenceFailure`. The mlp kind takes one
    scheduled gradient step per coordinate (line search is not meaningful on
    a nonconvex risk) and always runs ``max_sweeps`` sweeps.
    ``on_sweep(r, w)`` may return True to stop early.
    """
    if tolerance <= 0:
        raise ConfigError("tolerance must be positive")
    X = np.asarray(dataset.X, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    P = model.n_params(X.shape[-1])
    w = np.zeros(P) if w0 is None else np.array(w0, dtype=float)
    if w.shape != (P,):
        raise ConfigError(f"initial vector has shape {w.shape}, expected ({P},)")
    line_search = model.convex
    if not line_search and schedule is None:
        raise ConfigError("the mlp kind needs a step schedule")
    current = float(model.risk(w, X, y))
    risks = []
    order = range(P)
    for r in range(1, max_sweeps + 1):
        rho = schedule(r) if schedule is not None else 0.0
        _cd_sweep(model, w, X, y, rho, line_search, order)
        if not np.all(np.isfinite(w)):
            raise NumericFault("non-finite iterate in centralized coordinate descent", {"r": r})
        new = float(model.risk(w, X, y))
        risks.append(new)
        stop = on_sweep(r, w.copy()) if on_sweep is not None else False
        if line_search and current - new < tolerance:
            return CentralizedResult(w, new, r, risks)
        current = new
        if stop:
            return CentralizedResult(w, new, r, risks)
    if line_search:
        raise ConvergenceFailure(f"no convergence to tolerance {tolerance} within {max_sweeps} sweeps")
    return CentralizedResult(w, current, max_sweeps, risks)
