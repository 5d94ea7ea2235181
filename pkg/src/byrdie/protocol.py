"""ByRDiE engine: coordinate-wise broadcast, trimmed screening, and update.

Rounds are bulk-synchronous: within one inner iteration every honest node
reads the values all nodes held before that iteration, so the result does
not depend on the order in which nodes are processed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegreeViolation, NumericFault, ProtocolViolation
from .metrics import MetricsRecord, comm_iteration
from .topology import DirectedGraph, validate_degrees

# ---------------------------------------------------------------- step sizes


@dataclass(frozen=True)
class StepSchedule:
    """``rho(tau) = rho0 / (tau + tau0) ** power`` with ``power`` in (0.5, 1].

    That family is positive, non-increasing, not summable and square-summable,
    which is all the protocol asks of a step schedule.
    """

    rho0: float = 1.0
    tau0: float = 0.0
    power: float = 1.0

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ConfigError("rho0 must be positive")
        if not 0.5 < self.power <= 1.0:
            raise ConfigError(f"power must lie in (0.5, 1], got {self.power}")
        if self.tau0 <= -1:
            raise ConfigError("tau0 must exceed -1 so that rho(1) is finite")

    def __call__(self, tau: int) -> float:
        if tau < 1:
            raise ConfigError(f"step index must be >= 1, got {tau}")
        return self.rho0 / (tau + self.tau0) ** self.power


def schedule_step(schedule: StepSchedule, tau: int) -> float:
    return schedule(tau)


# ---------------------------------------------------------------- attacks

ATTACK_KINDS = ("none", "uniform", "constant", "sign_flip", "spoof")


@dataclass(frozen=True)
class AttackSpec:
    """What Byzantine nodes send.

    * ``uniform``: fresh draw from U(lo, hi), the same value to every receiver.
    * ``constant``: ``value`` to everyone.
    * ``sign_flip``: ``-scale`` times the honest mean of the broadcast quantity.
    * ``spoof``: an independent U(lo, hi) draw for every receiver.

    Draws come from a generator seeded with ``seed`` at the start of a run, so
    a run replays exactly.
    """

    kind: str = "none"
    byzantine: tuple = ()
    lo: float = 0.0
    hi: float = 1.0
    value: float = 0.0
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        object.__setattr__(self, "byzantine", tuple(sorted(int(n) for n in self.byzantine)))
        if self.kind == "none" and self.byzantine:
            raise ConfigError("attack kind 'none' cannot name Byzantine nodes")

    @property
    def per_receiver(self) -> bool:
        return self.kind == "spoof"

    def emit(self, rng: np.random.Generator, honest_values: np.ndarray, n_receivers: int) -> np.ndarray:
        """Values sent this iteration.

        ``honest_values`` is ``(H,)`` for a scalar exchange or ``(H, P)`` for a
        vector exchange. The result is ``(n_byz,) + tail`` for broadcast kinds
        and ``(n_receivers, n_byz) + tail`` for ``spoof``.
        """
        n = len(self.byzantine)
        tail = honest_values.shape[1:]
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size=(n,) + tail)
        if self.kind == "constant":
            return np.full((n,) + tail, float(self.value))
        if self.kind == "sign_flip":
            return np.broadcast_to(-self.scale * honest_values.mean(axis=0), (n,) + tail).copy()
        if self.kind == "spoof":
            return rng.uniform(self.lo, self.hi, size=(n_receivers, n) + tail)
        return np.zeros((0,) + tail)


# ---------------------------------------------------------------- scalar building blocks


@dataclass(frozen=True)
class ScreenResult:
    kept: tuple  # (sender, value) pairs that survive, in sorted order
    removed_low: tuple  # senders of the b smallest values
    removed_high: tuple  # senders of the b largest values

    @property
    def kept_values(self):
        return [v for _, v in self.kept]


def _sort_key(item):
    sender, value = item
    value = float(value)
    if math.isnan(value):
        value = math.inf
    return (value, sender)


def screen(values, self_value: float, b: int) -> ScreenResult:
    """Drop the ``b`` smallest and ``b`` largest received values.

    Ties are ordered by (value, sender id); NaN sorts as +inf. The node's own
    value is not part of the screened set.
    """
    values = list(values)
    if b < 0:
        raise ConfigError("b must be non-negative")
    if len(values) < 2 * b + 1:
        raise ProtocolViolation(f"received {len(values)} values, screening with b={b} needs {2 * b + 1}")
    ordered = sorted(values, key=_sort_key)
    low = tuple(s for s, _ in ordered[:b])
    high = tuple(s for s, _ in ordered[len(ordered) - b:]) if b else ()
    kept = tuple(ordered[b:len(ordered) - b])
    return ScreenResult(kept, low, high)


def update_coordinate(w, k: int, kept_values, rho: float, g_k: float, context=None) -> float:
    """Average own coordinate with the surviving values, then take a gradient step.

    The divisor is ``len(kept) + 1``, which equals |N_j| - 2b + 1 whenever the
    screen removed exactly 2b values.
    """
    total = float(w[k]) + float(np.sum(kept_values))
    new = total / (len(kept_values) + 1) - rho * g_k
    if not math.isfinite(new):
        raise NumericFault("non-finite coordinate update", context)
    return new


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class ProtocolConfig:
    """Knobs of one ByRDiE run.

    ``init`` is ``"zero"``, ``"random"`` (one N(0, init_scale^2) vector shared
    by every honest node, drawn from ``init_seed``), or an explicit array of
    shape (P,) or (H, P). ``cadence`` is ``"t"`` (every inner iteration),
    ``"rk"`` (end of each coordinate) or ``"r"`` (end of each round); rounds
    are only recorded when ``r % every == 0`` or ``r == r_bar``.
    """

    b: int
    T: int = 1
    r_bar: int = 100
    schedule: StepSchedule = field(default_factory=StepSchedule)
    order: str = "natural"
    order_seed: int = 0
    init: object = "zero"
    init_scale: float = 0.1
    init_seed: int = 0
    consensus_only: bool = False
    cadence: str = "rk"
    every: int = 1
    reference: bool = False

    def __post_init__(self):
        if self.b < 0 or self.T < 1 or self.r_bar < 0:
            raise ConfigError(f"invalid protocol config b={self.b} T={self.T} r_bar={self.r_bar}")
        if self.order not in ("natural", "permuted"):
            raise ConfigError(f"unknown coordinate order {self.order!r}")
        if self.cadence not in ("t", "rk", "r"):
            raise ConfigError(f"unknown metric cadence {self.cadence!r}")
        if self.every < 1:
            raise ConfigError("every must be >= 1")


@dataclass
class RunResult:
    """Final honest parameter vectors keyed by node id, plus emitted records."""

    states: dict
    records: list = field(default_factory=list)

    def matrix(self):
        return np.stack([self.states[n] for n in sorted(self.states)])


# ---------------------------------------------------------------- shared plumbing


class _Layout:
    """Index tables for the honest receivers of a graph.

    Column ``M`` of a value table is padding; padded slots sort after every
    real value and never enter a kept sum.
    """

    def __init__(self, graph: DirectedGraph, byzantine, honest):
        M = graph.node_count
        self.M = M
        self.honest = list(honest)
        self.byzantine = list(byzantine)
        self.honest_cols = np.asarray([n - 1 for n in self.honest], dtype=int)
        self.byz_cols = np.asarray([n - 1 for n in self.byzantine], dtype=int)
        deg = [graph.in_degree(n) for n in self.honest]
        self.deg = np.asarray(deg, dtype=int)
        width = max(deg) if deg else 0
        S = np.full((len(self.honest), width), M, dtype=int)
        for row, n in enumerate(self.honest):
            nb = graph.in_neighbors(n)
            S[row, :len(nb)] = [j - 1 for j in nb]
        self.senders = S
        self.pad = S == M


def _resolve_honest(graph, shards, attack):
    byz = set(attack.byzantine)
    unknown = byz - set(graph.nodes)
    if unknown:
        raise ConfigError(f"attack references unknown nodes {sorted(unknown)}")
    honest = [n for n in graph.nodes if n not in byz]
    if not honest:
        raise ConfigError("no honest nodes")
    missing = [n for n in honest if n not in shards]
    if missing:
        raise ConfigError(f"no shard for honest nodes {missing}")
    sizes = {len(shards[n]) for n in honest}
    if len(sizes) != 1:
        raise ConfigError(f"honest shards must share one size, got {sorted(sizes)}")
    return honest


def _stack_shards(shards, honest):
    X = np.stack([np.asarray(shards[n].X, dtype=float) for n in honest])
    y = np.stack([np.asarray(shards[n].y, dtype=float) for n in honest])
    return X, y


def initial_states(cfg_init, init_scale, init_seed, H, P):
    if isinstance(cfg_init, str):
        if cfg_init == "zero":
            return np.zeros((H, P))
        if cfg_init == "random":
            w0 = init_scale * np.random.default_rng(init_seed).standard_normal(P)
            return np.tile(w0, (H, 1))
        raise ConfigError(f"unknown initialization {cfg_init!r}")
    W = np.asarray(cfg_init, dtype=float)
    if W.shape == (P,):
        return np.tile(W, (H, 1))
    if W.shape == (H, P):
        return W.copy()
    raise ConfigError(f"initial state shape {W.shape} does not fit H={H}, P={P}")


def _value_table(layout, honest_vals, byz_vals, per_receiver):
    """Per-receiver table of what each sender transmitted this iteration."""
    H = len(layout.honest)
    if per_receiver:
        table = np.full((H, layout.M + 1), np.inf)
        table[:, layout.honest_cols] = honest_vals[None, :]
        if len(layout.byz_cols):
            table[:, layout.byz_cols] = byz_vals
        return np.take_along_axis(table, layout.senders, axis=1)
    row = np.full(layout.M + 1, np.inf)
    row[layout.honest_cols] = honest_vals
    if len(layout.byz_cols):
        row[layout.byz_cols] = byz_vals
    return row[layout.senders]


def screened_sums(layout, received, b):
    """Sum of the values surviving a (value, sender)-ordered trim of b per side."""
    key = np.where(np.isnan(received), np.inf, received)
    order = np.lexsort((layout.senders, key, layout.pad), axis=1)
    ordered = np.take_along_axis(received, order, axis=1)
    pos = np.arange(received.shape[1])[None, :]
    keep = (pos >= b) & (pos < layout.deg[:, None] - b)
    return np.where(keep, ordered, 0.0).sum(axis=1)


# ---------------------------------------------------------------- the engine


def run_byrdie(
    graph: DirectedGraph,
    shards: dict,
    model,
    cfg: ProtocolConfig,
    attack: AttackSpec | None = None,
    sink=None,
    evaluator=None,
    trial: int = 0,
    algo: str = "byrdie",
    on_round=None,
    record_wall_time: bool = False,
) -> RunResult:
    """Run ``r_bar`` rounds of coordinate-wise Byzantine-resilient descent.

    ``sink`` receives a :class:`MetricsRecord` at the configured cadence when
    an ``evaluator`` is supplied. ``on_round(r, honest_ids, W)`` is called
    after each round with the (H, P) honest state matrix.
    """
    attack = attack or AttackSpec()
    honest = _resolve_honest(graph, shards, attack)
    report = validate_degrees(graph, cfg.b)
    if not report.ok:
        raise DegreeViolation(report)
    layout = _Layout(graph, attack.byzantine, honest)
    X, y = _stack_shards(shards, honest)
    H = len(honest)
    P = model.n_params(X.shape[-1])
    W = initial_states(cfg.init, cfg.init_scale, cfg.init_seed, H, P)
    attack_rng = np.random.default_rng(attack.seed)
    order_rng = np.random.default_rng(cfg.order_seed)
    denom = (layout.deg - 2 * cfg.b + 1).astype(float)
    result = RunResult(states={})
    started = time.perf_counter()

    def emit(r, kpos, t):
        if evaluator is None:
            return
        wall = int((time.perf_counter() - started) * 1000) if record_wall_time else None
        rec = MetricsRecord(trial, algo, r, kpos, t, comm_iteration(r, kpos, t, cfg.T, P), wall_ms=wall, **evaluator(W))
        result.records.append(rec)
        if sink is not None:
            sink(rec)

    for r in range(1, cfg.r_bar + 1):
        coords = order_rng.permutation(P) if cfg.order == "permuted" else np.arange(P)
        logged = r % cfg.every == 0 or r == cfg.r_bar
        for kpos, k in enumerate(coords, start=1):
            for t in range(1, cfg.T + 1):
                rho = cfg.schedule(r + t - 1)
                current = W[:, k].copy()
                byz_vals = attack.emit(attack_rng, current, H)
                if cfg.consensus_only:
                    g = np.zeros(H)
                else:
                    g = model.coord_grad(W, X, y, int(k))
                if cfg.reference:
                    W[:, k] = _reference_step(layout, current, byz_vals, attack.per_receiver, cfg.b, rho, g, (r, kpos, t))
                else:
                    received = _value_table(layout, current, byz_vals, attack.per_receiver)
                    new = (current + screened_sums(layout, received, cfg.b)) / denom - rho * g
                    if not np.all(np.isfinite(new)):
                        bad = int(np.flatnonzero(~np.isfinite(new))[0])
                        raise NumericFault(
                            "non-finite coordinate update",
                            {"node": honest[bad], "r": r, "k": int(k) + 1, "t": t},
                        )
                    W[:, k] = new
                if logged and cfg.cadence == "t":
                    emit(r, kpos, t)
            if logged and cfg.cadence == "rk":
                emit(r, kpos, cfg.T)
        if logged and cfg.cadence == "r":
            emit(r, P, cfg.T)
        if on_round is not None:
            on_round(r, honest, W.copy())
    result.states = {n: W[row].copy() for row, n in enumerate(honest)}
    return result


def _reference_step(layout, current, byz_vals, per_receiver, b, rho, g, where):
    """Node-by-node route through :func:`screen` and :func:`update_coordinate`."""
    sent = dict(zip(layout.honest, current.tolist()))
    new = np.empty_like(current)
    for row, node in enumerate(layout.honest):
        if per_receiver:
            byz_row = byz_vals[row]
        else:
            byz_row = byz_vals
        msgs = dict(sent)
        msgs.update(zip(layout.byzantine, np.asarray(byz_row, dtype=float).tolist()))
        senders = [c + 1 for c in layout.senders[row] if c != layout.M]
        result = screen([(s, msgs[s]) for s in senders], current[row], b)
        ctx = {"node": node, "r": where[0], "k": where[1], "t": where[2]}
        new[row] = update_coordinate(current, row, result.kept_values, rho, float(g[row]), ctx)
    return new
