import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byrdie.baselines import BaselineConfig, line_minimize, run_centralized_cd, run_dgd, run_local_cd
from byrdie.data import Dataset, Shard, load_iris, partition, pool, synth_two_class
from byrdie.errors import ConfigError, ConvergenceFailure
from byrdie.learning import LossModel
from byrdie.metrics import Evaluator, consensus_stats
from byrdie.protocol import AttackSpec, StepSchedule
from byrdie.topology import DirectedGraph, generate_erdos_renyi

from .oracles import ridge_closed_form


def tiny_regression():
    X = np.array([[1.0, 0.5], [-0.3, 2.0], [0.7, -1.1]])
    y = np.array([0.2, -1.0, 1.4])
    return Dataset(X, y, np.arange(3), float(np.linalg.norm(X, axis=1).max()))


# ---------------------------------------------------------------- centralized CD


def test_centralized_matches_ridge_closed_form():
    ds = tiny_regression()
    model = LossModel("square", lam=0.3, bias=False)
    res = run_centralized_cd(ds, model, tolerance=1e-15, max_sweeps=100000)
    assert np.allclose(res.w, ridge_closed_form(ds.X, ds.y, 0.3), rtol=0, atol=1e-6)


def test_centralized_from_optimum_stops_after_one_sweep():
    ds = tiny_regression()
    model = LossModel("square", lam=0.3, bias=False)
    w_star = ridge_closed_form(ds.X, ds.y, 0.3)
    res = run_centralized_cd(ds, model, tolerance=1e-12, w0=w_star)
    assert res.sweeps == 1


def test_centralized_risk_decreases_per_sweep():
    ds = synth_two_class(6, 1.0, 1.0, 300, np.random.default_rng(0))
    model = LossModel("logistic", lam=0.01)
    res = run_centralized_cd(ds, model, tolerance=1e-10)
    assert np.all(np.diff(res.risks) < 0)


def test_centralized_gives_up_explicitly():
    ds = synth_two_class(6, 1.0, 1.0, 300, np.random.default_rng(0))
    with pytest.raises(ConvergenceFailure):
        run_centralized_cd(ds, LossModel("logistic", lam=0.01), tolerance=1e-14, max_sweeps=2)


def test_centralized_input_checks():
    ds = tiny_regression()
    with pytest.raises(ConfigError):
        run_centralized_cd(ds, LossModel("square"), tolerance=0.0)
    with pytest.raises(ConfigError):
        run_centralized_cd(ds, LossModel("square"), w0=np.zeros(5))
    with pytest.raises(ConfigError):
        run_centralized_cd(load_iris(), LossModel("mlp"))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["square", "square_hinge", "logistic"]), st.integers(0, 2**32 - 1))
def test_line_search_never_increases_risk(kind, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (15, 3))
    y = rng.choice([-1.0, 1.0], 15)
    model = LossModel(kind, lam=0.05)
    w = rng.standard_normal(4) * 2
    k = int(rng.integers(4))
    before = model.risk(w, X, y)
    w[k] += line_minimize(model, w, X, y, k)
    assert model.risk(w, X, y) <= before + 1e-15
    # the coordinate derivative vanishes at the new point, up to the bracket width
    if kind != "square_hinge":
        assert abs(model.coord_grad(w, X, y, k)) < 1e-6


# ---------------------------------------------------------------- DGD


def test_dgd_with_identical_shards_is_gradient_descent():
    graph = DirectedGraph.complete(4)
    ds = synth_two_class(3, 1.0, 0.5, 30, np.random.default_rng(1))
    shards = {n: Shard(n, ds) for n in graph.nodes}
    model = LossModel("logistic", lam=0.01)
    schedule = StepSchedule(0.5)
    seen = []
    run_dgd(graph, shards, model, BaselineConfig("dgd", schedule, 30), on_round=lambda r, h, W: seen.append(W))
    w = np.zeros(4)
    for r, W in enumerate(seen, start=1):
        w = w - schedule(r) * model.grad(w, ds.X, ds.y)
        assert np.allclose(W, w[None], rtol=0, atol=1e-6)


def test_dgd_without_byzantine_nodes_reaches_optimum():
    rng = np.random.default_rng(4)
    graph = generate_erdos_renyi(10, 0.6, rng, symmetric=True)
    ds = synth_two_class(4, 1.0, 1.0, 400, rng)
    part = partition(ds, list(graph.nodes), 30, True, rng)
    model = LossModel("logistic", lam=0.1)
    pooled = pool(list(part.shards.values()))
    oracle = run_centralized_cd(pooled, model, tolerance=1e-12).risk
    res = run_dgd(graph, part.shards, model, BaselineConfig("dgd", StepSchedule(2.0, 0.0, 0.6), 2000))
    W = res.matrix()
    assert consensus_stats(W)[0] < 1e-2
    risk = float(np.mean(model.risk(W, pooled.X[None], pooled.y[None])))
    assert (risk - oracle) / oracle < 1e-2


def test_dgd_single_huge_byzantine_value_breaks_learning():
    rng = np.random.default_rng(5)
    graph = DirectedGraph.complete(6)
    ds = synth_two_class(4, 1.0, 0.5, 600, rng)
    part = partition(ds, [1, 2, 3, 4, 5], 20, True, rng)
    model = LossModel("square_hinge")
    ev = Evaluator(model, pool(list(part.shards.values())), part.test)
    res = run_dgd(graph, part.shards, model, BaselineConfig("dgd", StepSchedule(), 50),
                  AttackSpec("constant", (6,), value=1e6), evaluator=ev)
    assert abs(res.records[-1].test_accuracy - 0.5) < 0.1


def test_dgd_presence_of_attackers_changes_trajectories():
    rng = np.random.default_rng(6)
    graph = DirectedGraph.complete(6)
    ds = synth_two_class(3, 1.0, 0.5, 200, rng)
    part = partition(ds, list(graph.nodes), 10, True, rng)
    model = LossModel("logistic")
    cfg = BaselineConfig("dgd", StepSchedule(), 5)
    honest_only = {n: part.shards[n] for n in (1, 2, 3, 4)}
    sub = DirectedGraph(4, frozenset((j, i) for j, i in graph.edges if j <= 4 and i <= 4))
    a = run_dgd(sub, honest_only, model, cfg).matrix()
    b = run_dgd(graph, honest_only, model, cfg, AttackSpec("uniform", (5, 6), seed=1)).matrix()
    assert not np.allclose(a, b)


# ---------------------------------------------------------------- local CD


def test_local_cd_with_full_shard_matches_centralized():
    ds = synth_two_class(3, 1.0, 1.0, 50, np.random.default_rng(2))
    model = LossModel("logistic", lam=0.05)
    res = run_local_cd({1: Shard(1, ds)}, model, BaselineConfig("local-cd", iterations=4, line_search=True))
    trace = []
    run_centralized_cd(ds, model, tolerance=1e-300, max_sweeps=10, on_sweep=lambda r, w: trace.append(w) or r == 4)
    assert np.array_equal(res.states[1], trace[3])


def test_local_cd_zero_budget_returns_initialization():
    ds = synth_two_class(3, 1.0, 1.0, 50, np.random.default_rng(2))
    cfg = BaselineConfig("local-cd", iterations=0, init="random", init_scale=0.3, init_seed=8)
    res = run_local_cd({1: Shard(1, ds), 2: Shard(2, ds)}, LossModel("logistic"), cfg)
    w1, w2 = res.states[1], res.states[2]
    assert np.any(w1 != 0) and w1.shape == (4,)
    again = run_local_cd({1: Shard(1, ds), 2: Shard(2, ds)}, LossModel("logistic"), cfg)
    assert np.array_equal(again.states[1], w1) and np.array_equal(again.states[2], w2)


def test_local_cd_counts_coordinate_updates():
    ds = synth_two_class(3, 1.0, 1.0, 50, np.random.default_rng(2))
    model = LossModel("logistic")
    ev = Evaluator(model, ds, ds)
    res = run_local_cd({1: Shard(1, ds), 2: Shard(2, ds)}, model, BaselineConfig("local-cd", iterations=2), evaluator=ev)
    assert [r.t_c for r in res.records] == list(range(1, 9))


def test_baseline_config_validation():
    with pytest.raises(ConfigError):
        BaselineConfig("krum")
    with pytest.raises(ConfigError):
        BaselineConfig("dgd", iterations=-1)
