import itertools

import numpy as np
import pytest

import ztransport as zt
from ztransport import expr as E
from ztransport.graph import InputError
from ztransport.oracle import (
    DiscreteModelPair,
    DiscreteSCM,
    OracleError,
    Table,
    build_distribution_set,
    enumerate_joint,
    generate_pair,
    ground_truth_effect,
    validate_formula,
)

from helpers import bow_graph, chain_graph, fig2a, fig5a, random_graph

D = zt.SelectionDiagram.create


def brute_force_joint(m: DiscreteSCM, do: dict) -> dict:
    """Independent pure-python enumeration over every hidden configuration."""
    g = m.diagram
    order = zt.topological_order(g)
    edge_order = m._edge_order
    out: dict[tuple, float] = {}
    noise_space = itertools.product(*[range(len(m.noise[v])) for v in g.nodes])
    for noise_vals in noise_space:
        noise_of = dict(zip(g.nodes, noise_vals))
        p_noise = 1.0
        for v in g.nodes:
            p_noise *= float(m.noise[v][noise_of[v]])
        for latent_vals in itertools.product(*[range(len(m.latents[e])) for e in edge_order]):
            u_of = dict(zip(edge_order, latent_vals))
            w = p_noise
            for e in edge_order:
                w *= float(m.latents[e][u_of[e]])
            values: dict[str, int] = {}
            for v in order:
                if v in do:
                    values[v] = do[v]
                    continue
                idx = tuple(values[p] for p in g.sorted(g.parents[v]))
                idx += tuple(u_of[e] for e in m.edges_at(v))
                idx += (noise_of[v],)
                values[v] = int(m.functions[v][idx])
            key = tuple(values[v] for v in g.nodes if v not in do)
            out[key] = out.get(key, 0.0) + w
    return out


# -- generate_pair --------------------------------------------------------------

def test_generate_pair_no_marks_means_identical_models():
    pair = generate_pair(D(chain_graph(), []), seed=4)
    assert pair.source is pair.target


def test_generate_pair_deterministic():
    d = fig2a()
    p1 = generate_pair(d, seed=9)
    p2 = generate_pair(d, seed=9)
    for v in d.graph.nodes:
        assert np.array_equal(p1.source.functions[v], p2.source.functions[v])
        assert np.array_equal(p1.target.functions[v], p2.target.functions[v])


def test_generate_pair_distinct_and_positive_across_seeds():
    d = fig2a()
    joints = []
    for seed in range(1, 21):
        pair = generate_pair(d, seed)
        j = enumerate_joint(pair.source, {})
        assert j.probs.min() > 0
        assert enumerate_joint(pair.target, {}).probs.min() > 0
        joints.append(j.probs)
    for a, b in itertools.combinations(joints, 2):
        assert not np.allclose(a, b)


def test_generate_pair_discrepancy_confined_to_marks():
    d = fig2a()  # marks Z
    pair = generate_pair(d, seed=2)
    for v in d.graph.nodes:
        if v not in d.s_targets:
            assert np.array_equal(pair.source.functions[v], pair.target.functions[v])
            assert np.array_equal(pair.source.noise[v], pair.target.noise[v])
    assert not np.array_equal(pair.source.functions["Z"], pair.target.functions["Z"])
    for e in pair.source.latents:  # shared hidden causes are domain-invariant
        assert np.array_equal(pair.source.latents[e], pair.target.latents[e])


def test_hidden_tables_positive_and_normalized():
    pair = generate_pair(fig2a(), seed=3)
    for dist in list(pair.source.latents.values()) + list(pair.source.noise.values()):
        assert dist.min() >= 0.049
        assert abs(dist.sum() - 1.0) < 1e-12


def test_distribution_set_entry_budget():
    g = zt.SemiMarkovianGraph.create([f"V{i}" for i in range(10)])
    pair = generate_pair(D(g, []), seed=1, arity=4)
    with pytest.raises(InputError, match="budget"):
        build_distribution_set(pair, [f"V{i}" for i in range(8)])


def test_generate_pair_node_budget():
    big = zt.SemiMarkovianGraph.create([f"V{i}" for i in range(13)])
    with pytest.raises(InputError):
        generate_pair(D(big, []), seed=1)


def test_generate_pair_rejects_arity_one():
    with pytest.raises(InputError):
        generate_pair(D(chain_graph(), []), seed=1, arity=1)


def test_generate_pair_supports_wider_arities():
    for arity in (3, 4):
        pair = generate_pair(fig2a(), seed=1, arity=arity)
        j = enumerate_joint(pair.source, {})
        assert j.probs.shape == (arity,) * 4
        assert j.probs.min() > 0


# -- enumerate_joint -------------------------------------------------------------

def test_enumerate_single_node_pushforward():
    g = zt.SemiMarkovianGraph.create(["Y"])
    noise = {"Y": np.array([0.1, 0.2, 0.3, 0.4])}
    fn = {"Y": np.array([0, 1, 1, 0])}
    m = DiscreteSCM(g, {"Y": 2}, {}, noise, fn)
    t = enumerate_joint(m, {})
    assert t.prob({"Y": 0}) == pytest.approx(0.5)
    assert t.prob({"Y": 1}) == pytest.approx(0.5)


def test_enumerate_do_everything_is_scalar_one():
    pair = generate_pair(D(chain_graph(), []), seed=1)
    t = enumerate_joint(pair.source, {"Z": 1, "X": 0, "Y": 1})
    assert t.vars == ()
    assert t.total() == pytest.approx(1.0)


def test_enumerate_matches_brute_force():
    for seed in (1, 2):
        for do in ({}, {"X": 1}):
            pair = generate_pair(D(chain_graph(), []), seed)
            got = enumerate_joint(pair.source, do)
            want = brute_force_joint(pair.source, do)
            for key, p in want.items():
                assert got.probs[key] == pytest.approx(p, abs=1e-12)


def test_enumerate_matches_brute_force_with_confounding():
    d = D(bow_graph(), [])
    pair = generate_pair(d, seed=3)
    for do in ({}, {"X": 0}):
        got = enumerate_joint(pair.source, do)
        want = brute_force_joint(pair.source, do)
        for key, p in want.items():
            assert got.probs[key] == pytest.approx(p, abs=1e-12)


def test_enumerate_tables_sum_to_one():
    for seed in range(6):
        g, _ = random_graph(seed, master=23, max_nodes=6)
        pair = generate_pair(D(g, []), seed)
        assert enumerate_joint(pair.source, {}).total() == pytest.approx(1.0, abs=1e-9)


def test_truncated_factorization_on_markovian_graphs():
    # without hidden variables, an intervention truncates the factorization
    for seed in range(4):
        g, rng = random_graph(seed, master=29, max_nodes=5, max_bi=0)
        pair = generate_pair(D(g, []), seed)
        obs = enumerate_joint(pair.source, {})
        do_vars = [v for v in g.nodes if rng.random() < 0.4][:2]
        do = {v: 1 for v in do_vars}
        got = enumerate_joint(pair.source, do)
        keep = [v for v in g.nodes if v not in do]
        for values in itertools.product(range(2), repeat=len(keep)):
            assign = dict(zip(keep, values))
            full = {**assign, **do}
            want = 1.0
            for v in keep:
                pa = {p: full[p] for p in g.parents[v]}
                want *= obs.conditional({v: full[v]}, pa)
            assert got.prob(assign) == pytest.approx(want, abs=1e-10)


def test_enumerate_rejects_out_of_range():
    pair = generate_pair(D(chain_graph(), []), seed=1)
    with pytest.raises(InputError):
        enumerate_joint(pair.source, {"X": 5})


# -- build_distribution_set ------------------------------------------------------

def test_distribution_set_empty_z():
    pair = generate_pair(D(chain_graph(), []), seed=1)
    ds = build_distribution_set(pair, [])
    assert set(ds.source_interventional) == {frozenset()}


def test_distribution_set_single_z():
    pair = generate_pair(D(chain_graph(), []), seed=1)
    ds = build_distribution_set(pair, ["Z"])
    keys = set(ds.source_interventional)
    assert keys == {frozenset(), frozenset({("Z", 0)}), frozenset({("Z", 1)})}


def test_distribution_set_table_count_two_z():
    pair = generate_pair(fig5a(), seed=1)
    ds = build_distribution_set(pair, ["Z1", "Z2"])
    # one observational + 2 per singleton + 4 for the pair
    assert len(ds.source_interventional) == 1 + 2 + 2 + 4


def test_distribution_set_never_includes_experiments_on_everything():
    g = zt.SemiMarkovianGraph.create(["X", "Y"], [("X", "Y")])
    pair = generate_pair(D(g, []), seed=1)
    ds = build_distribution_set(pair, ["X", "Y"])
    for key in ds.source_interventional:
        assert len(key) < 2  # do() on all of V is not part of the index set


def test_distribution_set_no_marks_target_equals_source():
    pair = generate_pair(D(chain_graph(), []), seed=5)
    ds = build_distribution_set(pair, [])
    src = ds.source_interventional[frozenset()]
    assert np.array_equal(ds.target_joint.probs, src.probs)


# -- ground_truth_effect ---------------------------------------------------------

def test_ground_truth_observational_marginal():
    pair = generate_pair(D(chain_graph(), []), seed=1)
    t = ground_truth_effect(pair.source, {}, ["Y"])
    obs = enumerate_joint(pair.source, {})
    assert t.prob({"Y": 1}) == pytest.approx(obs.prob({"Y": 1}))


def test_ground_truth_full_outcome_is_joint():
    pair = generate_pair(D(chain_graph(), []), seed=1)
    t = ground_truth_effect(pair.source, {"X": 1}, ["Z", "Y"])
    j = enumerate_joint(pair.source, {"X": 1})
    assert np.allclose(t.marginal(("Z", "Y")), j.marginal(("Z", "Y")))


def test_ground_truth_bow_differs_from_conditional():
    # with a hidden common cause, do(x) is not observation of x
    pair = generate_pair(D(bow_graph(), []), seed=6)
    truth = ground_truth_effect(pair.source, {"X": 1}, ["Y"]).prob({"Y": 1})
    obs = enumerate_joint(pair.source, {})
    naive = obs.conditional({"Y": 1}, {"X": 1})
    assert abs(truth - naive) > 1e-3


# -- validate_formula ------------------------------------------------------------

def test_validate_formula_marginal_query():
    d = fig2a()
    pair = generate_pair(d, seed=1)
    q = zt.Query.create([], ["Y"], [])
    err = validate_formula(E.term(E.TARGET, ["Y"]), pair, q)
    assert err <= 1e-12


def test_validate_formula_flags_corruption():
    d = fig2a()
    q = zt.Query.create(["X"], ["Y"], ["Z"])
    good = E.term(E.SOURCE, ["Y"], given=["X"], do=["Z"])
    bad = E.term(E.SOURCE, ["Y"], do=["Z"])  # conditioner dropped
    worst_good = worst_bad = 0.0
    for seed in range(1, 6):
        pair = generate_pair(d, seed)
        worst_good = max(worst_good, validate_formula(good, pair, q))
        worst_bad = max(worst_bad, validate_formula(bad, pair, q))
    assert worst_good <= 1e-9
    assert worst_bad > 1e-3


def test_table_zero_conditioning_event_raises():
    t = Table(("X", "Y"), {"X": 2, "Y": 2}, np.array([[0.5, 0.5], [0.0, 0.0]]))
    with pytest.raises(E.EvalError):
        t.conditional({"Y": 1}, {"X": 1})
