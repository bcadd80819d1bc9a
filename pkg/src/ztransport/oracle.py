"""Exact numerical ground truth for transport formulas.

Builds pairs of fully specified finite structural models that share a
diagram and differ only at the selection-pointed nodes, enumerates their
observational and interventional distributions exactly, and measures the
worst-case error of a symbolic formula against the true effect.

Each bidirected edge is realized as one shared hidden variable; every node
additionally owns a private noise input so that strictly positive joints
are attainable with deterministic mechanism tables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .expr import EvalError, ProbExpr, SOURCE, TARGET, base_var, evaluate, free_variables
from .graph import InputError, Query, SelectionDiagram, SemiMarkovianGraph

MAX_NODES = 12
MAX_TABLE_ENTRIES = 10_000_000
DEFAULT_LATENT_ARITY = 4
MIN_ATOM = 0.05


def _private_noise_arity(arity: int) -> int:
    """Enough private randomness that uniformly drawn mechanisms usually
    reach every output value, keeping rejection for positivity cheap."""
    return max(8, 4 * arity)


class OracleError(RuntimeError):
    """Generation or enumeration could not satisfy its contract."""


@dataclass(frozen=True)
class Table:
    """Exact probability table over ``vars`` (node order), cached marginals."""

    vars: tuple[str, ...]
    arities: dict[str, int]
    probs: np.ndarray
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def total(self) -> float:
        return float(self.probs.sum())

    def marginal(self, keep: Iterable[str]) -> np.ndarray:
        """Array over ``keep`` in this table's variable order."""
        keep_set = frozenset(keep)
        unknown = keep_set - set(self.vars)
        if unknown:
            raise EvalError(f"variables not in table: {sorted(unknown)}")
        if keep_set in self._cache:
            return self._cache[keep_set]
        drop_axes = tuple(i for i, v in enumerate(self.vars) if v not in keep_set)
        out = self.probs.sum(axis=drop_axes) if drop_axes else self.probs
        self._cache[keep_set] = out
        return out

    def prob(self, assignment: Mapping[str, int]) -> float:
        """Marginal probability of a (possibly partial) assignment."""
        arr = self.marginal(assignment.keys())
        kept = [v for v in self.vars if v in assignment]
        idx = tuple(assignment[v] for v in kept)
        return float(arr[idx])

    def conditional(self, outcome: Mapping[str, int], given: Mapping[str, int]) -> float:
        if not given:
            return self.prob(outcome)
        p_given = self.prob(given)
        if p_given <= 0.0:
            raise EvalError(f"conditioning event has zero probability: {dict(given)}")
        joint = dict(outcome)
        joint.update(given)
        return self.prob(joint) / p_given


def _positive_simplex(rng: np.random.Generator, k: int) -> np.ndarray:
    """Random distribution over k atoms, each bounded away from zero.

    Atoms stay above MIN_ATOM; for spaces too large for that, the floor
    scales as half the uniform weight instead.
    """
    floor = min(MIN_ATOM, 0.5 / k)
    d = rng.dirichlet(np.ones(k))
    return floor + (1.0 - floor * k) * d


@dataclass(frozen=True)
class DiscreteSCM:
    """Finite structural model over a semi-Markovian diagram.

    ``latents`` maps one hidden variable per bidirected edge to its
    distribution.  ``functions[v]`` is a deterministic lookup array indexed
    by (observed parents of v in node order, shared latents at v in edge
    order, private noise of v) yielding v's value.  ``noise[v]`` is the
    private noise distribution.
    """

    diagram: SemiMarkovianGraph
    arities: dict[str, int]
    latents: dict[frozenset[str], np.ndarray]
    noise: dict[str, np.ndarray]
    functions: dict[str, np.ndarray]
    _memo: dict = field(default_factory=dict, compare=False, repr=False)

    def edges_at(self, v: str) -> list[frozenset[str]]:
        return [e for e in self._edge_order if v in e]

    @property
    def _edge_order(self) -> list[frozenset[str]]:
        g = self.diagram
        return sorted(self.latents.keys(), key=lambda e: tuple(sorted(g.index[n] for n in e)))

    def cpt(self, v: str) -> np.ndarray:
        """P(v | observed parents, shared latents at v), private noise folded in.

        Axes: parents (node order), shared latents at v (edge order), v.
        """
        if v in self._memo:
            return self._memo[v]
        fn = self.functions[v]
        k = self.arities[v]
        shape = fn.shape[:-1]  # parents x latents; last axis is private noise
        noise = self.noise[v]
        out = np.zeros(shape + (k,))
        for u, p_u in enumerate(noise):
            vals = fn[..., u]
            for val in range(k):
                out[..., val] += p_u * (vals == val)
        self._memo[v] = out
        return out

    def intervened(self, do: Mapping[str, int]) -> "DiscreteSCM":
        """Submodel with the mechanisms of ``do`` replaced by constants."""
        self.diagram.check_nodes(do.keys())
        functions = dict(self.functions)
        for v, val in do.items():
            if not (0 <= val < self.arities[v]):
                raise InputError(f"value {val} out of range for {v}")
            functions[v] = np.full_like(self.functions[v], val)
        return DiscreteSCM(self.diagram, self.arities, self.latents, self.noise, functions)

    def exogenized(self, nodes: Iterable[str]) -> "DiscreteSCM":
        """Replace mechanisms so the given nodes depend on private noise only."""
        self.diagram.check_nodes(nodes)
        functions = dict(self.functions)
        for v in nodes:
            k = self.arities[v]
            fn = self.functions[v]
            flat = np.arange(fn.shape[-1]) % k
            functions[v] = np.broadcast_to(flat, fn.shape).copy()
        return DiscreteSCM(self.diagram, self.arities, self.latents, self.noise, functions)


def _draw_scm(
    d: SelectionDiagram, rng: np.random.Generator, arity: int, latent_arity: int
) -> DiscreteSCM:
    g = d.graph
    arities = {v: arity for v in g.nodes}
    noise_arity = _private_noise_arity(arity)
    latents: dict[frozenset[str], np.ndarray] = {}
    edge_order = sorted(g.bidirected_edges, key=lambda e: tuple(sorted(g.index[n] for n in e)))
    for e in edge_order:
        latents[e] = _positive_simplex(rng, latent_arity)
    noise = {v: _positive_simplex(rng, noise_arity) for v in g.nodes}
    functions = {}
    for v in g.nodes:
        pa = g.sorted(g.parents[v])
        n_edges = sum(1 for e in edge_order if v in e)
        shape = tuple(arities[p] for p in pa) + (latent_arity,) * n_edges + (noise_arity,)
        functions[v] = rng.integers(0, arities[v], size=shape)
    return DiscreteSCM(g, arities, latents, noise, functions)


@dataclass(frozen=True)
class DiscreteModelPair:
    """Source and target models sharing diagram, arities and hidden structure;
    mechanism discrepancies are confined to the selection-pointed nodes."""

    diagram: SelectionDiagram
    source: DiscreteSCM
    target: DiscreteSCM


def generate_pair(
    d: SelectionDiagram, seed: int, arity: int = 2, latent_arity: int = DEFAULT_LATENT_ARITY
) -> DiscreteModelPair:
    """Deterministic-in-seed model pair compatible with the selection diagram.

    Rejects and regenerates (incrementing a sub-seed) until both induced
    observational joints are strictly positive.
    """
    if arity < 2:
        raise InputError("arity must be at least 2")
    if len(d.graph.nodes) > MAX_NODES:
        raise InputError(f"diagram exceeds the {MAX_NODES}-node enumeration budget")
    for attempt in range(500):
        rng = np.random.default_rng([seed, attempt])
        source = _draw_scm(d, rng, arity, latent_arity)
        if d.s_targets:
            rng_t = np.random.default_rng([seed, attempt, 1])
            noise = dict(source.noise)
            functions = dict(source.functions)
            for v in d.graph.sorted(d.s_targets):
                noise[v] = _positive_simplex(rng_t, _private_noise_arity(arity))
                functions[v] = rng_t.integers(0, arity, size=source.functions[v].shape)
            target = DiscreteSCM(d.graph, source.arities, source.latents, noise, functions)
        else:
            target = source
        if enumerate_joint(source, {}).probs.min() > 0 and (
            target is source or enumerate_joint(target, {}).probs.min() > 0
        ):
            return DiscreteModelPair(d, source, target)
    raise OracleError(f"could not draw a strictly positive pair for seed {seed}")


def enumerate_joint(m: DiscreteSCM, do_set: Mapping[str, int] | None = None) -> Table:
    """Exact distribution over the non-intervened observables under do(do_set).

    Works on one grid whose axes are the observables followed by the shared
    hidden variables; every mechanism and hidden prior is broadcast onto it
    and the hidden axes are summed out at the end.
    """
    do = dict(do_set or {})
    m.diagram.check_nodes(do.keys())
    for v, val in do.items():
        if not (0 <= val < m.arities[v]):
            raise InputError(f"value {val} out of range for {v}")
    model = m.intervened(do) if do else m
    g = m.diagram
    nodes = list(g.nodes)
    n = len(nodes)
    edge_order = model._edge_order
    axis = {v: i for i, v in enumerate(nodes)}
    axis.update({e: n + k for k, e in enumerate(edge_order)})
    dims = [m.arities[v] for v in nodes] + [len(model.latents[e]) for e in edge_order]
    total_axes = len(dims)

    grid = np.ones(dims) if dims else np.array(1.0)
    for e in edge_order:
        shape = [1] * total_axes
        shape[axis[e]] = dims[axis[e]]
        grid = grid * model.latents[e].reshape(shape)
    for v in nodes:
        pa = g.sorted(g.parents[v])
        v_edges = model.edges_at(v)
        cpt = model.cpt(v)  # axes: parents, shared latents at v, v
        involved = [axis[p] for p in pa] + [axis[e] for e in v_edges] + [axis[v]]
        perm = np.argsort(involved)
        cpt_t = np.transpose(cpt, perm)
        shape = [1] * total_axes
        for i_ax, a in zip(sorted(involved), cpt_t.shape):
            shape[i_ax] = a
        grid = grid * cpt_t.reshape(shape)
    if edge_order:
        grid = grid.sum(axis=tuple(range(n, total_axes)))

    keep = [v for v in nodes if v not in do]
    if do:
        index = tuple(do[v] if v in do else slice(None) for v in nodes)
        grid = grid[index]
    table = Table(tuple(keep), {v: m.arities[v] for v in keep}, grid)
    if abs(table.total() - 1.0) > 1e-9:
        raise OracleError(f"enumerated table sums to {table.total()}, not 1")
    return table


@dataclass(frozen=True)
class DistributionSet:
    """Concrete tables backing formula evaluation: the target observational
    joint plus one source table per available do() assignment."""

    target_joint: Table
    source_interventional: dict[frozenset, Table]
    node_arities: dict[str, int]

    def arity(self, v: str) -> int:
        try:
            return self.node_arities[base_var(v)]
        except KeyError:
            raise EvalError(f"unknown variable: {v}")

    def table_for(self, domain: str, do_assignment: Mapping[str, int]) -> Table:
        if domain == TARGET:
            if do_assignment:
                raise EvalError("target terms carry no interventions")
            return self.target_joint
        if domain == SOURCE:
            key = frozenset(do_assignment.items())
            try:
                return self.source_interventional[key]
            except KeyError:
                raise EvalError(f"no source table for do({dict(do_assignment)})")
        raise EvalError(f"bad domain: {domain!r}")


def build_distribution_set(p: DiscreteModelPair, z: Iterable[str]) -> DistributionSet:
    """Target joint plus source tables for every do() over a subset of z.

    The index set is every Z' with Z' a subset of z and Z' != V, including
    the empty set (the source observational distribution).
    """
    g = p.diagram.graph
    zs = g.sorted(g.check_nodes(z))
    n = len(g.nodes)
    entries = 0
    subsets = []
    for r in range(len(zs) + 1):
        for combo in itertools.combinations(zs, r):
            if len(combo) == n:
                continue  # experiments on all of V are not available
            n_assign = int(np.prod([p.source.arities[v] for v in combo])) if combo else 1
            cells = int(np.prod([p.source.arities[v] for v in g.nodes if v not in combo]))
            entries += n_assign * cells
            subsets.append(combo)
    if entries > MAX_TABLE_ENTRIES:
        raise InputError(f"distribution set needs {entries} table entries; budget is {MAX_TABLE_ENTRIES}")

    source_tables: dict[frozenset, Table] = {}
    for combo in subsets:
        ranges = [range(p.source.arities[v]) for v in combo]
        for values in itertools.product(*ranges):
            assignment = dict(zip(combo, values))
            source_tables[frozenset(assignment.items())] = enumerate_joint(p.source, assignment)
    return DistributionSet(
        target_joint=enumerate_joint(p.target, {}),
        source_interventional=source_tables,
        node_arities=dict(p.source.arities),
    )


def ground_truth_effect(m: DiscreteSCM, x: Mapping[str, int], y: Iterable[str]) -> Table:
    """Marginal of the interventional distribution do(x) onto y."""
    ys = m.diagram.check_nodes(y)
    if ys & set(x):
        raise InputError("outcome overlaps the intervention assignment")
    joint = enumerate_joint(m, x)
    keep = tuple(v for v in joint.vars if v in ys)
    arr = joint.marginal(keep)
    return Table(keep, {v: m.arities[v] for v in keep}, arr)


def validate_formula(
    e: ProbExpr,
    p: DiscreteModelPair,
    q: Query,
    tables: DistributionSet | None = None,
) -> float:
    """Max absolute error of the formula against the true target effect,
    over every assignment of the query's x and y.

    Free slots outside x and y (auxiliary context variables introduced by
    the algorithm) are bound to 0; a correct formula's value does not
    depend on them.
    """
    g = p.diagram.graph
    q.validate_against(g)
    if tables is None:
        tables = build_distribution_set(p, q.z)
    xs = g.sorted(q.x)
    ys = g.sorted(q.y)
    aux = sorted(free_variables(e) - q.x - q.y)
    worst = 0.0
    for x_vals in itertools.product(*[range(p.source.arities[v]) for v in xs]):
        x_assign = dict(zip(xs, x_vals))
        truth = ground_truth_effect(p.target, x_assign, ys)
        for y_vals in itertools.product(*[range(p.source.arities[v]) for v in ys]):
            binding = dict(x_assign)
            binding.update(zip(ys, y_vals))
            for v in aux:
                binding[v] = 0
            got = evaluate(e, tables, binding)
            want = truth.prob(dict(zip(ys, y_vals)))
            worst = max(worst, abs(got - want))
    return worst
