"""Identification engines for z-transportability.

``gid_z`` decides generalized z-identifiability of P_x(y) from the source
observational distribution plus experiments on subsets of Z, allowing
Z to overlap X.  ``sid_z`` decides z-transportability over a selection
diagram, postponing the use of experiments until after the c-component
factorization and choosing, per factor, between the source (directly
transportable components) and the target (trivially transportable ones).
Failures surface as hedge or s-hedge witnesses.

The recursion threads a symbolic stand-in for its current distribution:
a labeled base distribution (domain, do-set), a chain of conditional
factors built over a c-component, or an opaque joint expression when a
chain had to be marginalized over a non-suffix of its order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from . import expr as E
from .expr import ONE, ProbExpr, marginal_sum, product, sum_over, term
from .graph import (
    CComponent,
    InputError,
    SelectionDiagram,
    SemiMarkovianGraph,
    ancestors,
    c_components,
    induced_subgraph,
    mutilate,
    topological_order,
)


class InternalError(RuntimeError):
    """An algorithm invariant was violated; indicates a bug, not bad input."""


@dataclass(frozen=True)
class IdentContext:
    """Active experiments: those switched on while covering X and W
    (``active_line3``) and those switched on at decomposition time
    (``active_decomp``)."""

    active_line3: frozenset[str] = frozenset()
    active_decomp: frozenset[str] = frozenset()

    @property
    def active(self) -> frozenset[str]:
        return self.active_line3 | self.active_decomp


@dataclass(frozen=True)
class DistLabel:
    """Which base distribution the current call reads: a domain plus the
    do-set of the experiment it came from."""

    domain: str = E.SOURCE
    do: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Witness:
    """Evidence of failure: the single-c-component graph F and the strict
    subgraph F' at which identification got stuck."""

    kind: str  # "hedge" | "shedge"
    f_graph: SemiMarkovianGraph
    f_sub: SemiMarkovianGraph
    s_targets_in_component: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.kind not in ("hedge", "shedge"):
            raise InputError(f"bad witness kind: {self.kind}")


@dataclass(frozen=True)
class IdentTrace:
    """Per-call instrumentation used by the consistency test suites."""

    line3_activations: int = 0
    decompositions: int = 0
    partition: tuple[frozenset[str], ...] | None = None


@dataclass(frozen=True)
class IdentResult:
    """Either a formula or a failure witness, plus warnings and a trace."""

    formula: ProbExpr | None = None
    witness: Witness | None = None
    warnings: tuple[str, ...] = ()
    trace: IdentTrace = field(default=IdentTrace(), compare=False)

    @property
    def ok(self) -> bool:
        return self.formula is not None

    def __post_init__(self):
        if (self.formula is None) == (self.witness is None):
            raise InternalError("exactly one of formula/witness must be set")


class _Fail(Exception):
    """Internal control flow for FAIL<F, F'>."""

    def __init__(self, f_graph: SemiMarkovianGraph, f_sub: SemiMarkovianGraph):
        self.f_graph = f_graph
        self.f_sub = f_sub


class _Trace:
    __slots__ = ("line3", "decomp", "partition")

    def __init__(self):
        self.line3 = 0
        self.decomp = 0
        self.partition: tuple[frozenset[str], ...] | None = None

    def frozen(self) -> IdentTrace:
        return IdentTrace(self.line3, self.decomp, self.partition)


# ---------------------------------------------------------------------------
# symbolic stand-ins for the current distribution


class _Dist:
    """Interface: the current distribution over the random variables of the
    current graph, able to emit marginal and conditional expressions."""

    def restrict(self, keep: tuple[str, ...]) -> "_Dist":
        raise NotImplementedError

    def marginal_expr(self, y: tuple[str, ...]) -> ProbExpr:
        raise NotImplementedError

    def conditional_expr(self, v: str, given: tuple[str, ...]) -> ProbExpr:
        raise NotImplementedError

    def preferred_order(self, g: SemiMarkovianGraph) -> list[str]:
        """Order used when emitting factor chains.  A chain must keep the
        order its factors were built with (a valid topological order of any
        later subgraph); other stand-ins follow the graph's canonical order."""
        return topological_order(g)


@dataclass(frozen=True)
class _Base(_Dist):
    """A marginal of one of the supplied base distributions."""

    label: DistLabel
    vars: tuple[str, ...]  # current graph nodes, in node order

    @property
    def rand(self) -> tuple[str, ...]:
        return tuple(v for v in self.vars if v not in self.label.do)

    def activate(self, newly: frozenset[str]) -> "_Base":
        return _Base(DistLabel(self.label.domain, self.label.do | newly), self.vars)

    def restrict(self, keep: tuple[str, ...]) -> "_Base":
        return _Base(self.label, keep)

    def marginal_expr(self, y: tuple[str, ...]) -> ProbExpr:
        if not y:
            return ONE
        return term(self.label.domain, outcome=y, do=self.label.do)

    def conditional_expr(self, v: str, given: tuple[str, ...]) -> ProbExpr:
        cond = tuple(w for w in given if w not in self.label.do)
        return term(self.label.domain, outcome=(v,), given=cond, do=self.label.do)


@dataclass(frozen=True)
class _Chain(_Dist):
    """A product of conditional factors, one per variable, in graph order.

    Prefix marginals telescope, so dropping a suffix of factors is the
    marginal onto the remaining variables, and the conditional of a
    variable given all its predecessors is its own factor.
    """

    factors: tuple[tuple[str, ProbExpr], ...]

    @property
    def rand(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.factors)

    def restrict(self, keep: tuple[str, ...]) -> "_Dist":
        keep_set = frozenset(keep)
        kept = [(v, f) for v, f in self.factors if v in keep_set]
        removed = [v for v, _ in self.factors if v not in keep_set]
        if not removed:
            return self
        first_removed = min(i for i, (v, _) in enumerate(self.factors) if v not in keep_set)
        if first_removed >= len(kept):  # removed set is a suffix of the order
            return _Chain(tuple(kept))
        joint = marginal_sum(removed, product(f for _, f in self.factors))
        return _Joint(joint, tuple(v for v, _ in kept))

    def marginal_expr(self, y: tuple[str, ...]) -> ProbExpr:
        y_set = frozenset(y)
        removed = [v for v, _ in self.factors if v not in y_set]
        if removed and min(
            i for i, (v, _) in enumerate(self.factors) if v not in y_set
        ) >= len(self.factors) - len(removed):
            return product(f for v, f in self.factors if v in y_set)
        return marginal_sum(removed, product(f for _, f in self.factors))

    def conditional_expr(self, v: str, given: tuple[str, ...]) -> ProbExpr:
        for w, f in self.factors:
            if w == v:
                return f
        raise InternalError(f"no chain factor for {v}")

    def preferred_order(self, g: SemiMarkovianGraph) -> list[str]:
        return [v for v, _ in self.factors if v in g.node_set]


@dataclass(frozen=True)
class _Joint(_Dist):
    """An opaque joint expression over ``rand``; conditionals become
    quotients of its partial sums."""

    joint: ProbExpr
    rand_vars: tuple[str, ...]

    @property
    def rand(self) -> tuple[str, ...]:
        return self.rand_vars

    def restrict(self, keep: tuple[str, ...]) -> "_Joint":
        keep_set = frozenset(keep)
        removed = [v for v in self.rand_vars if v not in keep_set]
        kept = tuple(v for v in self.rand_vars if v in keep_set)
        return _Joint(marginal_sum(removed, self.joint), kept)

    def marginal_expr(self, y: tuple[str, ...]) -> ProbExpr:
        y_set = frozenset(y)
        return marginal_sum([v for v in self.rand_vars if v not in y_set], self.joint)

    def conditional_expr(self, v: str, given: tuple[str, ...]) -> ProbExpr:
        given_r = frozenset(given) & frozenset(self.rand_vars)
        num = marginal_sum([w for w in self.rand_vars if w not in given_r and w != v], self.joint)
        den = marginal_sum([w for w in self.rand_vars if w not in given_r], self.joint)
        return E.Quotient(num, den)


def _chain_over(
    P: _Dist, g: SemiMarkovianGraph, members: frozenset[str]
) -> _Chain:
    """Chain of P's conditionals for ``members``, each given every
    predecessor of the variable in P's factorization order."""
    order = P.preferred_order(g)
    factors = []
    for i, v in enumerate(order):
        if v in members:
            preds = tuple(order[:i])
            factors.append((v, P.conditional_expr(v, preds)))
    return _Chain(tuple(factors))


# ---------------------------------------------------------------------------
# GID^z

def _gid(
    y: frozenset[str],
    x: frozenset[str],
    z: frozenset[str],
    i_set: frozenset[str],
    j_set: frozenset[str],
    P: _Dist,
    g: SemiMarkovianGraph,
    trace: _Trace,
    depth: int,
) -> ProbExpr:
    if depth <= 0:
        raise InternalError("recursion depth guard exceeded")
    V = g.node_set

    # nothing left to intervene on: read the marginal off the current P
    if not x:
        return P.marginal_expr(g.sorted(y))

    # restrict to the ancestors of y
    an_y = ancestors(g, y)
    if V - an_y:
        g2 = induced_subgraph(g, an_y)
        return _gid(y, x & an_y, z, i_set, j_set, P.restrict(g2.nodes), g2, trace, depth - 1)

    # cover x with the non-ancestors it creates, switching on experiments
    # where the controllable set allows it
    xij = (x | i_set | j_set) & V
    w = V - xij - ancestors(mutilate(g, xij), y)
    z_w = z & (x | w)
    if z_w | w:
        if z_w:
            trace.line3 += 1
            if trace.line3 > 1:
                raise InternalError("experiments were activated twice in one trace")
            if not isinstance(P, _Base):
                raise InternalError("activation requires a base distribution")
            P = P.activate(z_w)
            g = mutilate(g, z_w)
        return _gid(y, (x | w) - z_w, z - z_w, i_set | z_w, j_set, P, g, trace, depth - 1)

    # factorize over the confounded components
    comps = c_components(induced_subgraph(g, V - xij))
    if trace.partition is None:
        trace.partition = tuple(c.members for c in comps)
    if len(comps) > 1:
        trace.decomp += 1
        if trace.decomp > 1:
            raise InternalError("decomposition executed twice in one trace")
        factors = []
        for c in comps:
            newly = z & (V - c.members)
            if newly and not isinstance(P, _Base):
                raise InternalError("activation requires a base distribution")
            p_i = P.activate(newly) if newly else P
            g_i = mutilate(g, newly) if newly else g
            factors.append(
                _gid(
                    c.members,
                    (V - c.members) - z,
                    z & c.members,
                    i_set,
                    j_set | newly,
                    p_i,
                    g_i,
                    trace,
                    depth - 1,
                )
            )
        bound = V - (y | x | ((i_set | j_set) & V))
        return sum_over(g.sorted(bound), product(factors))
    c = comps[0].members

    g_comps = c_components(g)
    # a single confounded component spanning the whole graph is a dead end
    if len(g_comps) == 1:
        raise _Fail(g, induced_subgraph(g, c))

    containing = next(s.members for s in g_comps if c <= s.members)
    order = P.preferred_order(g)
    # the component is intact in g: emit its factor chain directly
    if c == containing:
        factors = [
            P.conditional_expr(v, tuple(order[:i]))
            for i, v in enumerate(order)
            if v in c
        ]
        return marginal_sum(g.sorted(c - y), product(factors))

    # otherwise descend into the strictly larger component
    chain = _chain_over(P, g, containing)
    g2 = induced_subgraph(g, containing)
    return _gid(y, x & containing, z, i_set, j_set, chain, g2, trace, depth - 1)


def _entry_checks(
    y: Iterable[str], x: Iterable[str], z: Iterable[str], g: SemiMarkovianGraph
) -> tuple[frozenset[str], frozenset[str], frozenset[str], list[str]]:
    ys = g.check_nodes(y)
    xs = g.check_nodes(x)
    zs = g.check_nodes(z)
    if not ys:
        raise InputError("outcome set y must be nonempty")
    if xs & ys:
        raise InputError(f"x and y overlap: {sorted(xs & ys)}")
    warnings = []
    if zs & ys:
        warnings.append(
            "dropped controllable variables inside y (experiments on them "
            f"have no bearing): {sorted(zs & ys)}"
        )
        zs = zs - ys
    return ys, xs, zs, warnings


def gid_z(
    y: Iterable[str],
    x: Iterable[str],
    z: Iterable[str],
    g: SemiMarkovianGraph,
    ctx: IdentContext | None = None,
    dist: DistLabel | None = None,
) -> IdentResult:
    """Generalized z-identification of P_x(y) from P plus experiments on
    subsets of z.  Returns a source-only formula or a hedge witness.

    The initial call leaves ``ctx`` empty and ``dist`` as the source
    observational distribution; when a nonempty context is supplied the
    graph must already have the incoming edges of the active experiments
    removed.
    """
    ys, xs, zs, warnings = _entry_checks(y, x, z, g)
    ctx = ctx or IdentContext()
    label = dist or DistLabel()
    if label.domain == E.TARGET and (zs or ctx.active):
        raise InputError("experiments are only available in the source domain")
    trace = _Trace()
    base = _Base(label, g.nodes)
    try:
        f = _gid(
            ys, xs, zs, ctx.active_line3, ctx.active_decomp, base, g, trace, 4 * len(g.nodes) + 8
        )
    except _Fail as e:
        w = Witness("hedge", e.f_graph, e.f_sub)
        return IdentResult(witness=w, warnings=tuple(warnings), trace=trace.frozen())
    return IdentResult(formula=f, warnings=tuple(warnings), trace=trace.frozen())


# ---------------------------------------------------------------------------
# sID^z and BI

def _bi(
    y: frozenset[str],
    x: frozenset[str],
    P: _Dist,
    g: SemiMarkovianGraph,
    active: frozenset[str],
    depth: int,
) -> ProbExpr:
    """Identify the c-factor for y from the current distribution.

    ``g`` already has the incoming edges of ``active`` removed.
    """
    if depth <= 0:
        raise InternalError("recursion depth guard exceeded")
    V = g.node_set

    if not x:
        return P.marginal_expr(g.sorted(y))

    an_y = ancestors(g, y)
    if V != an_y:
        g2 = induced_subgraph(g, an_y)
        return _bi(y, x & an_y, P.restrict(g2.nodes), g2, active & an_y, depth - 1)

    comps = c_components(induced_subgraph(g, V - (x | active)))
    holding = [s.members for s in comps if y <= s.members]
    if not holding:
        # a call from the transport decision always lands in one component;
        # direct callers must ask about a single factor at a time
        raise InputError("y must lie inside one confounded component of g minus x")
    c = holding[0]

    g_comps = c_components(g)
    if len(g_comps) == 1:
        raise _Fail(g, induced_subgraph(g, c))

    containing = next(s.members for s in g_comps if c <= s.members)
    order = P.preferred_order(g)
    if c == containing:
        factors = [
            P.conditional_expr(v, tuple(order[:i]))
            for i, v in enumerate(order)
            if v in c
        ]
        return marginal_sum(g.sorted(c - y), product(factors))

    chain = _chain_over(P, g, containing)
    g2 = induced_subgraph(g, containing)
    return _bi(y, x & containing, chain, g2, active & containing, depth - 1)


def bi(
    y: Iterable[str],
    x: Iterable[str],
    dist: DistLabel,
    g: SemiMarkovianGraph,
    active: Iterable[str] = (),
) -> ProbExpr:
    """Public c-factor identification; raises a hedge-shaped failure.

    ``g`` must already have the incoming edges into ``active`` removed, and
    ``dist`` names the table the emitted terms read (its do-set is the
    experiment that produced it).
    """
    ys = g.check_nodes(y)
    xs = g.check_nodes(x)
    act = g.check_nodes(active)
    if not ys:
        raise InputError("outcome set y must be nonempty")
    if ys & (xs | act):
        raise InputError("y overlaps x or the active experiments")
    base = _Base(dist, g.nodes)
    try:
        return _bi(ys, xs, base, g, act, 4 * len(g.nodes) + 8)
    except _Fail as e:
        raise FailedFactor(Witness("hedge", e.f_graph, e.f_sub))


class FailedFactor(Exception):
    """Raised by ``bi`` when a c-factor is not identifiable; carries the witness."""

    def __init__(self, witness: Witness):
        self.witness = witness
        super().__init__(witness.kind)


def direct_transportable(c: CComponent, d: SelectionDiagram) -> bool:
    """True iff no selection-pointed node lies in the component, in which
    case the component's factor is invariant across the two domains."""
    d.graph.check_nodes(c.members)
    return not (d.s_targets & c.members)


def _sid(
    y: frozenset[str],
    x: frozenset[str],
    d: SelectionDiagram,
    z: frozenset[str],
    trace: _Trace,
    depth: int,
) -> ProbExpr:
    if depth <= 0:
        raise InternalError("recursion depth guard exceeded")
    g = d.graph
    V = g.node_set

    if not x:
        return term(E.TARGET, outcome=g.sorted(y))
    an_y = ancestors(g, y)
    if V != an_y:
        return _sid(y, x & an_y, d.restricted(an_y), z & an_y, trace, depth - 1)
    # cover x with the non-ancestors it creates; experiments stay inactive
    # until after the factorization
    w = V - x - ancestors(mutilate(g, x), y)
    if w:
        return _sid(y, x | w, d, z, trace, depth - 1)
    # factorize over the confounded components
    comps = c_components(induced_subgraph(g, V - x))
    trace.partition = tuple(c.members for c in comps)
    factors = []
    for c in comps:
        # the factor transports directly iff no marked node lies in the component
        if direct_transportable(c, d):
            do_set = z & (V - c.members)
            g_i = mutilate(g, do_set)
            base = _Base(DistLabel(E.SOURCE, do_set), g_i.nodes)
            try:
                factors.append(
                    _bi(c.members, (V - c.members) - z, base, g_i, do_set, depth - 1)
                )
            except _Fail as e:
                raise _SidFail(Witness("hedge", e.f_graph, e.f_sub))
        else:
            base = _Base(DistLabel(E.TARGET), g.nodes)
            try:
                factors.append(_bi(c.members, V - c.members, base, g, frozenset(), depth - 1))
            except _Fail as e:
                raise _SidFail(
                    Witness(
                        "shedge",
                        e.f_graph,
                        e.f_sub,
                        s_targets_in_component=d.s_targets & c.members,
                    )
                )
    bound = V - (y | x)
    return sum_over(g.sorted(bound), product(factors))


class _SidFail(Exception):
    def __init__(self, witness: Witness):
        self.witness = witness


def sid_z(
    y: Iterable[str],
    x: Iterable[str],
    d: SelectionDiagram,
    z: Iterable[str],
) -> IdentResult:
    """Decide z-transportability of P_x(y) and emit a transport formula
    over the target observational distribution and source experiments on
    subsets of z, or fail with a hedge / s-hedge witness."""
    g = d.graph
    ys, xs, zs, warnings = _entry_checks(y, x, z, g)
    trace = _Trace()
    try:
        f = _sid(ys, xs, d, zs, trace, 4 * len(g.nodes) + 8)
    except _SidFail as e:
        return IdentResult(witness=e.witness, warnings=tuple(warnings), trace=trace.frozen())
    return IdentResult(formula=f, warnings=tuple(warnings), trace=trace.frozen())


def transportable(y: Iterable[str], x: Iterable[str], d: SelectionDiagram) -> IdentResult:
    """Plain transportability: z-transportability with every variable controllable."""
    return sid_z(y, x, d, d.graph.nodes)
