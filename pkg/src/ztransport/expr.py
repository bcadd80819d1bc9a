"""Symbolic probability expressions for transport formulas.

The vocabulary is sums of products of atomic probability terms.  A term is a
conditional probability of one of the base distributions handed to the
engine: the target observational distribution, or a source distribution
under a do() on controllable variables.  Value slots are symbolic; the
engine manipulates variable names and evaluation binds them to values.

A quotient node is included for the cases where the identification
recursion derives a distribution whose conditionals are not expressible as
a single base-distribution term; it never appears in the golden formulas.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping

SOURCE = "source"
TARGET = "target"


def base_var(slot: str) -> str:
    """The variable a value slot refers to.

    Slots are variable names, except that marginalization dummies carry
    trailing primes (``x'``); the primes never occur in node names, so
    stripping them recovers the table column.
    """
    return slot.rstrip("'")


class ExprError(ValueError):
    """Structurally invalid expression."""


class EvalError(ValueError):
    """Evaluation failed (missing table, zero conditioning event, ...)."""


@dataclass(frozen=True)
class ProbTerm:
    """P_{do}(outcome | given) under ``domain``; do is empty for target terms."""

    domain: str
    do: tuple[str, ...]
    outcome: tuple[str, ...]
    given: tuple[str, ...]

    def __post_init__(self):
        if self.domain not in (SOURCE, TARGET):
            raise ExprError(f"bad domain: {self.domain!r}")
        if self.domain == TARGET and self.do:
            raise ExprError("target terms carry no interventions")
        if set(self.outcome) & set(self.given):
            raise ExprError("outcome and conditioners overlap")
        if set(self.do) & set(self.outcome):
            raise ExprError("interventions and outcome overlap")
        if not self.outcome:
            raise ExprError("term needs a nonempty outcome")


class ProbExpr:
    """Base class; concrete nodes are Term, Product, Sum, One, Quotient."""

    __slots__ = ()


@dataclass(frozen=True)
class Term(ProbExpr):
    term: ProbTerm


@dataclass(frozen=True)
class Product(ProbExpr):
    factors: tuple[ProbExpr, ...]


@dataclass(frozen=True)
class Sum(ProbExpr):
    over: frozenset[str]
    body: ProbExpr


@dataclass(frozen=True)
class One(ProbExpr):
    pass


@dataclass(frozen=True)
class Quotient(ProbExpr):
    num: ProbExpr
    den: ProbExpr


ONE = One()


def term(
    domain: str,
    outcome: Iterable[str],
    given: Iterable[str] = (),
    do: Iterable[str] = (),
) -> Term:
    """Build a term; variable lists are stored sorted for canonical equality."""
    return Term(
        ProbTerm(
            domain=domain,
            do=tuple(sorted(set(do))),
            outcome=tuple(sorted(set(outcome))),
            given=tuple(sorted(set(given))),
        )
    )


def product(factors: Iterable[ProbExpr]) -> ProbExpr:
    fs = tuple(factors)
    if not fs:
        return ONE
    if len(fs) == 1:
        return fs[0]
    return Product(fs)


def sum_over(over: Iterable[str], body: ProbExpr) -> ProbExpr:
    ov = frozenset(over)
    if not ov:
        return body
    return Sum(ov, body)


def free_variables(e: ProbExpr) -> frozenset[str]:
    """All value slots not bound by an enclosing sum."""
    if isinstance(e, Term):
        t = e.term
        return frozenset(t.do) | frozenset(t.outcome) | frozenset(t.given)
    if isinstance(e, Product):
        out: frozenset[str] = frozenset()
        for f in e.factors:
            out |= free_variables(f)
        return out
    if isinstance(e, Sum):
        return free_variables(e.body) - e.over
    if isinstance(e, Quotient):
        return free_variables(e.num) | free_variables(e.den)
    if isinstance(e, One):
        return frozenset()
    raise ExprError(f"not a ProbExpr: {e!r}")


def all_slots(e: ProbExpr) -> frozenset[str]:
    """Every slot mentioned anywhere, free or bound."""
    if isinstance(e, Term):
        t = e.term
        return frozenset(t.do) | frozenset(t.outcome) | frozenset(t.given)
    if isinstance(e, Product):
        out: frozenset[str] = frozenset()
        for f in e.factors:
            out |= all_slots(f)
        return out
    if isinstance(e, Sum):
        return all_slots(e.body) | e.over
    if isinstance(e, Quotient):
        return all_slots(e.num) | all_slots(e.den)
    return frozenset()


def substitute(e: ProbExpr, mapping: Mapping[str, str]) -> ProbExpr:
    """Rename free slots; descends into sums but respects their bindings."""
    if not mapping:
        return e
    if isinstance(e, Term):
        t = e.term
        sub = lambda vs: tuple(sorted(mapping.get(v, v) for v in vs))
        return Term(ProbTerm(t.domain, sub(t.do), sub(t.outcome), sub(t.given)))
    if isinstance(e, Product):
        return Product(tuple(substitute(f, mapping) for f in e.factors))
    if isinstance(e, Sum):
        inner = {k: v for k, v in mapping.items() if k not in e.over}
        return Sum(e.over, substitute(e.body, inner))
    if isinstance(e, Quotient):
        return Quotient(substitute(e.num, mapping), substitute(e.den, mapping))
    return e


def marginal_sum(removed: Iterable[str], body: ProbExpr) -> ProbExpr:
    """Sum ``body`` over ``removed``, renaming the bound slots to fresh
    primed dummies so no enclosing binding or free use is shadowed."""
    removed = list(removed)
    if not removed:
        return body
    taken = set(all_slots(body))
    mapping = {}
    for v in removed:
        fresh = v + "'"
        while fresh in taken:
            fresh += "'"
        taken.add(fresh)
        mapping[v] = fresh
    return Sum(frozenset(mapping.values()), substitute(body, mapping))


def validate(e: ProbExpr, bound: frozenset[str] = frozenset()) -> None:
    """Raise ExprError on double binding or sum variables absent from the body."""
    if isinstance(e, Sum):
        if e.over & bound:
            raise ExprError(f"double binding of {sorted(e.over & bound)}")
        if not e.over <= free_variables(e.body):
            missing = e.over - free_variables(e.body)
            raise ExprError(f"sum binds variables absent from body: {sorted(missing)}")
        validate(e.body, bound | e.over)
    elif isinstance(e, Product):
        for f in e.factors:
            validate(f, bound)
    elif isinstance(e, Quotient):
        validate(e.num, bound)
        validate(e.den, bound)
    elif not isinstance(e, (Term, One)):
        raise ExprError(f"not a ProbExpr: {e!r}")


def _sort_key(e: ProbExpr):
    if isinstance(e, Term):
        t = e.term
        return (0, t.domain, t.do, t.outcome, t.given)
    if isinstance(e, One):
        return (1,)
    if isinstance(e, Product):
        return (2, tuple(_sort_key(f) for f in e.factors))
    if isinstance(e, Sum):
        return (3, tuple(sorted(e.over)), _sort_key(e.body))
    return (4, _sort_key(e.num), _sort_key(e.den))


def normalize(e: ProbExpr) -> ProbExpr:
    """Canonical form for structural comparison.

    Products are flattened and sorted, identity factors absorbed, nested
    sums merged, and sum variables that do not occur free in the body are
    dropped.  Two expressions differing only in factor order, sum-variable
    order or trivial nesting normalize identically.  No algebraic rewriting
    (no cancellation) is performed.
    """
    if isinstance(e, (Term, One)):
        return e
    if isinstance(e, Product):
        factors: list[ProbExpr] = []
        for f in e.factors:
            nf = normalize(f)
            if isinstance(nf, One):
                continue
            if isinstance(nf, Product):
                factors.extend(nf.factors)
            else:
                factors.append(nf)
        factors.sort(key=_sort_key)
        return product(factors)
    if isinstance(e, Sum):
        body = normalize(e.body)
        over = set(e.over)
        while isinstance(body, Sum):
            over |= body.over
            body = body.body
        over &= free_variables(body)
        if isinstance(body, One) or not over:
            return body
        return Sum(frozenset(over), body)
    if isinstance(e, Quotient):
        num, den = normalize(e.num), normalize(e.den)
        if isinstance(den, One):
            return num
        return Quotient(num, den)
    raise ExprError(f"not a ProbExpr: {e!r}")


# ---------------------------------------------------------------------------
# rendering

def _slot_text(v: str) -> str:
    return v.lower()


def _slot_latex(v: str) -> str:
    s = v.lower()
    head = s.rstrip("0123456789")
    tail = s[len(head):]
    return f"{head}_{{{tail}}}" if head and tail else s


def _term_text(t: ProbTerm) -> str:
    head = "P*" if t.domain == TARGET else "P"
    if t.do:
        head += "_{%s}" % ",".join(_slot_text(v) for v in t.do)
    body = ",".join(_slot_text(v) for v in t.outcome)
    if t.given:
        body += "|" + ",".join(_slot_text(v) for v in t.given)
    return f"{head}({body})"


def _term_latex(t: ProbTerm) -> str:
    head = "P^{*}" if t.domain == TARGET else "P"
    if t.do:
        head += "_{%s}" % ", ".join(_slot_latex(v) for v in t.do)
    body = ", ".join(_slot_latex(v) for v in t.outcome)
    if t.given:
        body += r" \mid " + ", ".join(_slot_latex(v) for v in t.given)
    return f"{head}\\left({body}\\right)"


def render(e: ProbExpr, format: str = "text") -> str:
    """Render as plain text, LaTeX, or a lossless JSON string."""
    if format == "text":
        return _render_text(e, top=True)
    if format == "latex":
        return _render_latex(e)
    if format == "json":
        import json

        return json.dumps(to_json(e), sort_keys=True)
    raise ExprError(f"unknown render format: {format!r}")


def _render_text(e: ProbExpr, top: bool = False) -> str:
    if isinstance(e, Term):
        return _term_text(e.term)
    if isinstance(e, One):
        return "1"
    if isinstance(e, Product):
        parts = []
        for f in e.factors:
            s = _render_text(f)
            if isinstance(f, (Sum, Quotient)):
                s = f"({s})"
            parts.append(s)
        return " ".join(parts)
    if isinstance(e, Sum):
        ov = ",".join(_slot_text(v) for v in sorted(e.over))
        return f"sum_{{{ov}}} {_render_text(e.body)}"
    if isinstance(e, Quotient):
        return f"({_render_text(e.num)}) / ({_render_text(e.den)})"
    raise ExprError(f"not a ProbExpr: {e!r}")


def _render_latex(e: ProbExpr) -> str:
    if isinstance(e, Term):
        return _term_latex(e.term)
    if isinstance(e, One):
        return "1"
    if isinstance(e, Product):
        parts = []
        for f in e.factors:
            s = _render_latex(f)
            if isinstance(f, (Sum,)):
                s = f"\\left({s}\\right)"
            parts.append(s)
        return " ".join(parts)
    if isinstance(e, Sum):
        ov = ", ".join(_slot_latex(v) for v in sorted(e.over))
        return f"\\sum_{{{ov}}} {_render_latex(e.body)}"
    if isinstance(e, Quotient):
        return f"\\frac{{{_render_latex(e.num)}}}{{{_render_latex(e.den)}}}"
    raise ExprError(f"not a ProbExpr: {e!r}")


def to_json(e: ProbExpr) -> dict:
    if isinstance(e, Term):
        t = e.term
        return {
            "kind": "term",
            "domain": t.domain,
            "do": list(t.do),
            "outcome": list(t.outcome),
            "given": list(t.given),
        }
    if isinstance(e, One):
        return {"kind": "one"}
    if isinstance(e, Product):
        return {"kind": "product", "factors": [to_json(f) for f in e.factors]}
    if isinstance(e, Sum):
        return {"kind": "sum", "over": sorted(e.over), "body": to_json(e.body)}
    if isinstance(e, Quotient):
        return {"kind": "ratio", "num": to_json(e.num), "den": to_json(e.den)}
    raise ExprError(f"not a ProbExpr: {e!r}")


def from_json(obj: dict) -> ProbExpr:
    kind = obj.get("kind")
    if kind == "term":
        return Term(
            ProbTerm(
                domain=obj["domain"],
                do=tuple(obj["do"]),
                outcome=tuple(obj["outcome"]),
                given=tuple(obj["given"]),
            )
        )
    if kind == "one":
        return ONE
    if kind == "product":
        return Product(tuple(from_json(f) for f in obj["factors"]))
    if kind == "sum":
        return Sum(frozenset(obj["over"]), from_json(obj["body"]))
    if kind == "ratio":
        return Quotient(from_json(obj["num"]), from_json(obj["den"]))
    raise ExprError(f"bad expression JSON: {obj!r}")


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: ProbExpr, tables, binding: Mapping[str, int]) -> float:
    """Evaluate against a DistributionSet-like table supply.

    ``tables`` must provide ``arity(var) -> int`` and
    ``table_for(domain, do_assignment) -> Table`` where Table has
    ``conditional(outcome_assignment, given_assignment) -> float``.
    Every free variable of ``e`` must be bound.
    """
    missing = free_variables(e) - set(binding)
    if missing:
        raise EvalError(f"unbound variables: {sorted(missing)}")
    return _eval(e, tables, dict(binding))


def _eval(e: ProbExpr, tables, binding: dict[str, int]) -> float:
    if isinstance(e, One):
        return 1.0
    if isinstance(e, Term):
        t = e.term
        do_assign = {base_var(v): binding[v] for v in t.do}
        table = tables.table_for(t.domain, do_assign)
        return table.conditional(
            {base_var(v): binding[v] for v in t.outcome},
            {base_var(v): binding[v] for v in t.given},
        )
    if isinstance(e, Product):
        out = 1.0
        for f in e.factors:
            out *= _eval(f, tables, binding)
            if out == 0.0:
                return 0.0
        return out
    if isinstance(e, Sum):
        bound = sorted(e.over)
        saved = {v: binding[v] for v in bound if v in binding}
        total = 0.0
        ranges = [range(tables.arity(v)) for v in bound]
        for combo in itertools.product(*ranges):
            for v, val in zip(bound, combo):
                binding[v] = val
            total += _eval(e.body, tables, binding)
        for v in bound:
            if v in saved:
                binding[v] = saved[v]
            else:
                del binding[v]
        return total
    if isinstance(e, Quotient):
        den = _eval(e.den, tables, binding)
        if den <= 0.0:
            raise EvalError("zero or negative denominator in quotient")
        return _eval(e.num, tables, binding) / den
    raise ExprError(f"not a ProbExpr: {e!r}")
