"""Grounding and pruned truth-table entailment.

A first-order :class:`~mixthought.logic.Theory` is expanded over its finite
constant domain into propositional form, then decided by walking the
assignment tree in variable-id order. A branch is abandoned as soon as some
premise is already false under the partial row (Kleene three-valued
evaluation). The surviving leaves are exactly the models of the premises.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Mapping, Optional

from .errors import EmptyDomainWithQuantifier, VarCapExceeded
from .logic import (
    CONSTANT,
    And,
    Atom,
    ForAll,
    Formula,
    Iff,
    Implies,
    Not,
    Or,
    Theory,
    atoms,
    const,
    format_formula,
    has_quantifier,
)

DEFAULT_VAR_CAP = 24
DEFAULT_ROW_SAMPLE_CAP = 64
ORACLE_VAR_CAP = 20


class Verdict(str, Enum):
    TRUE = "True"
    FALSE = "False"
    UNCERTAIN = "Uncertain"
    INCONSISTENT = "Inconsistent"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class PropVar:
    id: int
    label: str


@dataclass(frozen=True)
class GroundTheory:
    vars: tuple[PropVar, ...]
    premises: tuple[Formula, ...]
    conclusion: Formula

    @cached_property
    def index(self) -> dict[str, int]:
        return {v.label: v.id for v in self.vars}

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(v.label for v in self.vars)


Assignment = tuple  # tuple[bool, ...] indexed by PropVar.id


@dataclass(frozen=True)
class EntailmentResult:
    verdict: Verdict
    surviving_count: int
    satisfying_count: int
    sample_rows: tuple[Assignment, ...]
    vars_count: int
    labels: tuple[str, ...]
    pruned_partial_count: int = 0
    nodes_visited: int = 0


# --------------------------------------------------------------------------
# grounding


def _substitute(f: Formula, name: str, value: str) -> Formula:
    if isinstance(f, Atom):
        if not any(t.name == name and t.kind != CONSTANT for t in f.args):
            return f
        return Atom(
            f.predicate,
            tuple(const(value) if (t.name == name and t.kind != CONSTANT) else t for t in f.args),
        )
    if isinstance(f, Not):
        return Not(_substitute(f.operand, name, value))
    if isinstance(f, (And, Or, Implies, Iff)):
        return type(f)(_substitute(f.left, name, value), _substitute(f.right, name, value))
    if f.var == name:  # shadowed by an inner binder
        return f
    return type(f)(f.var, _substitute(f.body, name, value))


def _expand(f: Formula, constants: tuple[str, ...]) -> Formula:
    if isinstance(f, Atom):
        return f
    if isinstance(f, Not):
        return Not(_expand(f.operand, constants))
    if isinstance(f, (And, Or, Implies, Iff)):
        return type(f)(_expand(f.left, constants), _expand(f.right, constants))
    if not constants:
        raise EmptyDomainWithQuantifier()
    join = And if isinstance(f, ForAll) else Or
    instances = [_expand(_substitute(f.body, f.var, c), constants) for c in constants]
    out = instances[0]
    for g in instances[1:]:
        out = join(out, g)
    return out


def ground(theory: Theory, var_cap: int = DEFAULT_VAR_CAP) -> GroundTheory:
    """Instantiate quantifiers over the constant domain and number the ground atoms.

    Variable ids follow first occurrence, scanning the premises in order and
    then the conclusion.
    """
    formulas = (*theory.premises, theory.conclusion)
    if not theory.constants and any(has_quantifier(f) for f in formulas):
        raise EmptyDomainWithQuantifier()
    premises = tuple(_expand(p, theory.constants) for p in theory.premises)
    conclusion = _expand(theory.conclusion, theory.constants)
    labels: dict[str, int] = {}
    for f in (*premises, conclusion):
        for a in atoms(f):
            if a.label not in labels:
                labels[a.label] = len(labels)
                if len(labels) > var_cap:
                    raise VarCapExceeded(_count_labels((*premises, conclusion)), var_cap)
    pvars = tuple(PropVar(i, label) for label, i in labels.items())
    return GroundTheory(pvars, premises, conclusion)


def _count_labels(formulas) -> int:
    return len({a.label for f in formulas for a in atoms(f)})


# --------------------------------------------------------------------------
# classical evaluation


def eval_formula(f: Formula, assignment: Mapping[str, bool]) -> bool:
    """Two-valued truth of a ground formula; ``assignment`` maps atom labels to bools."""
    if isinstance(f, Atom):
        return assignment[f.label]
    if isinstance(f, Not):
        return not eval_formula(f.operand, assignment)
    if isinstance(f, And):
        return eval_formula(f.left, assignment) and eval_formula(f.right, assignment)
    if isinstance(f, Or):
        return eval_formula(f.left, assignment) or eval_formula(f.right, assignment)
    if isinstance(f, Implies):
        return (not eval_formula(f.left, assignment)) or eval_formula(f.right, assignment)
    if isinstance(f, Iff):
        return eval_formula(f.left, assignment) == eval_formula(f.right, assignment)
    raise TypeError(f"quantified formula {format_formula(f)!r} is not ground")


# --------------------------------------------------------------------------
# three-valued partial evaluation (None = unassigned / unknown)

Kleene = Callable[[list], Optional[bool]]


def compile_kleene(f: Formula, index: Mapping[str, int]) -> Kleene:
    """Compile a ground formula into a Kleene evaluator over a list of tri-state values."""
    if isinstance(f, Atom):
        i = index[f.label]
        return lambda v: v[i]
    if isinstance(f, Not):
        g = compile_kleene(f.operand, index)

        def neg(v):
            x = g(v)
            return None if x is None else not x

        return neg
    left = compile_kleene(f.left, index)
    right = compile_kleene(f.right, index)
    if isinstance(f, And):

        def conj(v):
            a = left(v)
            if a is False:
                return False
            b = right(v)
            if b is False:
                return False
            return None if (a is None or b is None) else True

        return conj
    if isinstance(f, Or):

        def disj(v):
            a = left(v)
            if a is True:
                return True
            b = right(v)
            if b is True:
                return True
            return None if (a is None or b is None) else False

        return disj
    if isinstance(f, Implies):

        def imp(v):
            a = left(v)
            if a is False:
                return True
            b = right(v)
            if b is True:
                return True
            return None if (a is None or b is None) else False

        return imp
    if isinstance(f, Iff):

        def iff(v):
            a = left(v)
            if a is None:
                return None
            b = right(v)
            return None if b is None else a == b

        return iff
    raise TypeError(f"quantified formula {format_formula(f)!r} is not ground")


def _decide(surviving: int, satisfying: int) -> Verdict:
    if surviving == 0:
        return Verdict.INCONSISTENT
    if satisfying == surviving:
        return Verdict.TRUE
    if satisfying == 0:
        return Verdict.FALSE
    return Verdict.UNCERTAIN


def solve_truth_table(
    g: GroundTheory,
    var_cap: int = DEFAULT_VAR_CAP,
    row_sample_cap: int = DEFAULT_ROW_SAMPLE_CAP,
    on_prune: Callable[[tuple, int], None] | None = None,
) -> EntailmentResult:
    """Decide ``g.conclusion`` over the rows that survive premise pruning.

    ``on_prune(partial_row, premise_index)`` is called for every abandoned
    branch; ``partial_row`` holds ``None`` for unassigned variables.
    """
    n = len(g.vars)
    if n > var_cap:
        raise VarCapExceeded(n, var_cap)
    index = g.index
    compiled = [compile_kleene(p, index) for p in g.premises]
    # a premise's value can only change when one of its own variables is set
    watching: list[list[tuple[int, Kleene]]] = [[] for _ in range(n)]
    for k, p in enumerate(g.premises):
        for vid in sorted({index[a.label] for a in atoms(p)}):
            watching[vid].append((k, compiled[k]))
    conclusion = compile_kleene(g.conclusion, index)

    vals: list = [None] * n
    rows: list[Assignment] = []
    stats = {"surviving": 0, "satisfying": 0, "pruned": 0, "nodes": 0}

    def visit(i):
        stats["nodes"] += 1
        if i == n:
            stats["surviving"] += 1
            if conclusion(vals):
                stats["satisfying"] += 1
            if len(rows) < row_sample_cap:
                rows.append(tuple(vals))
            return
        for bit in (True, False):
            vals[i] = bit
            violated = next((k for k, p in watching[i] if p(vals) is False), None)
            if violated is not None:
                stats["pruned"] += 1
                if on_prune is not None:
                    on_prune(tuple(vals), violated)
                continue
            visit(i + 1)
        vals[i] = None

    visit(0)
    return EntailmentResult(
        verdict=_decide(stats["surviving"], stats["satisfying"]),
        surviving_count=stats["surviving"],
        satisfying_count=stats["satisfying"],
        sample_rows=tuple(rows),
        vars_count=n,
        labels=g.labels,
        pruned_partial_count=stats["pruned"],
        nodes_visited=stats["nodes"],
    )


def brute_force_oracle(g: GroundTheory, row_sample_cap: int = DEFAULT_ROW_SAMPLE_CAP) -> EntailmentResult:
    """Enumerate all 2^n rows without pruning. Reference implementation for tests."""
    n = len(g.vars)
    if n > ORACLE_VAR_CAP:
        raise VarCapExceeded(n, ORACLE_VAR_CAP)
    labels = g.labels
    surviving = satisfying = 0
    rows = []
    for row in itertools.product((True, False), repeat=n):
        env = dict(zip(labels, row))
        if all(eval_formula(p, env) for p in g.premises):
            surviving += 1
            satisfying += eval_formula(g.conclusion, env)
            if len(rows) < row_sample_cap:
                rows.append(row)
    if surviving == 0:
        verdict = Verdict.INCONSISTENT
    elif satisfying == surviving:
        verdict = Verdict.TRUE
    elif satisfying == 0:
        verdict = Verdict.FALSE
    else:
        verdict = Verdict.UNCERTAIN
    return EntailmentResult(verdict, surviving, satisfying, tuple(rows), n, labels, 0, 2**n)


_OPTION = {Verdict.TRUE: "A", Verdict.FALSE: "B", Verdict.UNCERTAIN: "C", Verdict.INCONSISTENT: "C"}


def verdict_to_option(v: Verdict) -> tuple[str, bool]:
    """Map a verdict to its answer letter; the flag warns that premises were inconsistent."""
    return _OPTION[Verdict(v)], Verdict(v) is Verdict.INCONSISTENT


def solve_theory(
    theory: Theory,
    var_cap: int = DEFAULT_VAR_CAP,
    row_sample_cap: int = DEFAULT_ROW_SAMPLE_CAP,
) -> EntailmentResult:
    return solve_truth_table(ground(theory, var_cap), var_cap, row_sample_cap)


def format_table(result: EntailmentResult) -> str:
    """Surviving rows as a pipe table (T/F cells)."""
    if not result.labels:
        return "(no variables)\n"
    widths = [max(len(label), 1) for label in result.labels]
    head = "| " + " | ".join(label.ljust(w) for label, w in zip(result.labels, widths)) + " |"
    rule = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    body = [
        "| " + " | ".join(("T" if b else "F").ljust(w) for b, w in zip(row, widths)) + " |"
        for row in result.sample_rows
    ]
    return "\n".join([head, rule, *body]) + "\n"
