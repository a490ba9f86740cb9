"""First-order formulas over a finite constant domain.

Concrete syntax::

    formula  := iff
    iff      := imp ('<->' imp)*              left-associative
    imp      := or ('->' imp)?                right-associative
    or       := and ('|' and)*
    and      := unary ('&' unary)*
    unary    := '~' unary | primary
    primary  := '(' formula ')'
              | ('forall' | 'exists') IDENT '(' formula ')'
              | IDENT [ '(' term (',' term)* ')' ]
    term     := IDENT                         bound variable or declared constant

Identifiers match ``[A-Za-z_][A-Za-z0-9_]*``; ``forall`` and ``exists`` are
reserved. Nullary predicates are written bare (``T``), never ``T()``.

Theory files are line oriented::

    # comment
    consts: a, b;
    preds: P/1, Q/1, T/0;
    premise: forall x (P(x) -> Q(x))
    premise: T
    conclusion: Q(a)

A line that does not start with a directive continues the previous premise
or conclusion.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import (
    ArityMismatch,
    FormulaError,
    LogicSyntaxError,
    MissingSection,
    UnboundVariable,
    UndeclaredSymbol,
)

CONSTANT = "constant"
VARIABLE = "variable"

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
KEYWORDS = frozenset({"forall", "exists"})


@dataclass(frozen=True)
class Term:
    kind: str
    name: str

    def __post_init__(self):
        if self.kind not in (CONSTANT, VARIABLE):
            raise ValueError(f"bad term kind {self.kind!r}")
        if not _IDENT_RE.match(self.name) or self.name in KEYWORDS:
            raise ValueError(f"bad identifier {self.name!r}")

    def __str__(self):
        return self.name


def const(name: str) -> Term:
    return Term(CONSTANT, name)


def var(name: str) -> Term:
    return Term(VARIABLE, name)


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Term, ...] = ()

    @property
    def label(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({', '.join(a.name for a in self.args)})"


@dataclass(frozen=True)
class Not:
    operand: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Iff:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class ForAll:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


Formula = Union[Atom, Not, And, Or, Implies, Iff, ForAll, Exists]
BINARY = (And, Or, Implies, Iff)
QUANTIFIERS = (ForAll, Exists)


@dataclass(frozen=True)
class Signature:
    """Declared constants and predicate arities."""

    constants: tuple[str, ...] = ()
    predicates: dict[str, int] = field(default_factory=dict)

    def __hash__(self):
        return hash((self.constants, tuple(self.predicates.items())))


@dataclass(frozen=True)
class Theory:
    constants: tuple[str, ...]
    predicates: tuple[tuple[str, int], ...]
    premises: tuple[Formula, ...]
    conclusion: Formula

    @property
    def signature(self) -> Signature:
        return Signature(self.constants, dict(self.predicates))

    def validate(self) -> None:
        """Check the declared-symbol closure and closedness of every formula."""
        sig = self.signature
        for f in (*self.premises, self.conclusion):
            check_formula(f, sig)
        if not self.constants and any(has_quantifier(f) for f in (*self.premises, self.conclusion)):
            raise MissingSection("consts")


# --------------------------------------------------------------------------
# traversal helpers


def subformulas(f: Formula) -> Iterator[Formula]:
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        if isinstance(g, Not):
            stack.append(g.operand)
        elif isinstance(g, BINARY):
            stack.append(g.right)
            stack.append(g.left)
        elif isinstance(g, QUANTIFIERS):
            stack.append(g.body)


def atoms(f: Formula) -> Iterator[Atom]:
    """Atoms in left-to-right textual order."""
    return (g for g in subformulas(f) if isinstance(g, Atom))


def has_quantifier(f: Formula) -> bool:
    return any(isinstance(g, QUANTIFIERS) for g in subformulas(f))


def free_variables(f: Formula) -> set[str]:
    if isinstance(f, Atom):
        return {t.name for t in f.args if t.kind == VARIABLE}
    if isinstance(f, Not):
        return free_variables(f.operand)
    if isinstance(f, BINARY):
        return free_variables(f.left) | free_variables(f.right)
    return free_variables(f.body) - {f.var}


def check_formula(f: Formula, sig: Signature) -> None:
    """Raise if ``f`` is not a closed, well-formed formula over ``sig``."""

    def walk(g, bound):
        if isinstance(g, Atom):
            if g.predicate not in sig.predicates:
                raise UndeclaredSymbol(g.predicate)
            if len(g.args) != sig.predicates[g.predicate]:
                raise ArityMismatch(g.predicate, sig.predicates[g.predicate], len(g.args))
            for t in g.args:
                if t.kind == VARIABLE and t.name not in bound:
                    raise UnboundVariable(t.name)
                if t.kind == CONSTANT and t.name not in sig.constants:
                    raise UndeclaredSymbol(t.name)
        elif isinstance(g, Not):
            walk(g.operand, bound)
        elif isinstance(g, BINARY):
            walk(g.left, bound)
            walk(g.right, bound)
        else:
            if g.var in sig.constants:
                raise FormulaError(f"variable {g.var!r} clashes with a declared constant")
            walk(g.body, bound | {g.var})

    walk(f, frozenset())


# --------------------------------------------------------------------------
# lexer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<op><->|->|[~&|(),])|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<bad>\S))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        m = _TOKEN_RE.match(text, pos)
        if m is None:  # only trailing whitespace left
            break
        if m.group("bad") is not None:
            raise LogicSyntaxError(f"unexpected character {m.group('bad')!r}", m.start("bad"), text)
        if m.group("op") is not None:
            tokens.append(("op", m.group("op"), m.start("op")))
        else:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, sig: Signature):
        self.text = text
        self.sig = sig
        self.tokens = _tokenize(text)
        self.i = 0
        self.bound: list[str] = []

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        what = "end of input" if tok[0] == "eof" else repr(tok[1])
        return LogicSyntaxError(f"{message}, found {what}", tok[2], self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != value:
            raise self.error(f"expected {value!r}")
        return self.advance()

    def at_op(self, value):
        tok = self.peek()
        return tok[0] == "op" and tok[1] == value

    def parse(self) -> Formula:
        f = self.iff()
        if self.peek()[0] != "eof":
            raise self.error("expected end of input")
        return f

    def iff(self):
        f = self.imp()
        while self.at_op("<->"):
            self.advance()
            f = Iff(f, self.imp())
        return f

    def imp(self):
        f = self.disj()
        if self.at_op("->"):
            self.advance()
            return Implies(f, self.imp())
        return f

    def disj(self):
        f = self.conj()
        while self.at_op("|"):
            self.advance()
            f = Or(f, self.conj())
        return f

    def conj(self):
        f = self.unary()
        while self.at_op("&"):
            self.advance()
            f = And(f, self.unary())
        return f

    def unary(self):
        if self.at_op("~"):
            self.advance()
            return Not(self.unary())
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "(":
            self.advance()
            f = self.iff()
            self.expect(")")
            return f
        if tok[0] != "ident":
            raise self.error("expected a formula")
        if tok[1] in KEYWORDS:
            return self.quantified()
        return self.atom()

    def quantified(self):
        kw = self.advance()[1]
        tok = self.peek()
        if tok[0] != "ident" or tok[1] in KEYWORDS:
            raise self.error("expected a variable name")
        name = tok[1]
        if name in self.sig.constants:
            raise self.error(f"variable {name!r} clashes with a declared constant")
        self.advance()
        self.expect("(")
        self.bound.append(name)
        body = self.iff()
        self.bound.pop()
        self.expect(")")
        return ForAll(name, body) if kw == "forall" else Exists(name, body)

    def atom(self):
        name = self.advance()[1]
        if name not in self.sig.predicates:
            raise UndeclaredSymbol(name)
        args = []
        if self.at_op("("):
            open_tok = self.advance()
            if self.at_op(")"):
                raise self.error("expected a term", self.peek())
            args.append(self.term())
            while self.at_op(","):
                self.advance()
                args.append(self.term())
            if not self.at_op(")"):
                raise LogicSyntaxError(
                    "unclosed argument list opened at position %d" % open_tok[2],
                    self.peek()[2],
                    self.text,
                )
            self.advance()
        arity = self.sig.predicates[name]
        if len(args) != arity:
            raise ArityMismatch(name, arity, len(args))
        return Atom(name, tuple(args))

    def term(self):
        tok = self.peek()
        if tok[0] != "ident" or tok[1] in KEYWORDS:
            raise self.error("expected a term")
        self.advance()
        name = tok[1]
        if name in self.bound:
            return var(name)
        if name in self.sig.constants:
            return const(name)
        raise UnboundVariable(name)


def parse_formula(text: str, decls: Signature) -> Formula:
    """Parse ``text`` into a closed formula over the declared symbols."""
    return _Parser(text, decls).parse()


# --------------------------------------------------------------------------
# printer

_PREC = {Iff: 1, Implies: 2, Or: 3, And: 4, Not: 5}
_OPS = {Iff: "<->", Implies: "->", Or: "|", And: "&"}


def format_formula(f: Formula) -> str:
    """Render ``f`` with the fewest parentheses that still round-trip."""
    return _fmt(f, 0)


def _fmt(f, ctx):
    if isinstance(f, Atom):
        return f.label
    if isinstance(f, QUANTIFIERS):
        kw = "forall" if isinstance(f, ForAll) else "exists"
        return f"{kw} {f.var} ({_fmt(f.body, 0)})"
    if isinstance(f, Not):
        return "~" + _fmt(f.operand, 5)
    prec = _PREC[type(f)]
    if isinstance(f, Implies):
        # right-associative: a nested implication on the left needs parens
        left, right = _fmt(f.left, prec + 1), _fmt(f.right, prec)
    else:
        left, right = _fmt(f.left, prec), _fmt(f.right, prec + 1)
    s = f"{left} {_OPS[type(f)]} {right}"
    return f"({s})" if prec < ctx else s


# --------------------------------------------------------------------------
# theory files

_DIRECTIVE_RE = re.compile(r"^(consts|preds|premise|conclusion)\s*:(.*)$")
_PRED_DECL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*/\s*(\d+)$")


def _split_decl_list(body: str, lineno: int) -> list[str]:
    body = body.strip()
    if body.endswith(";"):
        body = body[:-1]
    items = [s.strip() for s in body.split(",")]
    if items == [""]:
        return []
    for s in items:
        if not s:
            raise LogicSyntaxError(f"line {lineno}: empty declaration", 0, body)
    return items


def parse_theory(text: str) -> Theory:
    constants: list[str] | None = None
    predicates: dict[str, int] | None = None
    formulas: list[tuple[str, int, list[str]]] = []  # (kind, line, text pieces)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _DIRECTIVE_RE.match(line)
        if m is None:
            if not formulas:
                raise LogicSyntaxError(f"line {lineno}: expected a directive", 0, line)
            formulas[-1][2].append(line)
            continue
        key, body = m.group(1), m.group(2)
        if key == "consts":
            if constants is not None:
                raise FormulaError(f"line {lineno}: duplicate consts section")
            constants = _split_decl_list(body, lineno)
            for c in constants:
                if not _IDENT_RE.match(c) or c in KEYWORDS:
                    raise LogicSyntaxError(f"line {lineno}: bad constant name {c!r}", 0, body)
            if len(set(constants)) != len(constants):
                raise FormulaError(f"line {lineno}: constant declared twice")
        elif key == "preds":
            if predicates is not None:
                raise FormulaError(f"line {lineno}: duplicate preds section")
            predicates = {}
            for item in _split_decl_list(body, lineno):
                pm = _PRED_DECL_RE.match(item)
                if pm is None or pm.group(1) in KEYWORDS:
                    raise LogicSyntaxError(f"line {lineno}: bad predicate declaration {item!r}", 0, body)
                if pm.group(1) in predicates:
                    raise FormulaError(f"line {lineno}: predicate {pm.group(1)!r} declared twice")
                predicates[pm.group(1)] = int(pm.group(2))
        else:
            formulas.append((key, lineno, [body.strip()]))

    if predicates is None:
        raise MissingSection("preds")
    conclusions = [f for f in formulas if f[0] == "conclusion"]
    if not conclusions:
        raise MissingSection("conclusion")
    if len(conclusions) > 1:
        raise FormulaError(f"line {conclusions[1][1]}: a theory has exactly one conclusion")

    sig = Signature(tuple(constants or ()), predicates)
    premises = []
    conclusion = None
    for kind, lineno, pieces in formulas:
        src = " ".join(pieces)
        try:
            f = parse_formula(src, sig)
        except LogicSyntaxError as e:
            raise LogicSyntaxError(f"line {lineno}: {e.msg}", e.position, src) from None
        if kind == "premise":
            premises.append(f)
        else:
            conclusion = f

    theory = Theory(sig.constants, tuple(predicates.items()), tuple(premises), conclusion)
    theory.validate()
    return theory


def format_theory(theory: Theory) -> str:
    lines = []
    if theory.constants:
        lines.append(f"consts: {', '.join(theory.constants)};")
    lines.append(f"preds: {', '.join(f'{p}/{n}' for p, n in theory.predicates)};")
    lines.extend(f"premise: {format_formula(p)}" for p in theory.premises)
    lines.append(f"conclusion: {format_formula(theory.conclusion)}")
    return "\n".join(lines) + "\n"
