"""Exception hierarchy.

Every error belongs to one of three families that the CLI maps onto exit
codes: ``DataError`` (bad input files, malformed formulas, domain errors),
``BackendError`` (model endpoints, trainer hooks) and plain usage errors.
"""

from __future__ import annotations


class MixThoughtError(Exception):
    """Base class for all package errors."""


class DataError(MixThoughtError):
    pass


class BackendError(MixThoughtError):
    pass


# logic-core


class FormulaError(DataError):
    pass


class LogicSyntaxError(FormulaError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.msg = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class ArityMismatch(FormulaError):
    def __init__(self, predicate: str, expected: int, got: int):
        self.predicate = predicate
        self.expected = expected
        self.got = got
        super().__init__(f"predicate {predicate!r} expects {expected} argument(s), got {got}")


class UnboundVariable(FormulaError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"{name!r} is neither a bound variable nor a declared constant")


class UndeclaredSymbol(FormulaError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"undeclared symbol {name!r}")


class MissingSection(FormulaError):
    def __init__(self, section: str):
        self.section = section
        super().__init__(f"theory file has no {section!r} section")


# entail


class VarCapExceeded(DataError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"{count} propositional variables exceed the cap of {cap}")


class EmptyDomainWithQuantifier(DataError):
    def __init__(self):
        super().__init__("quantified formula over an empty constant domain")


# data


class SchemaError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DuplicateId(DataError):
    def __init__(self, problem_id: str):
        self.problem_id = problem_id
        super().__init__(f"duplicate problem id {problem_id!r}")


class OverlapError(DataError):
    pass


class ChecksumMismatch(DataError):
    pass


# llm-client


class BackendUnavailable(BackendError):
    pass


class AuthError(BackendError):
    pass


class StubMiss(BackendError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"stub table has no response for {key!r}")


# pipeline


class TrainerHookFailed(BackendError):
    pass


class NoAnswerProduced(DataError):
    pass


# eval


class DomainError(DataError):
    pass


class EmptySelection(DataError):
    pass


class MissingModality(DataError):
    def __init__(self, problem_id: str, modality):
        self.problem_id = problem_id
        self.modality = modality
        super().__init__(f"problem {problem_id!r} has no records for {modality}")


class MissingDepth(DataError):
    def __init__(self, problem_id: str):
        self.problem_id = problem_id
        super().__init__(f"problem {problem_id!r} carries no depth")


# error-analysis


class JudgeUnparseable(BackendError):
    pass


class EmptyInput(DataError):
    pass
