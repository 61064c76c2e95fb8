"""Terms, atoms and Horn clauses, with their canonical text rendering.

Constants are plain Python values: ``str`` for symbols and quoted strings,
``int`` and ``Decimal`` for numbers. A string renders bare when it is a valid
lowercase name and quoted otherwise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Union

NAME_RE = re.compile(r"[a-z][a-z0-9_]*")
VAR_RE = re.compile(r"[A-Z_][A-Za-z0-9_]*")

ANONYMOUS = "_"


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __post_init__(self):
        if not VAR_RE.fullmatch(self.name):
            raise ValueError(f"bad variable name {self.name!r}")

    def __repr__(self):
        return self.name


Constant = Union[str, int, Decimal]
Term = Union[Var, str, int, Decimal]


def is_constant(term) -> bool:
    return isinstance(term, (str, Decimal)) or (isinstance(term, int) and not isinstance(term, bool))


def render_term(term: Term) -> str:
    if isinstance(term, Var):
        return term.name
    if isinstance(term, str):
        if NAME_RE.fullmatch(term):
            return term
        if "\n" in term or "\r" in term:
            raise ValueError("string constants may not contain line breaks")
        return '"' + term.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(term, bool):
        raise TypeError("booleans are not constants")
    if isinstance(term, int):
        return str(term)
    if isinstance(term, Decimal):
        if not term.is_finite():
            raise ValueError("non-finite decimal")
        text = format(term, "f")
        if "." in text:
            text = text.rstrip("0").rstrip(".")
        return "0" if text == "-0" else text
    raise TypeError(f"not a term: {term!r}")


def term_sort_key(term: Term):
    return render_term(term)


@dataclass(frozen=True)
class Atom:
    """A predicate applied to terms; a fact when ground, a literal otherwise."""

    name: str
    args: tuple

    def __post_init__(self):
        if not NAME_RE.fullmatch(self.name):
            raise ValueError(f"bad predicate name {self.name!r}")
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ValueError("atoms need at least one argument")
        for a in self.args:
            if not (isinstance(a, Var) or is_constant(a)):
                raise TypeError(f"bad argument {a!r} in {self.name}")

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def key(self) -> tuple[str, int]:
        return (self.name, len(self.args))

    @property
    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)

    def variables(self) -> list[Var]:
        return [a for a in self.args if isinstance(a, Var)]

    def render(self) -> str:
        return f"{self.name}({', '.join(render_term(a) for a in self.args)})"

    def __str__(self):
        return self.render()

    def sort_key(self):
        return (self.name, tuple(render_term(a) for a in self.args))


def atom(name: str, *args) -> Atom:
    return Atom(name, tuple(args))


@dataclass(frozen=True)
class Clause:
    head: Atom
    body: tuple[Atom, ...] = ()

    def __post_init__(self):
        if not isinstance(self.body, tuple):
            object.__setattr__(self, "body", tuple(self.body))

    def variables(self) -> list[Var]:
        seen: dict[Var, None] = {}
        for lit in (self.head, *self.body):
            for v in lit.variables():
                if v.name != ANONYMOUS:
                    seen.setdefault(v)
        return list(seen)

    def extend(self, literal: Atom) -> "Clause":
        return Clause(self.head, self.body + (literal,))

    def render(self) -> str:
        if not self.body:
            return self.head.render() + "."
        return f"{self.head.render()} :- {', '.join(b.render() for b in self.body)}."

    def __str__(self):
        return self.render()
