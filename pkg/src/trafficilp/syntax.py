"""Tokenizer and parser for fact files and rule files.

Grammar (whitespace between tokens is free, ``%`` starts a line comment)::

    statement := atom '.' | atom ':-' atom (',' atom)* '.'
    atom      := name '(' term (',' term)* ')'
    term      := name | Var | integer | decimal | '"' chars '"'
"""

from __future__ import annotations

import re
from decimal import Decimal

from .errors import FactSyntaxError
from .terms import Atom, Clause, Var

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<neck>:-)
  | (?P<number>-?[0-9]+(?:\.[0-9]+)?)
  | (?P<name>[a-z][a-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>[(),.])
    """,
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col


def tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FactSyntaxError(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tok_kind = m.group() if kind == "punct" else kind
            tokens.append(_Token(tok_kind, m.group(), line, pos - line_start + 1))
        newlines = m.group().count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


class _Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind, what=None):
        tok = self.tokens[self.i]
        if tok.kind != kind:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise FactSyntaxError(tok.line, tok.col, f"expected {what or kind!r}, found {found}")
        self.i += 1
        return tok

    def term(self):
        tok = self.peek()
        self.i += 1
        if tok.kind == "name":
            return tok.text
        if tok.kind == "var":
            return Var(tok.text)
        if tok.kind == "number":
            return Decimal(tok.text) if "." in tok.text else int(tok.text)
        if tok.kind == "string":
            return _unquote(tok.text)
        self.i -= 1
        return None

    def atom(self) -> Atom:
        name = self.take("name", "predicate name")
        opening = self.take("(", "(")
        args = []
        while True:
            term = self.term()
            if term is None:
                tok = self.peek()
                if tok.kind == "eof":
                    raise FactSyntaxError(opening.line, opening.col, "unclosed '('")
                raise FactSyntaxError(tok.line, tok.col, f"expected a term, found {tok.text!r}")
            args.append(term)
            tok = self.peek()
            if tok.kind == ",":
                self.i += 1
                continue
            if tok.kind == ")":
                self.i += 1
                break
            if tok.kind == "eof":
                raise FactSyntaxError(opening.line, opening.col, "unclosed '('")
            raise FactSyntaxError(tok.line, tok.col, f"expected ',' or ')', found {tok.text!r}")
        return Atom(name.text, tuple(args))

    def statements(self):
        while self.peek().kind != "eof":
            start = self.peek()
            head = self.atom()
            body = []
            if self.peek().kind == "neck":
                self.i += 1
                body.append(self.atom())
                while self.peek().kind == ",":
                    self.i += 1
                    body.append(self.atom())
            self.take(".", ".")
            yield start, Clause(head, tuple(body))


def parse_statements(text: str):
    """Yield ``(line, column, Clause)`` for every statement in ``text``."""
    for tok, clause in _Parser(text).statements():
        yield tok.line, tok.col, clause


def parse_clauses(text: str) -> list[Clause]:
    return [c for _, _, c in parse_statements(text)]
