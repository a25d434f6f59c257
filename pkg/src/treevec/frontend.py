"""Tokenizer and parser turning minipy source code into grammar trees.

Identifiers collapse to Name, string literals (including f-strings) to Str,
and numeric literals to Num, so the resulting tree carries syntax shape
only. ``elif`` desugars to a nested If in the else branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .grammar import Tree, leaf, node

KEYWORDS = {"if", "elif", "else", "while", "return", "def"}

# multi-char operators first so `==` does not lex as `=` `=`
OPERATORS = ["==", "!=", "<", ">", "+", "-", "*", "/", "=", "(", ")", ",", ":"]

_CMP_ELEMENTS = {"==": "Eq", "!=": "NotEq", "<": "Lt", ">": "Gt"}
_ADD_ELEMENTS = {"+": "Add", "-": "Sub"}
_MUL_ELEMENTS = {"*": "Mult", "/": "Div"}


class FrontendError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str  # keyword, identifier, string, number, operator, newline, indent, dedent, eof
    lexeme: str
    line: int
    column: int


@dataclass(frozen=True)
class SourceProgram:
    text: str
    origin: Optional[str] = None


def tokenize(src) -> list[Token]:
    """Indentation-aware token stream; comments stripped, blank lines skipped.

    Accepts a SourceProgram or plain source text.
    """
    if isinstance(src, str):
        src = SourceProgram(src)
    tokens: list[Token] = []
    indents = [0]
    lines = src.text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        stripped = _strip_comment(raw)
        if not stripped.strip():
            continue
        indent_str = stripped[:len(stripped) - len(stripped.lstrip(" \t"))]
        if " " in indent_str and "\t" in indent_str:
            raise FrontendError("mixed tabs and spaces in indentation", lineno, 1)
        width = _indent_width(indent_str, lineno)
        if width > indents[-1]:
            indents.append(width)
            tokens.append(Token("indent", indent_str, lineno, 1))
        else:
            while width < indents[-1]:
                indents.pop()
                tokens.append(Token("dedent", "", lineno, 1))
            if width != indents[-1]:
                raise FrontendError("inconsistent indentation", lineno, 1)
        _tokenize_line(stripped, lineno, tokens)
        tokens.append(Token("newline", "", lineno, len(raw) + 1))
    while len(indents) > 1:
        indents.pop()
        tokens.append(Token("dedent", "", len(lines) + 1, 1))
    tokens.append(Token("eof", "", len(lines) + 1, 1))
    return tokens


def _strip_comment(line: str) -> str:
    quote = None
    skip = False
    for i, ch in enumerate(line):
        if skip:
            skip = False
            continue
        if quote:
            if ch == "\\":
                skip = True
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "#":
            return line[:i]
    return line


def _indent_width(indent: str, lineno: int) -> int:
    if "\t" in indent:
        return len(indent)  # tab-consistent files: one tab = one level unit
    if len(indent) % 4 != 0:
        raise FrontendError("indentation must be a multiple of 4 spaces", lineno, 1)
    return len(indent) // 4


def _tokenize_line(line: str, lineno: int, out: list[Token]) -> None:
    i = len(line) - len(line.lstrip(" \t"))
    n = len(line)
    while i < n:
        ch = line[i]
        col = i + 1
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            break
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (line[j].isalnum() or line[j] == "_"):
                j += 1
            word = line[i:j]
            # f-string prefix: lex the whole literal as one string token
            if word in ("f", "F") and j < n and line[j] in "'\"":
                end = _scan_string(line, j, lineno)
                out.append(Token("string", line[i:end], lineno, col))
                i = end
                continue
            kind = "keyword" if word in KEYWORDS else "identifier"
            out.append(Token(kind, word, lineno, col))
            i = j
            continue
        if ch in "'\"":
            end = _scan_string(line, i, lineno)
            out.append(Token("string", line[i:end], lineno, col))
            i = end
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and line[i + 1].isdigit()):
            j = i
            while j < n and (line[j].isdigit() or line[j] == "."):
                j += 1
            out.append(Token("number", line[i:j], lineno, col))
            i = j
            continue
        for op in OPERATORS:
            if line.startswith(op, i):
                out.append(Token("operator", op, lineno, col))
                i += len(op)
                break
        else:
            raise FrontendError(f"unexpected character {ch!r}", lineno, col)


def _scan_string(line: str, start: int, lineno: int) -> int:
    quote = line[start]
    i = start + 1
    while i < len(line):
        if line[i] == "\\":
            i += 2
            continue
        if line[i] == quote:
            return i + 1
        i += 1
    raise FrontendError("unterminated string", lineno, start + 1)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def error(self, expected: str) -> FrontendError:
        t = self.cur
        got = t.lexeme or t.kind
        return FrontendError(f"expected {expected}, got {got!r}", t.line, t.column)

    def advance(self) -> Token:
        t = self.cur
        if t.kind != "eof":
            self.pos += 1
        return t

    def match(self, kind: str, lexeme: Optional[str] = None) -> bool:
        t = self.cur
        return t.kind == kind and (lexeme is None or t.lexeme == lexeme)

    def expect(self, kind: str, lexeme: Optional[str] = None) -> Token:
        if not self.match(kind, lexeme):
            raise self.error(lexeme or kind)
        return self.advance()

    def parse_module(self) -> Tree:
        stmts = []
        while not self.match("eof"):
            stmts.append(self.parse_statement())
        return node("Module", stmts)

    def parse_block(self) -> list[Tree]:
        self.expect("operator", ":")
        self.expect("newline")
        self.expect("indent")
        stmts = [self.parse_statement()]
        while not self.match("dedent") and not self.match("eof"):
            stmts.append(self.parse_statement())
        if self.match("dedent"):
            self.advance()
        return stmts

    def parse_statement(self) -> Tree:
        t = self.cur
        if t.kind == "keyword":
            if t.lexeme == "if":
                return self.parse_if()
            if t.lexeme == "while":
                self.advance()
                cond = self.parse_expression()
                body = self.parse_block()
                return node("While", [cond], body)
            if t.lexeme == "return":
                self.advance()
                value = self.parse_expression()
                self.expect("newline")
                return node("Return", [value])
            if t.lexeme == "def":
                return self.parse_def()
            raise self.error("statement")
        if t.kind == "identifier" and self.tokens[self.pos + 1].kind == "operator" \
                and self.tokens[self.pos + 1].lexeme == "=":
            self.advance()
            self.advance()
            value = self.parse_expression()
            self.expect("newline")
            return node("Assign", [leaf("Name")], [value])
        expr = self.parse_expression()
        self.expect("newline")
        return node("Expr", [expr])

    def parse_if(self) -> Tree:
        self.expect("keyword", "if")
        cond = self.parse_expression()
        then = self.parse_block()
        orelse: list[Tree] = []
        if self.match("keyword", "elif"):
            # desugar: elif chain becomes a nested If in the else branch
            self.tokens[self.pos] = Token("keyword", "if", self.cur.line, self.cur.column)
            orelse = [self.parse_if()]
        elif self.match("keyword", "else"):
            self.advance()
            orelse = self.parse_block()
        return node("If", [cond], then, orelse)

    def parse_def(self) -> Tree:
        self.expect("keyword", "def")
        self.expect("identifier")
        self.expect("operator", "(")
        params: list[Tree] = []
        if not self.match("operator", ")"):
            while True:
                self.expect("identifier")
                params.append(leaf("Name"))
                if self.match("operator", ","):
                    self.advance()
                    continue
                break
        self.expect("operator", ")")
        body = self.parse_block()
        return node("FunctionDef", [leaf("Name")], params, body)

    def parse_expression(self) -> Tree:
        left = self.parse_additive()
        if self.match("operator") and self.cur.lexeme in _CMP_ELEMENTS:
            op = _CMP_ELEMENTS[self.advance().lexeme]
            right = self.parse_additive()
            return node("Compare", [left], [leaf(op)], [right])
        return left

    def parse_additive(self) -> Tree:
        left = self.parse_multiplicative()
        while self.match("operator") and self.cur.lexeme in _ADD_ELEMENTS:
            op = _ADD_ELEMENTS[self.advance().lexeme]
            right = self.parse_multiplicative()
            left = node("BinOp", [left], [leaf(op)], [right])
        return left

    def parse_multiplicative(self) -> Tree:
        left = self.parse_atom()
        while self.match("operator") and self.cur.lexeme in _MUL_ELEMENTS:
            op = _MUL_ELEMENTS[self.advance().lexeme]
            right = self.parse_atom()
            left = node("BinOp", [left], [leaf(op)], [right])
        return left

    def parse_atom(self) -> Tree:
        t = self.cur
        if t.kind == "identifier":
            self.advance()
            return self.parse_call_suffix(leaf("Name"))
        if t.kind == "string":
            self.advance()
            return self.parse_call_suffix(leaf("Str"))
        if t.kind == "number":
            self.advance()
            return self.parse_call_suffix(leaf("Num"))
        if self.match("operator", "("):
            self.advance()
            inner = self.parse_expression()
            self.expect("operator", ")")
            return self.parse_call_suffix(inner)
        raise self.error("expression")

    def parse_call_suffix(self, func: Tree) -> Tree:
        while self.match("operator", "("):
            self.advance()
            args: list[Tree] = []
            if not self.match("operator", ")"):
                while True:
                    args.append(self.parse_expression())
                    if self.match("operator", ","):
                        self.advance()
                        continue
                    break
            self.expect("operator", ")")
            func = node("Call", [func], args)
        return func


def parse_program(src) -> Tree:
    """Parse minipy source (text or :class:`SourceProgram`) into a tree."""
    if not isinstance(src, SourceProgram):
        src = SourceProgram(str(src))
    tokens = tokenize(src)
    return _Parser(tokens).parse_module()
