"""Tree grammar, tree data structure, validation, and textual tree format.

The grammar describes a small Python-like language ("minipy"). Every tree
node is labeled with a syntactic element; the element's signature says how
many child slots it has and whether each slot holds exactly one subtree
(``single``) or a sequence of subtrees (``list``).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Optional

SINGLE = "single"
LIST = "list"


class GrammarError(ValueError):
    """Raised for malformed grammar descriptions or tree texts."""


@dataclass(frozen=True)
class SyntacticElement:
    """One production head: ``name(slots...) -> produces``."""

    name: str
    produces: str
    slots: tuple[tuple[str, str], ...]  # (nonterminal, SINGLE | LIST)

    @property
    def arity(self) -> int:
        return len(self.slots)


@dataclass(frozen=True)
class Tree:
    """Ordered labeled tree with per-slot child groups.

    ``groups[k]`` holds the subtrees filling the k-th slot of the element
    named ``label``. Single-kind slots hold exactly one subtree; list-kind
    slots hold zero or more.
    """

    label: str
    groups: tuple[tuple["Tree", ...], ...] = ()

    def children(self) -> tuple["Tree", ...]:
        """All subtrees in slot order, groups flattened."""
        return tuple(c for g in self.groups for c in g)


def node(label: str, *groups: Iterable[Tree]) -> Tree:
    """Convenience constructor: ``node("If", [cond], [s1, s2], [])``."""
    return Tree(label, tuple(tuple(g) for g in groups))


def leaf(label: str) -> Tree:
    return Tree(label, ())


class Grammar:
    """A validated tree grammar.

    ``slot_restrictions`` optionally narrows the permitted element labels
    for a specific (element name, slot index) pair beyond what the slot
    nonterminal allows. The built-in minipy grammar uses this to require
    a Name in assignment targets and function-definition names.
    """

    def __init__(self, start: str, elements: Iterable[SyntacticElement],
                 slot_restrictions: Optional[dict[tuple[str, int], frozenset[str]]] = None):
        self.elements = tuple(elements)
        self.start = start
        self.slot_restrictions = dict(slot_restrictions or {})
        self.nonterminals = frozenset(e.produces for e in self.elements)
        self.by_name: dict[str, SyntacticElement] = {}
        for e in self.elements:
            if e.name in self.by_name:
                raise GrammarError(f"duplicate element name: {e.name}")
            self.by_name[e.name] = e
        if start not in self.nonterminals:
            raise GrammarError(f"start symbol {start!r} is not produced by any element")
        overlap = self.nonterminals & set(self.by_name)
        if overlap:
            raise GrammarError(f"names used as both element and nonterminal: {sorted(overlap)}")
        for e in self.elements:
            for nt, kind in e.slots:
                if nt not in self.nonterminals:
                    raise GrammarError(f"element {e.name} references undeclared nonterminal {nt!r}")
                if kind not in (SINGLE, LIST):
                    raise GrammarError(f"bad slot kind {kind!r} in element {e.name}")
        self.element_index = {e.name: i for i, e in enumerate(self.elements)}
        self._producers: dict[str, tuple[str, ...]] = {
            nt: tuple(e.name for e in self.elements if e.produces == nt)
            for nt in self.nonterminals
        }

    def producers(self, nonterminal: str) -> tuple[str, ...]:
        """Element names producing the nonterminal, in declaration order."""
        return self._producers[nonterminal]

    def permitted(self, element_name: str, slot: int) -> tuple[str, ...]:
        """Element names permitted in the given slot of the given element."""
        el = self.by_name[element_name]
        names = self._producers[el.slots[slot][0]]
        restr = self.slot_restrictions.get((element_name, slot))
        if restr is not None:
            names = tuple(n for n in names if n in restr)
        return names

    def to_text(self) -> str:
        lines = [f"start: {self.start}"]
        for e in self.elements:
            slots = ", ".join(nt + ("*" if kind == LIST else "") for nt, kind in e.slots)
            lines.append(f"{e.name}({slots}) -> {e.produces}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """Stable hash of the grammar including slot restrictions."""
        h = hashlib.sha256(self.to_text().encode("utf-8"))
        for (name, k), restr in sorted(self.slot_restrictions.items()):
            h.update(f"|{name}:{k}:{','.join(sorted(restr))}".encode("utf-8"))
        return h.hexdigest()


def load_grammar(text: str,
                 slot_restrictions: Optional[dict[tuple[str, int], frozenset[str]]] = None) -> Grammar:
    """Parse a grammar from its line format.

    One element per line, ``Element(nt1, nt2*, ...) -> NT``, where ``*``
    marks a list-kind slot, plus a single ``start: NT`` line. Blank lines
    and ``#`` comments are ignored.
    """
    start = None
    elements = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("start:"):
            if start is not None:
                raise GrammarError(f"line {lineno}: duplicate start declaration")
            start = line[len("start:"):].strip()
            continue
        if "->" not in line:
            raise GrammarError(f"line {lineno}: expected 'Element(...) -> NT', got {line!r}")
        lhs, produces = (part.strip() for part in line.split("->", 1))
        if "(" in lhs:
            if not lhs.endswith(")"):
                raise GrammarError(f"line {lineno}: unbalanced parentheses in {lhs!r}")
            name, inner = lhs[:-1].split("(", 1)
            name = name.strip()
            slots = []
            for part in inner.split(","):
                part = part.strip()
                if not part:
                    continue
                if part.endswith("*"):
                    slots.append((part[:-1].strip(), LIST))
                else:
                    slots.append((part, SINGLE))
        else:
            name, slots = lhs, []
        if not name.isidentifier():
            raise GrammarError(f"line {lineno}: bad element name {name!r}")
        elements.append(SyntacticElement(name, produces, tuple(slots)))
    if start is None:
        raise GrammarError("missing 'start:' line")
    return Grammar(start, elements, slot_restrictions)


MINIPY_TEXT = """\
start: mod
Module(stmt*) -> mod
Assign(expr, expr) -> stmt
Expr(expr) -> stmt
If(expr, stmt*, stmt*) -> stmt
While(expr, stmt*) -> stmt
Return(expr) -> stmt
FunctionDef(expr, expr*, stmt*) -> stmt
Call(expr, expr*) -> expr
Compare(expr, cmpop, expr) -> expr
BinOp(expr, op, expr) -> expr
Name() -> expr
Str() -> expr
Num() -> expr
Add() -> op
Sub() -> op
Mult() -> op
Div() -> op
Eq() -> cmpop
NotEq() -> cmpop
Lt() -> cmpop
Gt() -> cmpop
"""

_MINIPY_RESTRICTIONS = {
    ("Assign", 0): frozenset({"Name"}),
    ("FunctionDef", 0): frozenset({"Name"}),
}

_minipy_cache: Optional[Grammar] = None


def minipy() -> Grammar:
    """The built-in minipy grammar."""
    global _minipy_cache
    if _minipy_cache is None:
        _minipy_cache = load_grammar(MINIPY_TEXT, _MINIPY_RESTRICTIONS)
    return _minipy_cache


def validate(g: Grammar, t: Tree) -> list[str]:
    """Collect all violations of the tree against the grammar.

    An empty result means the tree is valid and its root produces the
    grammar's start symbol.
    """
    violations: list[str] = []
    root = g.by_name.get(t.label)
    if root is None:
        return [f"unknown element {t.label!r}"]
    if root.produces != g.start:
        violations.append(f"root element {t.label} produces {root.produces}, not start symbol {g.start}")

    def walk(tree: Tree, path: str) -> None:
        el = g.by_name.get(tree.label)
        if el is None:
            violations.append(f"{path}: unknown element {tree.label!r}")
            return
        if len(tree.groups) != len(el.slots):
            violations.append(
                f"{path}: {tree.label} has {len(tree.groups)} groups, expected {len(el.slots)}")
            return
        for k, ((nt, kind), group) in enumerate(zip(el.slots, tree.groups)):
            if kind == SINGLE and len(group) != 1:
                violations.append(f"{path}: slot {k} of {tree.label} must hold exactly one subtree")
            allowed = g.permitted(tree.label, k)
            for j, child in enumerate(group):
                child_el = g.by_name.get(child.label)
                cpath = f"{path}.{k}[{j}]"
                if child_el is None:
                    violations.append(f"{cpath}: unknown element {child.label!r}")
                    continue
                if child_el.produces != nt:
                    violations.append(
                        f"{cpath}: {child.label} produces {child_el.produces}, slot expects {nt}")
                elif child.label not in allowed:
                    violations.append(
                        f"{cpath}: {child.label} not permitted in slot {k} of {tree.label}")
                walk(child, cpath)

    walk(t, t.label)
    return violations


def tree_size(t: Tree) -> int:
    """Total node count."""
    return 1 + sum(tree_size(c) for g in t.groups for c in g)


def _needs_brackets(el: SyntacticElement) -> bool:
    # Flattened children are ambiguous when two list slots accept the same
    # nonterminal (minipy: If). Those list groups get explicit brackets.
    list_nts = [nt for nt, kind in el.slots if kind == LIST]
    return len(list_nts) != len(set(list_nts))


def serialize_tree(g: Grammar, t: Tree) -> str:
    """Canonical text form, e.g. ``Module(Expr(Call(Name, Str)))``.

    List groups are flattened in slot order; zero-child nodes are written
    without parentheses. Where flattening would be ambiguous (an element
    with two list slots over the same nonterminal), each list group is
    wrapped in ``[...]`` so that parsing is an exact inverse.
    """
    el = g.by_name.get(t.label)
    if el is None:
        raise GrammarError(f"unknown element {t.label!r}")
    brackets = _needs_brackets(el)
    parts = []
    for (nt, kind), group in zip(el.slots, t.groups):
        rendered = [serialize_tree(g, c) for c in group]
        if kind == LIST and brackets:
            parts.append("[" + ", ".join(rendered) + "]")
        else:
            parts.extend(rendered)
    if not parts:
        return t.label
    return f"{t.label}({', '.join(parts)})"


class _TreeTextParser:
    def __init__(self, g: Grammar, text: str):
        self.g = g
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> GrammarError:
        return GrammarError(f"tree text, offset {self.pos}: {msg}")

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> Tree:
        t = self.parse_node()
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error("trailing characters after tree")
        return t

    def parse_node(self) -> Tree:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        name = self.text[start:self.pos]
        if not name:
            raise self.error("expected element name")
        el = self.g.by_name.get(name)
        if el is None:
            raise self.error(f"unknown element {name!r}")
        items: list = []
        self.skip_ws()
        if self.peek() == "(":
            self.pos += 1
            self.skip_ws()
            if self.peek() != ")":
                while True:
                    items.append(self.parse_item())
                    self.skip_ws()
                    if self.peek() == ",":
                        self.pos += 1
                        continue
                    break
            if self.peek() != ")":
                raise self.error("expected ')' or ','")
            self.pos += 1
        return self.assign_groups(el, items)

    def parse_item(self):
        self.skip_ws()
        if self.peek() == "[":
            self.pos += 1
            group: list[Tree] = []
            self.skip_ws()
            if self.peek() != "]":
                while True:
                    group.append(self.parse_node())
                    self.skip_ws()
                    if self.peek() == ",":
                        self.pos += 1
                        continue
                    break
            if self.peek() != "]":
                raise self.error("expected ']' or ','")
            self.pos += 1
            return group
        return self.parse_node()

    def assign_groups(self, el: SyntacticElement, items: list) -> Tree:
        """Assign parsed children to slots left to right.

        Single slots consume one child; list slots consume either one
        bracketed group or as many following children as produce the slot
        nonterminal (greedy).
        """
        groups: list[tuple[Tree, ...]] = []
        i = 0
        for k, (nt, kind) in enumerate(el.slots):
            if kind == SINGLE:
                if i >= len(items) or isinstance(items[i], list):
                    raise self.error(f"element {el.name}: missing child for slot {k}")
                child = items[i]
                self.check_child(el, k, nt, child)
                groups.append((child,))
                i += 1
            else:
                if i < len(items) and isinstance(items[i], list):
                    for child in items[i]:
                        self.check_child(el, k, nt, child)
                    groups.append(tuple(items[i]))
                    i += 1
                else:
                    group = []
                    while i < len(items) and not isinstance(items[i], list) \
                            and self.g.by_name[items[i].label].produces == nt:
                        self.check_child(el, k, nt, items[i])
                        group.append(items[i])
                        i += 1
                    groups.append(tuple(group))
        if i != len(items):
            raise self.error(f"element {el.name}: {len(items) - i} children could not be placed "
                             f"(arity mismatch)")
        return Tree(el.name, tuple(groups))

    def check_child(self, el: SyntacticElement, k: int, nt: str, child: Tree) -> None:
        child_el = self.g.by_name[child.label]
        if child_el.produces != nt:
            raise self.error(
                f"element {el.name}, slot {k}: child {child.label} produces "
                f"{child_el.produces}, expected {nt}")


def parse_tree(g: Grammar, text: str) -> Tree:
    """Inverse of :func:`serialize_tree`."""
    return _TreeTextParser(g, text).parse()
