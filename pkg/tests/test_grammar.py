import pytest

from treevec.corpus import synth_corpus
from treevec.grammar import (GrammarError, Tree, leaf, load_grammar, minipy,
                             node, parse_tree, serialize_tree, tree_size,
                             validate)

FIG_TREE = node("Module", [node("Expr", [node("Call", [leaf("Name")], [leaf("Str")])])])


def test_load_minimal_grammar():
    g = load_grammar("start: mod\nModule(stmt*) -> mod\nPass() -> stmt\n")
    assert g.start == "mod"
    assert len(g.elements) == 2
    assert g.by_name["Module"].slots == (("stmt", "list"),)


def test_minipy_element_count():
    # 21 elements: Module, 6 statements, 3 compound expressions, 3 leaves,
    # 4 arithmetic operators, 4 comparison operators
    assert len(minipy().elements) == 21


def test_undeclared_nonterminal_rejected():
    with pytest.raises(GrammarError):
        load_grammar("start: mod\nModule(expr*) -> mod\n")


def test_duplicate_element_rejected():
    with pytest.raises(GrammarError):
        load_grammar("start: mod\nModule() -> mod\nModule() -> mod\n")


def test_missing_start_rejected():
    with pytest.raises(GrammarError):
        load_grammar("Module() -> mod\n")


def test_validate_accepts_empty_module():
    assert validate(minipy(), node("Module", [])) == []


def test_validate_accepts_call_tree():
    assert validate(minipy(), FIG_TREE) == []


def test_validate_rejects_nonstart_root():
    violations = validate(minipy(), node("Expr", [leaf("Name")]))
    assert violations and "start" in violations[0]


def test_validate_rejects_assign_nonname_target():
    bad = node("Assign", [leaf("Num")], [leaf("Num")])
    t = node("Module", [bad])
    assert any("not permitted" in v for v in validate(minipy(), t))


def test_parse_serialize_examples():
    g = minipy()
    assert parse_tree(g, "Module(Expr(Call(Name, Str)))") == FIG_TREE
    assert parse_tree(g, "Module") == node("Module", [])
    assert serialize_tree(g, FIG_TREE) == "Module(Expr(Call(Name, Str)))"


def test_parse_rejects_arity_violation():
    with pytest.raises(GrammarError):
        parse_tree(minipy(), "Module(Name)")


def test_parse_rejects_unknown_element():
    with pytest.raises(GrammarError):
        parse_tree(minipy(), "Bogus")


def test_if_serialization_brackets_disambiguate():
    g = minipy()
    t = node("If", [leaf("Name")], [node("Expr", [leaf("Num")])], [node("Expr", [leaf("Str")])])
    m = node("Module", [t])
    text = serialize_tree(g, m)
    assert "[" in text
    assert parse_tree(g, text) == m
    # both branch assignments must be distinguishable
    t2 = node("If", [leaf("Name")], [], [node("Expr", [leaf("Str")])])
    m2 = node("Module", [t2])
    assert parse_tree(g, serialize_tree(g, m2)) == m2


def test_round_trip_random_trees():
    g = minipy()
    corpus = synth_corpus(g, seed=11, count=1000, max_depth=6, max_list=4)
    assert len(corpus.trees) == 1000
    for t in corpus.trees:
        assert parse_tree(g, serialize_tree(g, t)) == t


def test_tree_size():
    assert tree_size(node("Module", [])) == 1
    assert tree_size(FIG_TREE) == 5
    corpus = synth_corpus(minipy(), seed=3, count=50, max_depth=5, max_list=3)
    for t in corpus.trees:
        assert tree_size(t) == 1 + sum(tree_size(c) for c in t.children())


def test_digest_changes_with_restrictions():
    g1 = load_grammar("start: mod\nModule(stmt*) -> mod\nPass() -> stmt\n")
    g2 = load_grammar("start: mod\nModule(stmt*) -> mod\nPass() -> stmt\n",
                      {("Module", 0): frozenset({"Pass"})})
    assert g1.digest() != g2.digest()
