import pytest

from treevec.corpus import enumerate_trees, synth_corpus
from treevec.grammar import leaf, minipy, node, tree_size
from treevec.numerics import Rng
from treevec.ted import ted, ted_oracle

FIG_TREE = node("Module", [node("Expr", [node("Call", [leaf("Name")], [leaf("Str")])])])


def test_identity_distance_zero():
    corpus = synth_corpus(minipy(), seed=2, count=20, max_depth=5, max_list=3)
    for t in corpus.trees:
        assert ted(t, t) == 0


def test_delete_whole_statement():
    assert ted(FIG_TREE, node("Module", [])) == 4


def test_single_relabel():
    a = node("Call", [leaf("Name")], [leaf("Str")])
    b = node("Call", [leaf("Name")], [leaf("Name")])
    assert ted(a, b) == 1


def test_oracle_matches_examples():
    assert ted_oracle(FIG_TREE, node("Module", [])) == 4
    a = node("Call", [leaf("Name")], [leaf("Str")])
    b = node("Call", [leaf("Name")], [leaf("Name")])
    assert ted_oracle(a, b) == 1
    assert ted_oracle(leaf("Name"), leaf("Str")) == 1
    assert ted_oracle(node("Module", []), node("Module", [node("Expr", [leaf("Name")])])) == 2


def test_oracle_size_limit():
    big = synth_corpus(minipy(), seed=9, count=200, max_depth=6, max_list=4)
    large = [t for t in big.trees if tree_size(t) >= 10]
    assert large, "expected some large trees"
    with pytest.raises(ValueError):
        ted_oracle(large[0], large[0])


def test_exhaustive_agreement_small_trees():
    trees = enumerate_trees(minipy(), 4)
    assert len(trees) > 10
    for a in trees:
        for b in trees:
            assert ted(a, b) == ted_oracle(a, b)


def test_metric_axioms_random_triples():
    corpus = synth_corpus(minipy(), seed=4, count=120, max_depth=5, max_list=3)
    trees = corpus.trees
    rng = Rng(17)
    for _ in range(1000):
        i, j, k = (int(x) for x in rng.integers(0, len(trees), 3))
        a, b, c = trees[i], trees[j], trees[k]
        dab, dba = ted(a, b), ted(b, a)
        assert dab >= 0
        assert dab == dba
        assert (dab == 0) == (a == b)
        assert ted(a, c) <= dab + ted(b, c)
        assert dab <= tree_size(a) + tree_size(b)
