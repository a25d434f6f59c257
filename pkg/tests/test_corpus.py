import json

import pytest

from treevec import corpus as co
from treevec.grammar import (leaf, load_grammar, minipy, node, parse_tree,
                             serialize_tree, tree_size, validate)
from treevec.numerics import Rng
from treevec.ted import ted


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")


def test_load_traces_groups_and_sorts(tmp_path):
    path = str(tmp_path / "t.jsonl")
    write_jsonl(path, [
        {"student": "a", "task": "t1", "ts": 5, "source": "x = 1\n"},
        {"student": "a", "task": "t1", "ts": 2, "source": "print('hi')\n"},
    ])
    traces, stats = co.load_traces(minipy(), path)
    assert len(traces) == 1
    assert [ts for ts, _ in traces[0].steps] == [2, 5]
    assert stats == {"loaded": 2, "skipped": 0, "errors": []}


def test_load_traces_source_maps_to_fig_tree(tmp_path):
    path = str(tmp_path / "t.jsonl")
    write_jsonl(path, [{"student": "a", "task": "t", "ts": 0, "source": "print('hi')"}])
    traces, _ = co.load_traces(minipy(), path)
    assert serialize_tree(minipy(), traces[0].steps[0][1]) == "Module(Expr(Call(Name, Str)))"


def test_load_traces_skips_bad_records(tmp_path):
    path = str(tmp_path / "t.jsonl")
    write_jsonl(path, [
        {"student": "a", "task": "t", "ts": 0, "tree": "Module"},
        {"student": "a", "task": "t", "ts": 1, "tree": "Module(Name)"},  # invalid
        "{not json",
        {"student": "a", "task": "t", "ts": 2, "source": "def broken(:\n"},
        {"student": "a", "task": "t", "ts": 3},  # no payload
        {"student": "a", "task": "t", "ts": 4, "source": "x=1", "tree": "Module"},  # both
    ])
    traces, stats = co.load_traces(minipy(), path)
    assert stats["loaded"] == 1 and stats["skipped"] == 5
    assert stats["loaded"] + stats["skipped"] == 6
    assert len(stats["errors"]) == 5
    assert any("line 3" in e for e in stats["errors"])


def test_load_traces_rejects_all_bad(tmp_path):
    path = str(tmp_path / "t.jsonl")
    write_jsonl(path, ["{bad"])
    with pytest.raises(co.CorpusError):
        co.load_traces(minipy(), path)


def test_unique_trees():
    g = minipy()
    t1 = node("Module", [])
    t2 = parse_tree(g, "Module(Expr(Name))")
    c = co.Corpus([t1, t2, t1, t1])
    out = co.unique_trees(g, c)
    assert out.trees == [t1, t2]
    assert out.deduplicated == 2


def test_kfold_partitions_students():
    traces = co.synth_traces(minipy(), seed=1, students=10, steps=4,
                             max_depth=4, max_list=2)
    splits = co.kfold_by_student(traces, 5, seed=2)
    assert len(splits) == 5
    test_students = [frozenset(t.student for t in test) for _, test in splits]
    assert all(len(s) == 2 for s in test_students)
    union = set().union(*test_students)
    assert union == {t.student for t in traces}
    for i, a in enumerate(test_students):
        for b in test_students[i + 1:]:
            assert not (a & b)
    # train side excludes the fold's students
    for (train, test), s in zip(splits, test_students):
        assert not ({t.student for t in train} & s)
    # determinism
    again = co.kfold_by_student(traces, 5, seed=2)
    assert [[t.student for t in test] for _, test in splits] == \
           [[t.student for t in test] for _, test in again]


def test_kfold_subsample():
    traces = co.synth_traces(minipy(), seed=3, students=12, steps=4,
                             max_depth=4, max_list=2)
    splits = co.kfold_by_student(traces, 4, seed=0, train_students=5)
    for train, _ in splits:
        assert len({t.student for t in train}) == 5


def test_kfold_rejects_too_few_students():
    traces = co.synth_traces(minipy(), seed=4, students=3, steps=4,
                             max_depth=4, max_list=2)
    with pytest.raises(co.CorpusError):
        co.kfold_by_student(traces, 5, seed=0)


def test_synth_corpus_valid_unique_reproducible():
    g = minipy()
    c1 = co.synth_corpus(g, seed=5, count=100, max_depth=5, max_list=3)
    c2 = co.synth_corpus(g, seed=5, count=100, max_depth=5, max_list=3)
    assert c1.trees == c2.trees
    serialized = [serialize_tree(g, t) for t in c1.trees]
    assert len(set(serialized)) == len(serialized)
    for t in c1.trees:
        assert validate(g, t) == []


def test_synth_corpus_depth_one_gives_empty_module():
    c = co.synth_corpus(minipy(), seed=0, count=1, max_depth=1)
    assert c.trees == [node("Module", [])]


def test_synth_corpus_rejects_impossible_depth():
    g = load_grammar("start: m\nA(x) -> m\nB(x) -> x\nC() -> x\n")
    with pytest.raises(co.CorpusError):
        co.synth_corpus(g, seed=0, count=1, max_depth=0)


def test_min_completion():
    g = minipy()
    sizes = co.min_completion_sizes(g)
    assert sizes["Module"] == 1
    assert sizes["Compare"] == 4  # Compare + Name + Eq + Name
    t = co.min_completion(g, "If")
    assert validate(g, node("Module", [t]))[0:0] == []  # shape check only
    assert serialize_tree(g, node("Module", [t])) == "Module(If(Name, [], []))"


def test_growth_prefixes():
    g = minipy()
    target = co.synth_corpus(g, seed=7, count=30, max_depth=5, max_list=3).trees[10]
    seq = co.growth_prefixes(g, target)
    assert seq[-1] == target
    for p in seq:
        assert validate(g, p) == []
    for a, b in zip(seq, seq[1:]):
        assert ted(a, b) > 0


def test_synth_traces_shape_and_reproducibility():
    g = minipy()
    t1 = co.synth_traces(g, seed=8, students=5, steps=6, max_depth=5, max_list=3)
    t2 = co.synth_traces(g, seed=8, students=5, steps=6, max_depth=5, max_list=3)
    assert [tr.steps for tr in t1] == [tr.steps for tr in t2]
    for tr in t1:
        trees = tr.trees()
        assert 2 <= len(trees) <= 6
        for t in trees:
            assert validate(g, t) == []
        for a, b in zip(trees, trees[1:]):
            assert ted(a, b) > 0


def test_enumerate_trees_small():
    trees = co.enumerate_trees(minipy(), 2)
    serialized = {serialize_tree(minipy(), t) for t in trees}
    # all 2-node trees are Module(one minimal statement)
    assert "Module" in serialized
    assert all(tree_size(t) <= 2 for t in trees)
    assert len(serialized) == len(trees)
    more = co.enumerate_trees(minipy(), 4)
    assert set(map(lambda t: serialize_tree(minipy(), t), more)) > serialized
    for t in more:
        assert validate(minipy(), t) == []


def test_minipy_tree_of_size_exact():
    rng = Rng(9)
    for size in (5, 6, 13, 40, 100):
        for _ in range(3):
            t = co.minipy_tree_of_size(rng, size)
            assert tree_size(t) == size
            assert validate(minipy(), t) == []
