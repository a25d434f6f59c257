"""Corpus handling: trace ingestion from JSONL, deduplication, k-fold
splitting by student, and seeded synthetic corpus/trace generation used as
the desk-scale training substrate."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .frontend import FrontendError, parse_program
from .grammar import (LIST, SINGLE, Grammar, GrammarError, Tree, parse_tree,
                      serialize_tree, tree_size, validate)
from .numerics import Rng


class CorpusError(ValueError):
    """Raised when no usable data can be produced."""


@dataclass
class TraceRecord:
    student: str
    task: str
    ts: int
    tree: Tree


@dataclass
class TreeTrace:
    """One student's ordered submissions for one task."""

    student: str
    task: str
    steps: list[tuple[int, Tree]]  # (timestamp, tree), nondecreasing ts

    def trees(self) -> list[Tree]:
        return [t for _, t in self.steps]


@dataclass
class Corpus:
    trees: list[Tree]
    loaded: int = 0
    skipped: int = 0
    deduplicated: int = 0


# ---------------------------------------------------------------------------
# ingestion


def load_traces(g: Grammar, path: str) -> tuple[list[TreeTrace], dict]:
    """Read a JSONL trace file.

    Each line is an object with keys ``student``, ``task``, ``ts`` and
    exactly one of ``source`` (minipy code) or ``tree`` (serialized tree).
    Unparseable or invalid payloads and malformed lines are skipped and
    counted; the returned stats dict reports loaded/skipped/errors.
    """
    records: list[TraceRecord] = []
    skipped = 0
    errors: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                errors.append(f"line {lineno}: malformed JSON ({exc.msg})")
                skipped += 1
                continue
            try:
                tree = _record_tree(g, obj)
                records.append(TraceRecord(str(obj["student"]), str(obj["task"]),
                                           int(obj["ts"]), tree))
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"line {lineno}: skipped ({exc})")
                skipped += 1
    if not records:
        raise CorpusError(f"{path}: no usable records ({skipped} skipped)")
    grouped: dict[tuple[str, str], list[TraceRecord]] = {}
    for rec in records:
        grouped.setdefault((rec.student, rec.task), []).append(rec)
    traces = []
    for (student, task) in sorted(grouped):
        recs = sorted(grouped[(student, task)], key=lambda r: r.ts)
        traces.append(TreeTrace(student, task, [(r.ts, r.tree) for r in recs]))
    stats = {"loaded": len(records), "skipped": skipped, "errors": errors}
    return traces, stats


def _record_tree(g: Grammar, obj: dict) -> Tree:
    has_source = "source" in obj
    has_tree = "tree" in obj
    if has_source == has_tree:
        raise ValueError("record must carry exactly one of 'source' or 'tree'")
    if has_source:
        try:
            tree = parse_program(obj["source"])
        except FrontendError as exc:
            raise ValueError(f"source does not parse: {exc}")
    else:
        try:
            tree = parse_tree(g, obj["tree"])
        except GrammarError as exc:
            raise ValueError(f"tree text does not parse: {exc}")
    violations = validate(g, tree)
    if violations:
        raise ValueError(f"invalid tree: {violations[0]}")
    return tree


def unique_trees(g: Grammar, corpus: Corpus) -> Corpus:
    """Dedup by serialized form, keeping first occurrences in order."""
    seen = set()
    kept = []
    for t in corpus.trees:
        key = serialize_tree(g, t)
        if key not in seen:
            seen.add(key)
            kept.append(t)
    return Corpus(kept, loaded=corpus.loaded, skipped=corpus.skipped,
                  deduplicated=corpus.deduplicated + len(corpus.trees) - len(kept))


def kfold_by_student(traces: list[TreeTrace], folds: int, seed: int,
                     train_students: Optional[int] = None) -> list[tuple[list[TreeTrace], list[TreeTrace]]]:
    """Cross-validation splits keeping each student wholly in one fold.

    Students are shuffled (seeded) and dealt round-robin, so fold sizes
    differ by at most one. ``train_students`` optionally subsamples each
    split's training side to that many students (seeded, per split).
    """
    if folds < 2:
        raise CorpusError("need at least 2 folds")
    students = sorted({tr.student for tr in traces})
    if len(students) < folds:
        raise CorpusError(f"need at least {folds} distinct students, got {len(students)}")
    rng = Rng(seed)
    rng.shuffle(students)
    assignment = {s: i % folds for i, s in enumerate(students)}
    splits = []
    for fold in range(folds):
        test = [tr for tr in traces if assignment[tr.student] == fold]
        train_pool = [s for s in students if assignment[s] != fold]
        if train_students is not None and train_students < len(train_pool):
            pool = sorted(train_pool)
            rng.shuffle(pool)
            train_pool = pool[:train_students]
        allowed = set(train_pool)
        train = [tr for tr in traces if tr.student in allowed]
        splits.append((train, test))
    return splits


# ---------------------------------------------------------------------------
# minimal completions


def min_completion_sizes(g: Grammar) -> dict[str, int]:
    """Smallest complete subtree size per element (list slots left empty)."""
    sizes: dict[str, Optional[int]] = {e.name: None for e in g.elements}
    changed = True
    while changed:
        changed = False
        for e in g.elements:
            total = 1
            for k, (nt, kind) in enumerate(e.slots):
                if kind == LIST:
                    continue
                options = [sizes[name] for name in g.permitted(e.name, k)]
                options = [s for s in options if s is not None]
                if not options:
                    total = None
                    break
                total += min(options)
            if total is not None and (sizes[e.name] is None or total < sizes[e.name]):
                sizes[e.name] = total
                changed = True
    missing = [name for name, s in sizes.items() if s is None]
    if missing:
        raise CorpusError(f"elements without finite derivation: {missing}")
    return sizes


def min_completion_depths(g: Grammar) -> dict[str, int]:
    """Smallest complete subtree depth per element (list slots left empty)."""
    depths: dict[str, Optional[int]] = {e.name: None for e in g.elements}
    changed = True
    while changed:
        changed = False
        for e in g.elements:
            worst = 0
            for k, (nt, kind) in enumerate(e.slots):
                if kind == LIST:
                    continue
                options = [depths[name] for name in g.permitted(e.name, k)]
                options = [d for d in options if d is not None]
                if not options:
                    worst = None
                    break
                worst = max(worst, min(options))
            if worst is not None:
                d = 1 + worst
                if depths[e.name] is None or d < depths[e.name]:
                    depths[e.name] = d
                    changed = True
    missing = [name for name, d in depths.items() if d is None]
    if missing:
        raise CorpusError(f"elements without finite derivation: {missing}")
    return depths


def min_completion(g: Grammar, element_name: str,
                   sizes: Optional[dict[str, int]] = None) -> Tree:
    """Smallest complete tree rooted at the element; ties by declaration
    order; list slots are left empty."""
    if sizes is None:
        sizes = min_completion_sizes(g)
    el = g.by_name[element_name]
    groups = []
    for k, (nt, kind) in enumerate(el.slots):
        if kind == LIST:
            groups.append(())
        else:
            candidates = g.permitted(element_name, k)
            best = min(candidates, key=lambda name: sizes[name])
            groups.append((min_completion(g, best, sizes),))
    return Tree(element_name, tuple(groups))


# ---------------------------------------------------------------------------
# synthetic generation


def _random_tree(g: Grammar, rng: Rng, depths: dict[str, int],
                 candidates: tuple[str, ...], depth_budget: int, max_list: int) -> Tree:
    fitting = [name for name in candidates if depths[name] <= depth_budget]
    if not fitting:
        raise CorpusError(f"no element fits in depth budget {depth_budget}")
    name = fitting[int(rng.integers(0, len(fitting), 1)[0])]
    el = g.by_name[name]
    groups = []
    for k, (nt, kind) in enumerate(el.slots):
        slot_candidates = g.permitted(name, k)
        if kind == SINGLE:
            groups.append((_random_tree(g, rng, depths, slot_candidates,
                                        depth_budget - 1, max_list),))
        else:
            length = 0
            # geometric length, success probability 0.5, truncated at max_list
            while length < max_list and rng.random() < 0.5:
                length += 1
            if depth_budget <= 1 or not any(depths[c] <= depth_budget - 1 for c in slot_candidates):
                length = 0
            groups.append(tuple(_random_tree(g, rng, depths, slot_candidates,
                                             depth_budget - 1, max_list)
                                for _ in range(length)))
    return Tree(name, tuple(groups))


def synth_corpus(g: Grammar, seed: int, count: int, max_depth: int = 6,
                 max_list: int = 4) -> Corpus:
    """Seeded random corpus of distinct grammar-valid trees.

    Top-down generation chooses uniformly among permitted elements whose
    minimal completion depth fits the remaining depth budget; list lengths
    are geometric (p = 0.5) truncated at max_list. Duplicates are retried
    up to count * 10 total attempts.
    """
    if count < 1:
        raise CorpusError("count must be at least 1")
    depths = min_completion_depths(g)
    start_candidates = g.producers(g.start)
    if min(depths[c] for c in start_candidates) > max_depth:
        raise CorpusError(f"grammar has no derivation within depth {max_depth}")
    rng = Rng(seed)
    seen = set()
    trees = []
    attempts = 0
    while len(trees) < count and attempts < count * 10:
        attempts += 1
        t = _random_tree(g, rng, depths, start_candidates, max_depth, max_list)
        key = serialize_tree(g, t)
        if key not in seen:
            seen.add(key)
            trees.append(t)
    return Corpus(trees, loaded=attempts, deduplicated=attempts - len(trees))


def _bfs_order(t: Tree) -> dict[int, int]:
    """Map id(subtree) -> breadth-first visit index."""
    order = {}
    queue = [t]
    i = 0
    while queue:
        nxt = []
        for node_ in queue:
            order[id(node_)] = i
            i += 1
            nxt.extend(node_.children())
        queue = nxt
    return order


def _prefix(g: Grammar, t: Tree, order: dict[int, int], revealed: int,
            sizes: dict[str, int]) -> Tree:
    el = g.by_name[t.label]
    groups = []
    for k, (nt, kind) in enumerate(el.slots):
        group = t.groups[k]
        if kind == SINGLE:
            child = group[0]
            if order[id(child)] < revealed:
                groups.append((_prefix(g, child, order, revealed, sizes),))
            else:
                candidates = g.permitted(t.label, k)
                best = min(candidates, key=lambda name: sizes[name])
                groups.append((min_completion(g, best, sizes),))
        else:
            kept = [_prefix(g, c, order, revealed, sizes)
                    for c in group if order[id(c)] < revealed]
            groups.append(tuple(kept))
    return Tree(t.label, tuple(groups))


def growth_prefixes(g: Grammar, target: Tree) -> list[Tree]:
    """Breadth-first reveal of a target tree as a list of valid trees.

    Prefix k keeps the first k nodes in breadth-first order: hidden list
    children are dropped (always a list suffix), hidden single children
    are replaced by their minimal completion. Adjacent duplicates collapse
    and the sequence always ends at the target itself.
    """
    order = _bfs_order(target)
    sizes = min_completion_sizes(g)
    seq: list[Tree] = []
    for revealed in range(1, tree_size(target) + 1):
        p = _prefix(g, target, order, revealed, sizes)
        if not seq or p != seq[-1]:
            seq.append(p)
    return seq


def synth_traces(g: Grammar, seed: int, students: int, steps: int,
                 max_depth: int = 6, max_list: int = 4,
                 task: str = "task0") -> list[TreeTrace]:
    """Synthetic student traces: each student grows a random target tree
    step by step (breadth-first reveal), ending exactly at the target.
    Traces longer than ``steps`` are evenly subsampled, keeping the final
    tree."""
    if steps < 2:
        raise CorpusError("steps must be at least 2")
    if students < 1:
        raise CorpusError("students must be at least 1")
    depths = min_completion_depths(g)
    sizes = min_completion_sizes(g)
    rng = Rng(seed)
    start_candidates = g.producers(g.start)
    traces = []
    for s in range(students):
        seq: list[Tree] = []
        while len(seq) < 2:  # retry targets whose growth is a single step
            target = _random_tree(g, rng, depths, start_candidates, max_depth, max_list)
            seq = growth_prefixes(g, target)
        if len(seq) > steps:
            # evenly spaced indices including first and last
            picks = sorted({round(i * (len(seq) - 1) / (steps - 1)) for i in range(steps)})
            seq = [seq[i] for i in picks]
        traces.append(TreeTrace(f"student{s:03d}", task,
                                [(t, tree) for t, tree in enumerate(seq)]))
    return traces


# ---------------------------------------------------------------------------
# exhaustive enumeration (test oracle support) and exact-size generation


def enumerate_trees(g: Grammar, max_nodes: int) -> list[Tree]:
    """All grammar-valid trees whose root produces the start symbol with
    at most max_nodes nodes. Exponential; intended for small bounds."""
    memo: dict = {}

    def for_candidates(candidates: tuple[str, ...], budget: int) -> list[Tree]:
        key = (candidates, budget)
        if key in memo:
            return memo[key]
        out = []
        if budget >= 1:
            for name in candidates:
                el = g.by_name[name]
                for groups in fill_slots(name, el.slots, 0, budget - 1):
                    out.append(Tree(name, groups))
        memo[key] = out
        return out

    def fill_slots(name: str, slots, k: int, budget: int):
        if k == len(slots):
            yield ()
            return
        nt, kind = slots[k]
        candidates = g.permitted(name, k)
        if kind == SINGLE:
            for child in for_candidates(candidates, budget):
                used = tree_size(child)
                for rest in fill_slots(name, slots, k + 1, budget - used):
                    yield ((child,),) + rest
        else:
            for group in fill_group(candidates, budget):
                used = sum(tree_size(c) for c in group)
                for rest in fill_slots(name, slots, k + 1, budget - used):
                    yield (group,) + rest

    def fill_group(candidates: tuple[str, ...], budget: int):
        yield ()
        for first in for_candidates(candidates, budget):
            used = tree_size(first)
            for rest in fill_group(candidates, budget - used):
                yield (first,) + rest

    return for_candidates(g.producers(g.start), max_nodes)


def minipy_tree_of_size(rng: Rng, size: int) -> Tree:
    """A random minipy tree with exactly ``size`` nodes (size >= 5).

    Built as Module(Expr(e)) where e is a random expression assembled from
    Call and BinOp combinators that can hit any node count.
    """
    if size < 5:
        raise CorpusError("exact-size generation supports size >= 5")

    def expr(k: int) -> Tree:
        if k == 1:
            label = ("Name", "Str", "Num")[int(rng.integers(0, 3, 1)[0])]
            return Tree(label)
        if k == 2:
            return Tree("Call", ((Tree("Name"),), ()))
        if k >= 5 and rng.random() < 0.5:
            # BinOp(left, op, right): 2 overhead nodes + left + right
            left = 1 + int(rng.integers(0, k - 4, 1)[0])
            op = ("Add", "Sub", "Mult", "Div")[int(rng.integers(0, 4, 1)[0])]
            return Tree("BinOp", ((expr(left),), (Tree(op),), (expr(k - 2 - left),)))
        # Call(Name, [arg]): 2 overhead nodes + argument
        return Tree("Call", ((Tree("Name"),), (expr(k - 2),)))

    return Tree("Module", ((Tree("Expr", ((expr(size - 2),),)),),))
