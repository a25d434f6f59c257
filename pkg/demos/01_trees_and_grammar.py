"""Trees, the minipy grammar, and tree edit distance.

The library models programs as grammar-conforming trees. This demo parses
a small program into a tree, serializes it back, validates it against the
grammar, and measures how far apart two edits of the same program are.
"""

from treevec import minipy, parse_program, serialize_tree, ted, tree_size, validate

g = minipy()

before = """\
def f(x):
    return x + 1

y = f(2)
"""

after = """\
def f(x):
    if x > 0:
        return x + 1
    return x

y = f(2)
"""

t1 = parse_program(before)
t2 = parse_program(after)

print("program A:")
print(before)
print("as a tree:", serialize_tree(g, t1))
print("size:", tree_size(t1), "nodes; grammar violations:", validate(g, t1))
print()
print("program B adds a guard; its tree has", tree_size(t2), "nodes")
print("tree edit distance A -> B:", ted(t1, t2))
print("a tree is always distance 0 from itself:", ted(t1, t1))
