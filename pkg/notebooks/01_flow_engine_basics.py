# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
# ---

# # The flow engine in five minutes
#
# A graph is made of streams (append-only logs) and nodes (stateless
# transforms). Every tick, records injected into Input streams flow through
# the nodes in topological order.

from ridefbp.engine import Category, Graph, export_dot

# +
g = Graph("demo")
g.add_stream("Numbers", Category.INPUT)
g.add_stream("Squares", Category.INTERNAL)
g.add_stream("RunningTotal", Category.OUTPUT)


def square(inp):
    return {"Squares": [x * x for x in inp.new("Numbers")]}


def total(inp):
    # no state on the node: the total is recomputed from stream history
    return {"RunningTotal": [sum(inp.history("Squares"))]}


g.add_node("Square", ["Numbers"], ["Squares"], square)
g.add_node("Total", ["Squares"], ["RunningTotal"], total)
print("violations:", g.validate())
# -

for batch in ([1, 2, 3], [4], []):
    print(g.tick, g.execute_tick({"Numbers": batch}))

# ## Taps and introspection
#
# A tap watches a stream without touching any node.

seen = []
g.attach_tap("Squares", lambda record, tick: seen.append((tick, record)))
g.execute_tick({"Numbers": [10]})
print(seen)
print(g.find_stream("Squares").stamped())

# ## DOT export
#
# Input streams are red boxes, internal ones yellow, outputs green; nodes are ellipses.

print(export_dot(g))
