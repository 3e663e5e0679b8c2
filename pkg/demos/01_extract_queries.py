"""
From a caption graph to yes/no questions
========================================

A caption's AMR graph, with part-of-speech and named-entity tags on every
node, is decomposed into elementary statements, and each statement is
rendered as a question a vision-language model can answer.
"""

from decontext import extract_queries, parse_graph

# "A brown dog runs in the park." Node ids fix the traversal order.
doc = {
    "caption": "A brown dog runs in the park",
    "nodes": [
        {"id": 0, "surface": "dog", "pos": "Noun", "ne": "None"},
        {"id": 1, "surface": "brown", "pos": "Adjective", "ne": "None"},
        {"id": 2, "surface": "park", "pos": "Noun", "ne": "Location"},
        {"id": 3, "surface": "run", "pos": "Verb", "ne": "None"},
    ],
    "edges": [
        {"src": 0, "dst": 1, "relation": ":mod"},
        {"src": 3, "dst": 0, "relation": ":ARG0"},
        {"src": 3, "dst": 2, "relation": ":location"},
    ],
}
graph = parse_graph(doc)

# Nouns give objects (or places and times), adjectives hanging off a noun
# give attributes, and a verb between two nouns gives a relationship.
for q in extract_queries(graph):
    s = q.statement
    print(f"{q.index}  {s.kind.value:<15} {s.slots!s:<28} {q.text}")

# A verb with three nominal neighbours fits no template and is skipped
# (logged at INFO level); the nouns still yield their own statements.
crowded = parse_graph({
    "caption": "Obama gives Merkel a book",
    "nodes": [
        {"id": 0, "surface": "Obama", "pos": "NamedEntity", "ne": "Person"},
        {"id": 1, "surface": "give", "pos": "Verb", "ne": "None"},
        {"id": 2, "surface": "Merkel", "pos": "NamedEntity", "ne": "Person"},
        {"id": 3, "surface": "book", "pos": "Noun", "ne": "None"},
    ],
    "edges": [{"src": 1, "dst": i, "relation": ""} for i in (0, 2, 3)],
})
print([q.text for q in extract_queries(crowded)])
