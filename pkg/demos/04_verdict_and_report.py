"""
Verdicts and evidence
=====================

The k most supportive queries form the evidence set. A majority of Yes
answers among them means the caption fits the image; a majority of No (or
a tie) flags the pair as out of context.
"""

import json

from decontext import build_report, decide, extract_queries, parse_graph
from decontext.labels import Answer
from decontext.oracle import QueryAnswer

graph = parse_graph({
    "caption": "Yellow taxi in New York",
    "nodes": [
        {"id": 0, "surface": "taxi", "pos": "Noun", "ne": "None"},
        {"id": 1, "surface": "yellow", "pos": "Adjective", "ne": "None"},
        {"id": 2, "surface": "New York", "pos": "NamedEntity", "ne": "Location"},
        {"id": 3, "surface": "drive", "pos": "Verb", "ne": "None"},
    ],
    "edges": [
        {"src": 0, "dst": 1, "relation": ":mod"},
        {"src": 3, "dst": 0, "relation": ":ARG0"},
        {"src": 3, "dst": 2, "relation": ":location"},
    ],
})
queries = extract_queries(graph)

# Oracle answers for a photo of a green taxi in London, and ranker scores.
scores = [0.81, 0.07, 0.22, 0.35]
answers = [QueryAnswer(Answer.YES if s >= 0.5 else Answer.NO, s, "demo") for s in scores]
p_s = [0.40, 0.91, 0.88, 0.35]

verdict = decide(queries, answers, p_s, k=3)
report = build_report("demo-1", graph.caption, "img/taxi.jpg", queries, answers, p_s, verdict)

print(report.render_text())
print()
print(json.dumps(report.to_dict()["verdict"], indent=2))
