"""Interpretable out-of-context image-caption misinformation detection.

Captions are decomposed into elementary fact queries over their AMR graph,
the queries are answered against the image by a vision-language scorer, a
trained ranker picks the most supportive queries, and their answers are
counted into a verdict that comes with its evidence.
"""

from decontext.extraction import ElementaryStatement, Query, StatementKind, extract_queries, extract_statements, render_query
from decontext.graph import AmrEdge, AmrGraph, AmrNode, NeType, PosTag, neighbors, parse_graph, serialize_graph
from decontext.labels import Answer, Label
from decontext.oracle import AnswerCache, FixtureBackend, NoisyPlantedBackend, QueryAnswer, RemoteBackend, answer_query, batch_answer
from decontext.ranker import (
    EmbeddingTriple, Hyperparameters, RankerModel, TrainSample, classify, fuse, init_model, load_model, save_model,
    support_prob, train,
)
from decontext.verdict import EvidenceReport, ScoredQuery, Verdict, build_report, decide, predict, select_evidence
from decontext.metrics import LabeledPrediction, accuracy, auc_roc, far_frr, hit_at_k
from decontext.pipeline import PipelineConfig, load_config, run_pipeline, synthesize

__version__ = "0.1.0"
