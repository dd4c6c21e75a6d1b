"""Complex-query toolkit for knowledge graphs.

Pipeline: load tab-separated triple splits, sample logical queries from 14
fixed templates, compile them into binary-tree subquery chains, retrieve
neighborhood context under a token budget, emit curriculum-staged
instruction corpora, and score predictions with filtered MRR.
"""

__version__ = "0.1.0"

from cqkit.kg import KnowledgeGraph, SplitGraphs, Triple, load_split, merge
from cqkit.queries import And, Entity, Or, Proj, classify, parse, render
from cqkit.decompose import compile_query, difficulty
from cqkit.executor import AnswerSplit, answer, answer_chain, split_answers

__all__ = [
    "KnowledgeGraph",
    "SplitGraphs",
    "Triple",
    "load_split",
    "merge",
    "Entity",
    "Proj",
    "And",
    "Or",
    "parse",
    "render",
    "classify",
    "compile_query",
    "difficulty",
    "answer",
    "answer_chain",
    "split_answers",
    "AnswerSplit",
]
