"""Task corpus handling, automatic metrics, ratings and reports."""
from .dataset import (
    CorpusStats,
    TaskSpec,
    check_corpus,
    corpus_stats,
    length_category,
    load_tasks,
    parse_tasks,
    select_tasks,
    validate_task,
)
from .metrics import (
    CLIP_SCALE,
    DinoRatio,
    MetricResult,
    bert_score,
    clip_score,
    clip_similarity,
    dino_mean,
    dino_ratio,
    dino_score,
    greedy_f1,
)
from .rating import Ratings, mllm_rate, parse_rating
from .report import emit_report, render_html
from .scoring import ScoreReport, TaskScores, evaluate

__all__ = [
    "CLIP_SCALE", "CorpusStats", "DinoRatio", "MetricResult", "Ratings", "ScoreReport", "TaskScores",
    "TaskSpec", "bert_score", "check_corpus", "clip_score", "clip_similarity", "corpus_stats", "dino_mean",
    "dino_ratio", "dino_score", "emit_report", "evaluate", "greedy_f1", "length_category", "load_tasks",
    "mllm_rate", "parse_rating", "parse_tasks", "render_html", "select_tasks", "validate_task",
]
