"""Difficulty-graded curriculum construction for RAG training."""

try:
    from ragcur._ragcur import (
        build_prompt,
        contains_answer,
        default_schedules,
        exact_match,
        extract_answer,
        f1_score,
        normalize_answer,
        normalized_text,
        rerank,
        sample_stage_positions,
        tiered_loss,
        tiered_loss_grad,
    )
except ImportError:  # extension on sys.path directly (in-tree test runs)
    from _ragcur import (
        build_prompt,
        contains_answer,
        default_schedules,
        exact_match,
        extract_answer,
        f1_score,
        normalize_answer,
        normalized_text,
        rerank,
        sample_stage_positions,
        tiered_loss,
        tiered_loss_grad,
    )

__all__ = [
    "build_prompt",
    "contains_answer",
    "default_schedules",
    "exact_match",
    "extract_answer",
    "f1_score",
    "normalize_answer",
    "normalized_text",
    "rerank",
    "sample_stage_positions",
    "tiered_loss",
    "tiered_loss_grad",
]
