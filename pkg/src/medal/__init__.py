"""Multilingual dialogue generation, labelling, curation and judge meta-evaluation."""

from .core import (
    ISSUES,
    AnnotationRecord,
    BenchmarkEntry,
    Dialogue,
    DialogueAssessment,
    IssueLabel,
    SchemaError,
    SeedContext,
    Turn,
    parse_record,
    serialize_record,
)

__version__ = "0.1.0"
