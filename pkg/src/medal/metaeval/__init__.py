from .corpus import CorpusStats, LanguageStats, corpus_stats
from .harness import (
    TIE,
    WIN_A,
    WIN_B,
    JudgeConfig,
    PreferenceOutcome,
    Predictions,
    pairwise_preference_trial,
    parse_preference,
    run_judge_harness,
    translate_dialogue,
)
from .report import (
    ClassificationReport,
    agreement_report,
    build_report,
    correlation_report,
    dumps_report,
    f1_suite,
    human_reference,
    write_report,
)
from .stats import (
    Correlation,
    adjacent_agreement,
    average_ranks,
    binary_metrics,
    exact_agreement,
    krippendorff_alpha,
    mcnemar,
    mtld,
    pearson,
    spearman,
)
