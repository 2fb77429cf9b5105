"""Subjective-logic trust management and misbehavior detection."""
from .errors import *  # noqa: F401,F403
from .opinion import (
    BINARY,
    BinomialOpinion,
    Domain,
    EvidenceRecord,
    Opinion,
    average_fuse,
    chained_average_fuse,
    cumulative_fuse,
    dirichlet_pdf,
    from_evidence,
    project,
    to_evidence,
    validate,
)
from .trust import (
    AgingParams,
    DiscountContext,
    TrustRecord,
    TrustStore,
    accumulate_partially_dependent,
    age_trust,
    discount_opinion,
    reward_success,
    split_dependence,
)
from .misbehavior import (
    ClassificationResult,
    ConflictGraph,
    DetectParams,
    ReportedOpinion,
    build_conflict_graph,
    classify,
    degree_of_conflict,
    detect,
    dominant_components,
    reference_opinion,
    revise_trust,
    select_reference,
)

__version__ = "0.1.0"
