"""Combinatoric privacy threat elicitation over declarative knowledge bases."""

from .elicitation import (
    DomainThreat,
    ElicitationConfig,
    ElicitationResult,
    associate,
    collect_assets,
    collect_threats,
    run_pipeline,
)
from .incidents import Incident, IncidentStore, add_incident, occurrence_stats
from .kb import check_level_consistency, is_hypernym_of, load_kb, save_kb, validate_kb
from .model import (
    Asset,
    AssociationRule,
    KnowledgeBase,
    PrivacyProperty,
    Threat,
    ThreatAgent,
    ThreatCategory,
    ThreatTree,
    TreeNode,
)
from .reporting import ReportFormat, diff_golden, render
from .trees import enumerate_cut_sets, find_derivation, satisfies

__version__ = "0.1.0"
