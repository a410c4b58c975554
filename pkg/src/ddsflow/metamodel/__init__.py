"""Meta-level: description kinds, workflow graphs, versioned repository."""

from .graph import ActivityDef, ActivityKind, Gate, Transition, VersionRef, WorkflowGraph, sequence, validate_graph
from .metaschema import GRAPH_KINDS, META_META_MODEL, Kind, check_body, meta_schema
from .repository import LATEST, ChangeSet, DescriptionRecord, Repository, check_description, diff_graphs

__all__ = [
    "ActivityDef", "ActivityKind", "Gate", "Transition", "VersionRef", "WorkflowGraph", "sequence",
    "validate_graph", "GRAPH_KINDS", "META_META_MODEL", "Kind", "check_body", "meta_schema", "LATEST",
    "ChangeSet", "DescriptionRecord", "Repository", "check_description", "diff_graphs",
]
