"""Description evolution: ad-hoc deltas, validated migration, execution oracle."""

from .delta import DeltaOp, InsertAfter, ReplaceGuard, SkipActivity, apply_delta, apply_deltas, delta_from_dict, delta_to_dict
from .migration import MigrationReport, Verdict, apply_adhoc, migrate, migration_report, replay_trace
from .oracle import MAX_EVENTS, enumerate_executions, prefixes_of

__all__ = [
    "DeltaOp", "InsertAfter", "ReplaceGuard", "SkipActivity", "apply_delta", "apply_deltas",
    "delta_from_dict", "delta_to_dict", "MigrationReport", "Verdict", "apply_adhoc", "migrate",
    "migration_report", "replay_trace", "MAX_EVENTS", "enumerate_executions", "prefixes_of",
]
