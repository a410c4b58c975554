"""Description-driven workflow and application-integration engine.

Versioned descriptions (meta-objects) are stored as data and interpreted at
runtime: Items are instantiated from them, enacted as event-sourced
workflows, migrated between versions after validation, and connectors are
Items whose behaviour moves messages between simulated endpoints.
"""

from .enactment import Engine, Event, EventType, Item
from .errors import DDSError, Violation
from .evolution import MigrationReport, enumerate_executions, migration_report
from .integration import ConnectorSpec, Integration, RoutingRule, route
from .metamodel import Kind, Repository, VersionRef, WorkflowGraph, validate_graph
from .store import Store
from .system import LogicalClock, System
from .transport import Bus, CommMode, Message

__version__ = "0.1.0"

__all__ = [
    "Engine", "Event", "EventType", "Item", "DDSError", "Violation", "MigrationReport",
    "enumerate_executions", "migration_report", "ConnectorSpec", "Integration", "RoutingRule", "route",
    "Kind", "Repository", "VersionRef", "WorkflowGraph", "validate_graph", "Store", "LogicalClock",
    "System", "Bus", "CommMode", "Message",
]
