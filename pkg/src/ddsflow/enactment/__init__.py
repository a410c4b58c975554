"""Base-level enactment: Items, events, token-flow execution and replay."""

from .engine import DEFAULT_K, Draft, Engine, Event, EventType, Item, ItemState, role_allows
from .net import ActivityState, ItemStatus, Marking, Net, compile_net, initial_marking

__all__ = [
    "DEFAULT_K", "Draft", "Engine", "Event", "EventType", "Item", "ItemState", "role_allows",
    "ActivityState", "ItemStatus", "Marking", "Net", "compile_net", "initial_marking",
]
