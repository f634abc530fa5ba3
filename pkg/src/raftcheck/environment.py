"""The network intermediary and the client.

The network holds a *set* of in-flight payloads, so identical messages
collapse and any of them may be delivered next (reordering comes for free).
The client issues command ids 1, 2, ... one at a time.
"""

from __future__ import annotations

from typing import Optional

from .core import Config, Message


def network_accept(messages: frozenset, msg: Message, cfg: Config) -> Optional[frozenset]:
    if len(messages) >= cfg.networkCapacity:
        return None
    return messages | {msg}


def network_accept_set(messages: frozenset, msgs: frozenset, cfg: Config) -> Optional[frozenset]:
    # Deliberately conservative: room for a full broadcast is required even
    # when fewer peers are addressed.
    if not len(messages) + cfg.numberOfServers < cfg.networkCapacity + 1:
        return None
    return messages | msgs


def network_deliver(messages: frozenset, msg: Message) -> Optional[frozenset]:
    if msg not in messages:
        return None
    return messages - {msg}


def network_lose(messages: frozenset, msg: Message, cfg: Config) -> Optional[frozenset]:
    if not cfg.lossyNetwork or msg not in messages:
        return None
    return messages - {msg}


def client_step(next_command: int, cfg: Config) -> Optional[tuple[int, int]]:
    """Returns ``(new counter, emitted command id)``, or ``None`` once exhausted."""
    if next_command > cfg.numberOfClientRequests:
        return None
    return next_command + 1, next_command


def check_network(messages: frozenset, cfg: Config) -> None:
    if len(messages) > cfg.networkCapacity:
        raise AssertionError(f"{len(messages)} messages exceed capacity {cfg.networkCapacity}")
    for m in messages:
        if m.sender == m.receiver:
            raise AssertionError(f"self-addressed message {m}")
