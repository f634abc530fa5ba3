"""Protocol data types and per-node Raft transition logic.

Every function here is pure: it takes a ``NodeState`` (an immutable named
tuple) and returns a new one. Logs are plain tuples of ``LogEntry`` and are
read through 1-indexed helpers, matching how Raft numbers log positions.

Functions that model a guarded action return ``None`` when the guard does not
hold, meaning the action is not enabled in that state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional


class Config(NamedTuple):
    """Model instance parameters."""

    numberOfServers: int = 3
    numberOfClientRequests: int = 2
    maxTerm: int = 1
    networkCapacity: int = 3
    lossyNetwork: bool = False
    crashesEnabled: bool = False

    def validate(self) -> "Config":
        if self.numberOfServers < 1:
            raise ValueError("numberOfServers must be at least 1")
        if self.numberOfClientRequests < 0:
            raise ValueError("numberOfClientRequests must be non-negative")
        if self.maxTerm < 1:
            raise ValueError("maxTerm must be at least 1")
        if self.networkCapacity < 1:
            raise ValueError("networkCapacity must be at least 1")
        return self


class Role(enum.IntEnum):
    LEADER = 0
    CANDIDATE = 1
    FOLLOWER = 2
    CRASHED = 3

    def __str__(self):
        return self.name.capitalize()


class LogEntry(NamedTuple):
    term: int
    command: int

    def render(self) -> str:
        return f"Command({self.term},{self.command})"


Log = tuple  # tuple[LogEntry, ...]


def render_log(log) -> str:
    return "[" + ",".join(e.render() for e in log) + "]"


def _b(flag: bool) -> str:
    return "true" if flag else "false"


# RPC variants are frozen dataclasses rather than named tuples: dataclass
# equality also compares the class, so e.g. a vote request and an
# append-entries response with equal field values never collapse in a set.


@dataclass(frozen=True, slots=True)
class RequestVoteRequest:
    term: int
    lastLogIndex: int
    lastLogTerm: int

    kind = 0

    def fields(self):
        return (self.term, self.lastLogIndex, self.lastLogTerm)

    def render(self) -> str:
        return f"RequestVoteRequest({self.term},{self.lastLogIndex},{self.lastLogTerm})"


@dataclass(frozen=True, slots=True)
class RequestVoteResponse:
    term: int
    voteGranted: bool

    kind = 1

    def fields(self):
        return (self.term, self.voteGranted)

    def render(self) -> str:
        return f"RequestVoteResponse({self.term},{_b(self.voteGranted)})"


@dataclass(frozen=True, slots=True)
class AppendEntriesRequest:
    term: int
    prevLogIndex: int
    prevLogTerm: int
    entries: tuple
    leaderCommit: int

    kind = 2

    def fields(self):
        return (self.term, self.prevLogIndex, self.prevLogTerm, self.entries, self.leaderCommit)

    def render(self) -> str:
        return (
            f"AppendEntriesRequest({self.term},{self.prevLogIndex},{self.prevLogTerm},"
            f"{render_log(self.entries)},{self.leaderCommit})"
        )


@dataclass(frozen=True, slots=True)
class AppendEntriesResponse:
    term: int
    success: bool
    matchIndex: int

    kind = 3

    def fields(self):
        return (self.term, self.success, self.matchIndex)

    def render(self) -> str:
        return f"AppendEntriesResponse({self.term},{_b(self.success)},{self.matchIndex})"


Rpc = RequestVoteRequest | RequestVoteResponse | AppendEntriesRequest | AppendEntriesResponse


class Message(NamedTuple):
    """A network payload ``(sender, rpc, receiver)``."""

    sender: int
    rpc: Rpc
    receiver: int

    def sort_key(self):
        return (self.sender, self.receiver, self.rpc.kind, self.rpc.fields())

    def render(self) -> str:
        return f"Message({self.sender},{self.rpc.render()},{self.receiver})"


class NodeState(NamedTuple):
    id: int
    role: Role
    currentTerm: int
    log: tuple
    commitIndex: int
    votedFor: Optional[int]
    voterLog: frozenset
    nextIndex: tuple
    matchIndex: tuple
    replyToBeSent: Optional[Message]


class CommitInfo(NamedTuple):
    oldCommitIndex: int
    newCommitIndex: int
    term: int
    log: tuple


class ProtocolError(AssertionError):
    """A NodeState invariant or an operation contract was violated."""


def initial_node(node_id: int, cfg: Config) -> NodeState:
    n = cfg.numberOfServers
    return NodeState(
        id=node_id,
        role=Role.FOLLOWER,
        currentTerm=0,
        log=(),
        commitIndex=0,
        votedFor=None,
        voterLog=frozenset(),
        nextIndex=(1,) * n,
        matchIndex=(0,) * n,
        replyToBeSent=None,
    )


# ---------------------------------------------------------------- log helpers


def majority(n: int) -> int:
    return n // 2 + 1


def last_term(log) -> int:
    return log[-1].term if log else 0


def entry_at(log, index: int) -> LogEntry:
    """Entry at 1-indexed position ``index``."""
    if not 1 <= index <= len(log):
        raise IndexError(f"log position {index} outside 1..{len(log)}")
    return log[index - 1]


def term_at(log, index: int) -> int:
    return 0 if index == 0 else entry_at(log, index).term


def prefix(log, k: int):
    """First ``k`` entries of ``log`` (positions 1..k)."""
    if not 0 <= k <= len(log):
        raise IndexError(f"prefix length {k} outside 0..{len(log)}")
    return log[:k]


# ---------------------------------------------------------------- elections


def timeout(node: NodeState, cfg: Config) -> Optional[NodeState]:
    if node.role in (Role.LEADER, Role.CRASHED) or node.currentTerm >= cfg.maxTerm:
        return None
    node = node._replace(
        role=Role.CANDIDATE,
        currentTerm=node.currentTerm + 1,
        votedFor=node.id,
        voterLog=frozenset((node.id,)),
        replyToBeSent=None,
    )
    # A one-node cluster already has its majority with the self-vote.
    if len(node.voterLog) >= majority(cfg.numberOfServers):
        node = become_leader(node)
    return node


def create_request_vote_set(node: NodeState, cfg: Config) -> frozenset:
    if node.role != Role.CANDIDATE:
        raise ProtocolError("only candidates request votes")
    rpc = RequestVoteRequest(node.currentTerm, len(node.log), last_term(node.log))
    return frozenset(
        Message(node.id, rpc, r)
        for r in range(cfg.numberOfServers)
        if r != node.id and r not in node.voterLog
    )


def step_down(node: NodeState, term: int) -> NodeState:
    """Adopt a newer term as a Follower that has not voted in it."""
    if term <= node.currentTerm:
        raise ProtocolError(f"step_down to term {term} from {node.currentTerm}")
    n = len(node.nextIndex)
    return node._replace(
        role=Role.FOLLOWER,
        currentTerm=term,
        votedFor=None,
        voterLog=frozenset(),
        # leader bookkeeping is meaningless outside leadership
        nextIndex=(1,) * n,
        matchIndex=(0,) * n,
    )


def grant_vote(node: NodeState, req: RequestVoteRequest, candidate: int) -> bool:
    if node.votedFor is not None and node.votedFor != candidate:
        return False
    my_last = last_term(node.log)
    return req.lastLogTerm > my_last or (
        req.lastLogTerm == my_last and req.lastLogIndex >= len(node.log)
    )


def become_leader(node: NodeState) -> NodeState:
    n = len(node.nextIndex)
    size = len(node.log)
    return node._replace(
        role=Role.LEADER,
        nextIndex=(size + 1,) * n,
        matchIndex=tuple(size if j == node.id else 0 for j in range(n)),
    )


# ---------------------------------------------------------------- messages


def merge_entries(log, prev_index: int, entries):
    """Apply the entries of an accepted append request to ``log``.

    An identical entry at ``prev_index + 1`` is kept together with whatever
    follows it; a conflicting one is dropped along with its suffix.
    """
    if not entries:
        return log
    (entry,) = entries
    pos = prev_index + 1
    if len(log) >= pos:
        if log[pos - 1] == entry:
            return log
        log = log[: pos - 1]
    return log + (entry,)


def is_advance_commit_index_ok(node: NodeState, index: int) -> bool:
    """Only entries of the leader's own term are committed by counting replicas."""
    return index > node.commitIndex and entry_at(node.log, index).term == node.currentTerm


def handle_message(node: NodeState, msg: Message, cfg: Config) -> NodeState:
    """Atomically process one delivered message and buffer the reply, if any."""
    if msg.receiver != node.id:
        raise ProtocolError(f"message for {msg.receiver} delivered to {node.id}")
    if node.role == Role.CRASHED or node.replyToBeSent is not None:
        raise ProtocolError(f"node {node.id} cannot receive now")
    rpc = msg.rpc
    if rpc.term < node.currentTerm:
        return node
    if rpc.term > node.currentTerm:
        node = step_down(node, rpc.term)

    sender = msg.sender
    if isinstance(rpc, RequestVoteRequest):
        granted = grant_vote(node, rpc, sender)
        if granted:
            node = node._replace(votedFor=sender)
        reply = RequestVoteResponse(node.currentTerm, granted)
        return node._replace(replyToBeSent=Message(node.id, reply, sender))

    if isinstance(rpc, RequestVoteResponse):
        if node.role != Role.CANDIDATE or not rpc.voteGranted:
            return node
        node = node._replace(voterLog=node.voterLog | {sender})
        if len(node.voterLog) >= majority(cfg.numberOfServers):
            node = become_leader(node)
        return node

    if isinstance(rpc, AppendEntriesRequest):
        if node.role == Role.LEADER:
            # two leaders of one term; unreachable unless the protocol is broken
            return node
        if node.role == Role.CANDIDATE:
            node = node._replace(role=Role.FOLLOWER)
        log = node.log
        prev = rpc.prevLogIndex
        log_ok = prev == 0 or (prev <= len(log) and log[prev - 1].term == rpc.prevLogTerm)
        if not log_ok:
            reply = AppendEntriesResponse(node.currentTerm, False, 0)
            return node._replace(replyToBeSent=Message(node.id, reply, sender))
        log = merge_entries(log, prev, rpc.entries)
        match = prev + len(rpc.entries)
        commit = max(node.commitIndex, min(rpc.leaderCommit, len(log)))
        reply = AppendEntriesResponse(node.currentTerm, True, match)
        return node._replace(
            log=log,
            commitIndex=commit,
            replyToBeSent=Message(node.id, reply, sender),
        )

    # AppendEntriesResponse
    if node.role != Role.LEADER:
        return node
    next_index = list(node.nextIndex)
    if rpc.success:
        next_index[sender] = rpc.matchIndex + 1
        match_index = list(node.matchIndex)
        match_index[sender] = rpc.matchIndex
        return node._replace(nextIndex=tuple(next_index), matchIndex=tuple(match_index))
    next_index[sender] = max(1, next_index[sender] - 1)
    return node._replace(nextIndex=tuple(next_index))


# ---------------------------------------------------------------- replication


def client_request(node: NodeState, command: int) -> Optional[NodeState]:
    if node.role != Role.LEADER:
        return None
    return node._replace(log=node.log + (LogEntry(node.currentTerm, command),))


def leader_send_append_entries(node: NodeState, target: int) -> Message:
    if node.role != Role.LEADER or target == node.id:
        raise ProtocolError("append entries are sent by a leader to a peer")
    ni = node.nextIndex[target]
    prev = ni - 1
    log = node.log
    entries = (log[ni - 1],) if ni <= len(log) else ()
    rpc = AppendEntriesRequest(
        node.currentTerm, prev, term_at(log, prev), entries, min(node.commitIndex, ni)
    )
    return Message(node.id, rpc, target)


def create_append_entries_set(node: NodeState, cfg: Config) -> frozenset:
    return frozenset(
        leader_send_append_entries(node, peer)
        for peer in range(cfg.numberOfServers)
        if peer != node.id
    )


def max_agree_index(node: NodeState, cfg: Config) -> int:
    need = majority(cfg.numberOfServers)
    best = 0
    for i in range(1, len(node.log) + 1):
        agree = 1 + sum(1 for j, m in enumerate(node.matchIndex) if j != node.id and m >= i)
        if agree >= need:
            best = i
    return best


def advance_commit_index(node: NodeState, cfg: Config):
    """Returns ``(node, CommitInfo)`` or ``None`` when no commit step is enabled."""
    if node.role != Role.LEADER:
        return None
    m = max_agree_index(node, cfg)
    if m == 0 or not is_advance_commit_index_ok(node, m):
        return None
    info = CommitInfo(node.commitIndex, m, node.currentTerm, node.log)
    return node._replace(commitIndex=m), info


# ---------------------------------------------------------------- crashes


def crash(node: NodeState) -> Optional[NodeState]:
    if node.role == Role.CRASHED:
        return None
    return node._replace(role=Role.CRASHED)


def resume(node: NodeState) -> Optional[NodeState]:
    """Restart as a Follower; term, vote and log survive, everything else resets."""
    if node.role != Role.CRASHED:
        return None
    n = len(node.nextIndex)
    return node._replace(
        role=Role.FOLLOWER,
        commitIndex=0,
        voterLog=frozenset(),
        nextIndex=(1,) * n,
        matchIndex=(0,) * n,
        replyToBeSent=None,
    )


# ---------------------------------------------------------------- validation


def check_node(node: NodeState, cfg: Config) -> None:
    """Raise ProtocolError if ``node`` breaks a NodeState invariant."""
    n = cfg.numberOfServers

    def fail(why):
        raise ProtocolError(f"node {node.id}: {why}: {node}")

    if not 0 <= node.id < n:
        fail("id out of range")
    if node.commitIndex > len(node.log):
        fail("commitIndex beyond log")
    if len(node.nextIndex) != n or len(node.matchIndex) != n:
        fail("per-peer vectors have wrong length")
    if any(not 1 <= ni <= len(node.log) + 1 for ni in node.nextIndex):
        fail("nextIndex out of range")
    if node.role in (Role.CANDIDATE, Role.LEADER):
        if node.id not in node.voterLog or node.votedFor != node.id:
            fail("candidate/leader has not voted for itself")
    if node.role == Role.LEADER and len(node.voterLog) < majority(n):
        fail("leader without a majority")
    prev = 0
    for e in node.log:
        if e.term < prev:
            fail("log terms decrease")
        if not 1 <= e.term <= node.currentTerm:
            fail("log entry term out of range")
        prev = e.term
    if any(not 0 <= v < n for v in node.voterLog):
        fail("voterLog id out of range")
    if node.votedFor is not None and not 0 <= node.votedFor < n:
        fail("votedFor out of range")
    reply = node.replyToBeSent
    if reply is not None and (reply.sender != node.id or not 0 <= reply.receiver < n):
        fail("buffered reply has wrong endpoints")
