"""Global state composition, successor generation and breadth-first exploration.

A global state is the vector of node states, the set of in-flight messages and
the client counter. Synchronised actions of the model (a node handing a message
to the network, the network handing one to a node, the client talking to a
leader) are single atomic transitions here.

Explored states are stored compactly: node states and message sets are
interned into tables and a global state becomes a small tuple of table
indices. Transitions live in three parallel ``array`` columns.
"""

from __future__ import annotations

import logging
from array import array
from dataclasses import dataclass
from typing import IO, Callable, Iterator, NamedTuple, Optional

from . import core, environment
from .core import CommitInfo, Config, Message, NodeState, Role, render_log

log = logging.getLogger(__name__)

ENCODING_VERSION = b"raftcheck-state/1"


class GlobalState(NamedTuple):
    nodes: tuple  # tuple[NodeState, ...], index = node id
    network: frozenset  # frozenset[Message]
    client: int  # next command id the client will issue


# ---------------------------------------------------------------- labels


@dataclass(frozen=True, slots=True)
class Timeout:
    node: int

    def render(self):
        return f"timeout({self.node})"


@dataclass(frozen=True, slots=True)
class SendRPC:
    payload: Message

    def render(self):
        return f"sendRPC({self.payload.render()})"


@dataclass(frozen=True, slots=True)
class SendRPCSet:
    payloads: frozenset

    def render(self):
        body = ",".join(m.render() for m in sorted(self.payloads, key=Message.sort_key))
        return f"sendRPCset({{{body}}})"


@dataclass(frozen=True, slots=True)
class ReceiveRPC:
    payload: Message

    def render(self):
        return f"receiveRPC({self.payload.render()})"


@dataclass(frozen=True, slots=True)
class ClientCommand:
    command: int

    def render(self):
        return f"clientCommand({self.command})"


@dataclass(frozen=True, slots=True)
class AdvanceCommitIndex:
    info: CommitInfo

    def render(self):
        i = self.info
        return f"advanceCommitIndex({i.oldCommitIndex},{i.newCommitIndex},{i.term},{render_log(i.log)})"


@dataclass(frozen=True, slots=True)
class Crash:
    node: int

    def render(self):
        return f"crash({self.node})"


@dataclass(frozen=True, slots=True)
class Resume:
    node: int

    def render(self):
        return f"resume({self.node})"


@dataclass(frozen=True, slots=True)
class Lose:
    def render(self):
        return "lose"


LOSE = Lose()

Label = Timeout | SendRPC | SendRPCSet | ReceiveRPC | ClientCommand | AdvanceCommitIndex | Crash | Resume | Lose


# ---------------------------------------------------------------- states


def initial_state(cfg: Config) -> GlobalState:
    cfg.validate()
    nodes = tuple(core.initial_node(i, cfg) for i in range(cfg.numberOfServers))
    return GlobalState(nodes, frozenset(), 1)


def _put(nodes: tuple, node: NodeState) -> tuple:
    i = node.id
    return nodes[:i] + (node,) + nodes[i + 1 :]


def successors(s: GlobalState, cfg: Config) -> list:
    """All ``(label, successor)`` pairs of ``s`` in canonical order."""
    nodes, msgs, client = s
    out = []

    for node in nodes:
        nxt = core.timeout(node, cfg)
        if nxt is not None:
            out.append((Timeout(node.id), GlobalState(_put(nodes, nxt), msgs, client)))

    if len(msgs) < cfg.networkCapacity:
        for node in nodes:
            reply = node.replyToBeSent
            if reply is not None and node.role != Role.CRASHED:
                net = environment.network_accept(msgs, reply, cfg)
                sender = node._replace(replyToBeSent=None)
                out.append((SendRPC(reply), GlobalState(_put(nodes, sender), net, client)))

    # Candidates broadcast vote requests and leaders broadcast append entries
    # (one per peer, heartbeats included) as a single set send.
    for node in nodes:
        if node.role == Role.CANDIDATE:
            batch = core.create_request_vote_set(node, cfg)
        elif node.role == Role.LEADER:
            batch = core.create_append_entries_set(node, cfg)
        else:
            continue
        if batch:
            net = environment.network_accept_set(msgs, batch, cfg)
            if net is not None:
                out.append((SendRPCSet(batch), GlobalState(nodes, net, client)))

    if msgs:
        for msg in sorted(msgs, key=Message.sort_key):
            receiver = nodes[msg.receiver]
            if receiver.role == Role.CRASHED or receiver.replyToBeSent is not None:
                continue
            nxt = core.handle_message(receiver, msg, cfg)
            net = environment.network_deliver(msgs, msg)
            out.append((ReceiveRPC(msg), GlobalState(_put(nodes, nxt), net, client)))

    step = environment.client_step(client, cfg)
    if step is not None:
        new_client, command = step
        for node in nodes:
            nxt = core.client_request(node, command)
            if nxt is not None:
                out.append((ClientCommand(command), GlobalState(_put(nodes, nxt), msgs, new_client)))

    for node in nodes:
        res = core.advance_commit_index(node, cfg)
        if res is not None:
            nxt, info = res
            out.append((AdvanceCommitIndex(info), GlobalState(_put(nodes, nxt), msgs, client)))

    if cfg.crashesEnabled:
        for node in nodes:
            nxt = core.crash(node)
            if nxt is not None:
                out.append((Crash(node.id), GlobalState(_put(nodes, nxt), msgs, client)))
        for node in nodes:
            nxt = core.resume(node)
            if nxt is not None:
                out.append((Resume(node.id), GlobalState(_put(nodes, nxt), msgs, client)))

    if cfg.lossyNetwork and msgs:
        for msg in sorted(msgs, key=Message.sort_key):
            out.append((LOSE, GlobalState(nodes, environment.network_lose(msgs, msg, cfg), client)))

    return out


def _plain_message(m: Optional[Message]):
    if m is None:
        return None
    fields = tuple(tuple(f) if isinstance(f, tuple) else f for f in m.rpc.fields())
    return (m.sender, m.rpc.kind, fields, m.receiver)


def _plain_node(n: NodeState):
    return (
        n.id,
        int(n.role),
        n.currentTerm,
        tuple(tuple(e) for e in n.log),
        n.commitIndex,
        n.votedFor,
        tuple(sorted(n.voterLog)),
        n.nextIndex,
        n.matchIndex,
        _plain_message(n.replyToBeSent),
    )


def canonical_encode(s: GlobalState) -> bytes:
    """Deterministic, injective byte encoding of a global state."""
    plain = (
        tuple(_plain_node(n) for n in s.nodes),
        tuple(_plain_message(m) for m in sorted(s.network, key=Message.sort_key)),
        s.client,
    )
    return ENCODING_VERSION + b" " + repr(plain).encode("ascii")


def check_state(s: GlobalState, cfg: Config) -> None:
    """Raise if ``s`` breaks a component invariant or the same-state safety facts."""
    if len(s.nodes) != cfg.numberOfServers:
        raise core.ProtocolError("node vector has wrong length")
    for i, node in enumerate(s.nodes):
        if node.id != i:
            raise core.ProtocolError(f"node at position {i} has id {node.id}")
        core.check_node(node, cfg)
    environment.check_network(s.network, cfg)
    if not 1 <= s.client <= cfg.numberOfClientRequests + 1:
        raise core.ProtocolError(f"client counter {s.client} out of range")
    leaders = {}
    for node in s.nodes:
        if node.role == Role.LEADER:
            other = leaders.setdefault(node.currentTerm, node.id)
            if other != node.id:
                raise core.ProtocolError(f"two leaders in term {node.currentTerm}")
    for a in s.nodes:
        for b in s.nodes:
            if a.id < b.id:
                for p in range(min(len(a.log), len(b.log)), 0, -1):
                    if a.log[p - 1] == b.log[p - 1]:
                        if a.log[:p] != b.log[:p]:
                            raise core.ProtocolError(f"log matching broken between {a.id} and {b.id}")
                        break


# ---------------------------------------------------------------- observations


class Observation(NamedTuple):
    """Facts a state exposes to the property checks."""

    leaders: tuple  # (id, term) per leader
    logs: tuple  # (id, term, commitIndex, log) per non-crashed node
    leaderLogs: tuple  # (term, log) per leader


def observe(s: GlobalState) -> Observation:
    return observe_nodes(s.nodes)


def observe_nodes(nodes) -> Observation:
    leaders, logs, leader_logs = [], [], []
    for n in nodes:
        if n.role == Role.CRASHED:
            continue
        logs.append((n.id, n.currentTerm, n.commitIndex, n.log))
        if n.role == Role.LEADER:
            leaders.append((n.id, n.currentTerm))
            leader_logs.append((n.currentTerm, n.log))
    return Observation(tuple(leaders), tuple(logs), tuple(leader_logs))


# ---------------------------------------------------------------- LTS


class StateLimitExceeded(Exception):
    def __init__(self, limit: int, partial: "Lts", frontier: int):
        super().__init__(
            f"state limit {limit} exceeded: {partial.num_states} states found, "
            f"{frontier} still unexpanded"
        )
        self.limit = limit
        self.partial = partial
        self.frontier = frontier


class Lts:
    """Explored transition system with interned state storage."""

    initial = 0

    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.node_table: list = []
        self._node_ids: dict = {}
        self.net_table: list = []
        self._net_ids: dict = {}
        self.keys: list = []
        self._state_ids: dict = {}
        self.labels: list = []
        self._label_ids: dict = {}
        self.src = array("i")
        self.lab = array("i")
        self.dst = array("i")
        self.complete = False
        self._csr = None
        self._obs_cache: dict = {}

    # -- construction

    def _key(self, s: GlobalState) -> tuple:
        node_ids = self._node_ids
        key = []
        for node in s.nodes:
            i = node_ids.get(node)
            if i is None:
                i = node_ids[node] = len(self.node_table)
                self.node_table.append(node)
            key.append(i)
        j = self._net_ids.get(s.network)
        if j is None:
            j = self._net_ids[s.network] = len(self.net_table)
            self.net_table.append(s.network)
        key.append(j)
        key.append(s.client)
        return tuple(key)

    def _label_id(self, label) -> int:
        i = self._label_ids.get(label)
        if i is None:
            i = self._label_ids[label] = len(self.labels)
            self.labels.append(label)
        return i

    # -- access

    @property
    def num_states(self) -> int:
        return len(self.keys)

    @property
    def num_transitions(self) -> int:
        return len(self.src)

    def state(self, i: int) -> GlobalState:
        key = self.keys[i]
        n = self.cfg.numberOfServers
        table = self.node_table
        return GlobalState(tuple(table[k] for k in key[:n]), self.net_table[key[n]], key[n + 1])

    def index_of(self, s: GlobalState) -> Optional[int]:
        try:
            key = (
                *(self._node_ids[n] for n in s.nodes),
                self._net_ids[s.network],
                s.client,
            )
        except KeyError:
            return None
        return self._state_ids.get(key)

    def encode(self, i: int) -> bytes:
        return canonical_encode(self.state(i))

    def transitions(self) -> Iterator[tuple]:
        labels = self.labels
        for s, l, t in zip(self.src, self.lab, self.dst):
            yield s, labels[l], t

    def observation(self, i: int) -> Observation:
        nodes_key = self.keys[i][: self.cfg.numberOfServers]
        obs = self._obs_cache.get(nodes_key)
        if obs is None:
            table = self.node_table
            obs = self._obs_cache[nodes_key] = observe_nodes([table[k] for k in nodes_key])
        return obs

    def nodes_key(self, i: int) -> tuple:
        return self.keys[i][: self.cfg.numberOfServers]

    def csr(self):
        """Forward adjacency as ``(offsets, labels, targets)`` arrays, built once."""
        if self._csr is None:
            n = self.num_states
            counts = array("q", bytes(8 * (n + 1)))
            for s in self.src:
                counts[s + 1] += 1
            for i in range(n):
                counts[i + 1] += counts[i]
            fill = counts[:-1]
            labs = array("i", bytes(4 * self.num_transitions))
            tgts = array("i", bytes(4 * self.num_transitions))
            for s, l, t in zip(self.src, self.lab, self.dst):
                k = fill[s]
                labs[k] = l
                tgts[k] = t
                fill[s] = k + 1
            self._csr = (counts, labs, tgts)
        return self._csr

    def out_edges(self, i: int) -> list:
        offsets, labs, tgts = self.csr()
        return [(self.labels[labs[k]], tgts[k]) for k in range(offsets[i], offsets[i + 1])]


def explore(
    cfg: Config,
    max_states: Optional[int] = None,
    validate: bool = False,
    restrict: Optional[Callable[[GlobalState, object], bool]] = None,
) -> Lts:
    """Breadth-first exploration of every state reachable from the initial one.

    States are numbered in discovery order and transitions are recorded in
    the canonical successor order, so the result is reproducible. With
    ``validate`` every new state is passed through ``check_state``.

    ``restrict(state, label)`` may veto transitions. The result is then a
    sub-graph of the full transition system: every path in it is a real
    execution, so safety violations found are genuine, but their absence
    proves nothing.
    """
    cfg.validate()
    lts = Lts(cfg)
    init = initial_state(cfg)
    if validate:
        check_state(init, cfg)
    key0 = lts._key(init)
    lts.keys.append(key0)
    lts._state_ids[key0] = 0
    keys, ids = lts.keys, lts._state_ids
    src_append, lab_append, dst_append = lts.src.append, lts.lab.append, lts.dst.append
    label_id = lts._label_id
    i = 0
    while i < len(keys):
        state = lts.state(i)
        for label, succ in successors(state, cfg):
            if restrict is not None and not restrict(state, label):
                continue
            key = lts._key(succ)
            j = ids.get(key)
            if j is None:
                if max_states is not None and len(keys) >= max_states:
                    raise StateLimitExceeded(max_states, lts, len(keys) - i)
                if validate:
                    check_state(succ, cfg)
                j = ids[key] = len(keys)
                keys.append(key)
            src_append(i)
            lab_append(label_id(label))
            dst_append(j)
        i += 1
        if i % 200_000 == 0:
            log.info("expanded %d states, %d known, %d transitions", i, len(keys), len(lts.src))
    lts.complete = True
    return lts


def export_aut(lts: Lts, sink: IO[bytes]) -> None:
    """Write ``lts`` in Aldebaran format."""
    rendered = [l.render().encode("ascii") for l in lts.labels]
    sink.write(b"des (%d, %d, %d)\n" % (lts.initial, lts.num_transitions, lts.num_states))
    buf = []
    for s, l, t in zip(lts.src, lts.lab, lts.dst):
        buf.append(b'(%d,"%s",%d)\n' % (s, rendered[l], t))
        if len(buf) >= 8192:
            sink.write(b"".join(buf))
            buf.clear()
    sink.write(b"".join(buf))
