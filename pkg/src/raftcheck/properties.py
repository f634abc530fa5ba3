"""Safety and liveness checks over an explored transition system.

The four safety properties share one shape: whenever an observation with
value ``v`` is made, every state reachable from that point satisfies
``follow(v, state)``. ``check_leads_to`` decides that for all values at once
by propagating bitmasks of "values triggered so far" forward through the
graph to a fixed point, then testing each state against the values it can
have been reached under.

The liveness checks ask for a witness path. They run a breadth-first search
over pairs (state, marking) where markings record which observations have
been seen along the way, so every witness is a shortest one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Optional

from .core import Config, prefix
from .explorer import AdvanceCommitIndex, Lts, Observation


@dataclass
class Path:
    """A walk from the initial state: ``states[k] --labels[k]--> states[k+1]``."""

    states: list
    labels: list
    # position in ``states`` of each marked observation (the trigger point of
    # a counterexample, the marks of a witness)
    marks: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    def rendered(self) -> list:
        return [label.render() for label in self.labels]


@dataclass
class Verdict:
    name: str
    holds: bool
    counterexample: Optional[Path] = None
    witness: Optional[Path] = None
    detail: str = ""

    @property
    def path(self) -> Optional[Path]:
        return self.counterexample or self.witness


# ---------------------------------------------------------------- engine


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _reachable(lts: Lts) -> bytearray:
    offsets, _, targets = lts.csr()
    seen = bytearray(lts.num_states)
    seen[lts.initial] = 1
    stack = [lts.initial]
    while stack:
        s = stack.pop()
        for k in range(offsets[s], offsets[s + 1]):
            t = targets[k]
            if not seen[t]:
                seen[t] = 1
                stack.append(t)
    return seen


def _propagate(lts: Lts, start: list) -> list:
    """Least fixed point of ``mask[t] |= mask[s]`` over all transitions ``s -> t``."""
    offsets, _, targets = lts.csr()
    mask = list(start)
    work = deque(i for i, m in enumerate(mask) if m)
    queued = [bool(m) for m in mask]
    while work:
        s = work.popleft()
        queued[s] = False
        m = mask[s]
        for k in range(offsets[s], offsets[s + 1]):
            t = targets[k]
            old = mask[t]
            if old | m != old:
                mask[t] = old | m
                if not queued[t]:
                    queued[t] = True
                    work.append(t)
    return mask


def check_leads_to(
    lts: Lts,
    follow: Callable[[Hashable, Observation], bool],
    trigger: Optional[Callable[[Observation], Iterable[Hashable]]] = None,
    transition_trigger: Optional[Callable[[object], Iterable[Hashable]]] = None,
    name: str = "leads-to",
) -> Verdict:
    """Check that every state reachable from a trigger satisfies ``follow``.

    ``trigger`` yields values observed at a state (the state itself is then
    the first one checked); ``transition_trigger`` yields values carried by a
    transition label (checking starts at the transition's target).
    """
    n = lts.num_states
    values: dict = {}

    def bit(v):
        b = values.get(v)
        if b is None:
            b = values[v] = len(values)
        return 1 << b

    # triggers the initial state cannot reach do not count
    live = _reachable(lts)
    start = [0] * n
    if trigger is not None:
        per_nodes: dict = {}
        for i in range(n):
            if not live[i]:
                continue
            key = lts.nodes_key(i)
            m = per_nodes.get(key)
            if m is None:
                m = 0
                for v in trigger(lts.observation(i)):
                    m |= bit(v)
                per_nodes[key] = m
            start[i] = m
    if transition_trigger is not None:
        per_label = []
        for label in lts.labels:
            m = 0
            for v in transition_trigger(label):
                m |= bit(v)
            per_label.append(m)
        for s, l, t in zip(lts.src, lts.lab, lts.dst):
            if live[s]:
                start[t] |= per_label[l]

    if not any(start):
        return Verdict(name, True, detail="vacuous: trigger never fires")

    mask = _propagate(lts, start)
    by_bit = {b: v for v, b in values.items()}
    memo: dict = {}
    for i in range(n):
        m = mask[i]
        if not m:
            continue
        key = (m, lts.nodes_key(i))
        bad = memo.get(key)
        if bad is None:
            bad = -1
            obs = lts.observation(i)
            for b in _bits(m):
                if not follow(by_bit[b], obs):
                    bad = b
                    break
            memo[key] = bad
        if bad >= 0:
            value = by_bit[bad]
            path = _counterexample(lts, value, follow, trigger, transition_trigger)
            return Verdict(name, False, counterexample=path, detail=f"violated for {value!r}")
    return Verdict(name, True, detail=f"{len(values)} trigger values")


def _counterexample(lts, value, follow, trigger, transition_trigger) -> Path:
    """Shortest walk initial -> trigger of ``value`` -> state violating ``follow``."""
    offsets, labs, targets = lts.csr()
    parent = {(lts.initial, 0): None}
    queue = deque([(lts.initial, 0)])

    def fired_here(i):
        return trigger is not None and value in set(trigger(lts.observation(i)))

    label_fires = {}

    def fired_by(l):
        f = label_fires.get(l)
        if f is None:
            f = label_fires[l] = transition_trigger is not None and value in set(
                transition_trigger(lts.labels[l])
            )
        return f

    goal = None
    while queue:
        node = queue.popleft()
        s, phase = node
        if phase == 1 and not follow(value, lts.observation(s)):
            goal = node
            break
        if phase == 0 and fired_here(s) and (s, 1) not in parent:
            parent[(s, 1)] = (node, None)
            queue.appendleft((s, 1))
        for k in range(offsets[s], offsets[s + 1]):
            t = targets[k]
            nxt_phase = 1 if phase == 1 or fired_by(labs[k]) else 0
            nxt = (t, nxt_phase)
            if nxt not in parent:
                parent[nxt] = (node, labs[k])
                queue.append(nxt)
    if goal is None:
        raise AssertionError(f"no counterexample path for {value!r}")
    return _unwind(lts, parent, goal, lambda a, b: a[1] != b[1])


def _unwind(lts, parent, goal, is_mark) -> Path:
    chain = []
    node = goal
    while parent[node] is not None:
        prev, lab = parent[node]
        chain.append((prev, lab, node))
        node = prev
    chain.reverse()
    states = [lts.initial]
    labels = []
    marks = []
    for prev, lab, node in chain:
        if is_mark(prev, node):
            marks.append(len(states) - 1 if lab is None else len(states))
        if lab is not None:
            labels.append(lts.labels[lab])
            states.append(node[0])
    return Path(states, labels, marks)


def _search(lts: Lts, start, marks, goal) -> Optional[Path]:
    """Shortest path over (state, phase) pairs.

    ``marks(phase, obs)`` yields phases reachable by marking observations at
    the current state without moving; ``goal(phase, obs)`` ends the search.
    """
    offsets, labs, targets = lts.csr()
    root = (lts.initial, start)
    parent = {root: None}
    queue = deque([root])
    while queue:
        node = queue.popleft()
        s, phase = node
        obs = lts.observation(s)
        if goal(phase, obs):
            return _unwind(lts, parent, node, lambda a, b: a[1] != b[1] and a[0] == b[0])
        for nxt_phase in marks(phase, obs):
            nxt = (s, nxt_phase)
            if nxt not in parent:
                parent[nxt] = (node, None)
                queue.appendleft(nxt)
        for k in range(offsets[s], offsets[s + 1]):
            nxt = (targets[k], phase)
            if nxt not in parent:
                parent[nxt] = (node, labs[k])
                queue.append(nxt)
    return None


# ---------------------------------------------------------------- safety


def check_election_safety(lts: Lts) -> Verdict:
    def trigger(obs):
        return obs.leaders

    def follow(v, obs):
        id1, term = v
        return all(not (t == term and i != id1) for i, t in obs.leaders)

    return check_leads_to(lts, follow, trigger=trigger, name="election-safety")


def _log_matching_ok(log1, log2) -> bool:
    for index in range(min(len(log1), len(log2))):
        if log1[index] == log2[index] and log1[: index + 1] != log2[: index + 1]:
            return False
    return True


def check_log_matching(lts: Lts) -> Verdict:
    def trigger(obs):
        return [(i, log) for i, _, _, log in obs.logs if log]

    def follow(v, obs):
        id1, log1 = v
        return all(_log_matching_ok(log1, log2) for i, _, _, log2 in obs.logs if i != id1 and log2)

    return check_leads_to(lts, follow, trigger=trigger, name="log-matching")


def check_leader_completeness(lts: Lts) -> Verdict:
    def transition_trigger(label):
        if isinstance(label, AdvanceCommitIndex):
            info = label.info
            yield (info.term, info.log[info.oldCommitIndex : info.newCommitIndex])

    def follow(v, obs):
        term1, committed = v
        return all(
            all(entry in log2 for entry in committed)
            for term2, log2 in obs.leaderLogs
            if term2 > term1
        )

    return check_leads_to(
        lts, follow, transition_trigger=transition_trigger, name="leader-completeness"
    )


def check_state_machine_safety(lts: Lts) -> Verdict:
    def trigger(obs):
        return [(i, c, prefix(log, c)) for i, _, c, log in obs.logs if c > 0]

    def follow(v, obs):
        id1, c1, committed = v
        return all(
            prefix(log2, c1) == committed for i, _, c2, log2 in obs.logs if i != id1 and c2 >= c1
        )

    return check_leads_to(lts, follow, trigger=trigger, name="state-machine-safety")


# ---------------------------------------------------------------- liveness


def _alternation(lts: Lts, marks_needed: int, name: str) -> Verdict:
    # phase = (last marked leader id or None, marks so far)
    def marks(phase, obs):
        last, count = phase
        if count >= marks_needed:
            return ()
        return [(i, count + 1) for i, _ in obs.leaders if i != last]

    def goal(phase, obs):
        return phase[1] >= marks_needed

    path = _search(lts, (None, 0), marks, goal)
    if path is None:
        return Verdict(name, False, detail="no witness")
    return Verdict(name, True, witness=path)


def check_leader_liveness(lts: Lts) -> Verdict:
    return _alternation(lts, 1, "leader-liveness")


def check_distinct_leaders(lts: Lts) -> Verdict:
    return _alternation(lts, 2, "distinct-leaders")


def check_leader_alternation(lts: Lts, cfg: Config) -> Verdict:
    return _alternation(lts, cfg.maxTerm, "leader-alternation")


def check_sms_non_vacuity(lts: Lts) -> Verdict:
    def marks(phase, obs):
        if phase is not None:
            return ()
        return [(i, c) for i, _, c, _ in obs.logs if c > 0]

    def goal(phase, obs):
        if phase is None:
            return False
        id1, c1 = phase
        return any(i != id1 and c2 >= c1 for i, _, c2, _ in obs.logs)

    path = _search(lts, None, marks, goal)
    if path is None:
        return Verdict("sms-non-vacuity", False, detail="no witness")
    return Verdict("sms-non-vacuity", True, witness=path)


SAFETY = {
    "election-safety": check_election_safety,
    "log-matching": check_log_matching,
    "leader-completeness": check_leader_completeness,
    "state-machine-safety": check_state_machine_safety,
}

LIVENESS = {
    "leader-liveness": check_leader_liveness,
    "distinct-leaders": check_distinct_leaders,
    "leader-alternation": check_leader_alternation,
    "sms-non-vacuity": check_sms_non_vacuity,
}

CHECKS = [*SAFETY, *LIVENESS]


def run_check(name: str, lts: Lts) -> Verdict:
    if name in SAFETY:
        return SAFETY[name](lts)
    if name == "leader-alternation":
        return check_leader_alternation(lts, lts.cfg)
    return LIVENESS[name](lts)


def replay(lts: Lts, path: Path, successors) -> bool:
    """True iff every step of ``path`` is a transition produced by ``successors``."""
    if not path.states or path.states[0] != lts.initial:
        return False
    for k, label in enumerate(path.labels):
        here = lts.state(path.states[k])
        there = lts.state(path.states[k + 1])
        if (label, there) not in successors(here, lts.cfg):
            return False
    return True
