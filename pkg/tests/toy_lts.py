"""Hand-rolled transition systems and a brute-force leads-to oracle.

``ToyLts`` offers the read interface the property engine uses, so graphs of
any shape can be fed to it without going through the protocol model.
"""

import random
from array import array
from collections import deque

from raftcheck.core import CommitInfo, LogEntry
from raftcheck.explorer import AdvanceCommitIndex, Observation, Timeout


class ToyLts:
    initial = 0

    def __init__(self, observations, edges, labels=None):
        self.cfg = None
        self._obs = list(observations)
        self.labels = list(labels) if labels is not None else [Timeout(0)]
        self.src = array("i", [s for s, _, _ in edges])
        self.lab = array("i", [l for _, l, _ in edges])
        self.dst = array("i", [t for _, _, t in edges])

    @property
    def num_states(self):
        return len(self._obs)

    @property
    def num_transitions(self):
        return len(self.src)

    def observation(self, i):
        return self._obs[i]

    def nodes_key(self, i):
        return (i,)

    def csr(self):
        n = self.num_states
        order = sorted(range(len(self.src)), key=lambda k: self.src[k])
        offsets = [0] * (n + 1)
        for s in self.src:
            offsets[s + 1] += 1
        for i in range(n):
            offsets[i + 1] += offsets[i]
        return offsets, [self.lab[k] for k in order], [self.dst[k] for k in order]

    def successors(self, i):
        return [(self.labels[self.lab[k]], self.dst[k]) for k in range(len(self.src)) if self.src[k] == i]


def reachable(lts, start):
    seen = {start}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for k in range(lts.num_transitions):
            if lts.src[k] == s and lts.dst[k] not in seen:
                seen.add(lts.dst[k])
                queue.append(lts.dst[k])
    return seen


def naive_leads_to(lts, follow, trigger=None, transition_trigger=None):
    """Test every (trigger occurrence, reachable state) pair explicitly."""
    reach = {}

    def reach_from(i):
        if i not in reach:
            reach[i] = reachable(lts, i)
        return reach[i]

    occurrences = []
    for i in reach_from(lts.initial):
        if trigger is not None:
            occurrences += [(v, i) for v in trigger(lts.observation(i))]
        if transition_trigger is not None:
            for k in range(lts.num_transitions):
                if lts.src[k] == i:
                    occurrences += [(v, lts.dst[k]) for v in transition_trigger(lts.labels[lts.lab[k]])]
    for v, x in occurrences:
        for j in reach_from(x):
            if not follow(v, lts.observation(j)):
                return False
    return True


def is_walk(lts, path):
    if not path.states or path.states[0] != lts.initial:
        return False
    edges = {(s, lts.labels[l], t) for s, l, t in zip(lts.src, lts.lab, lts.dst)}
    return all(
        (path.states[k], path.labels[k], path.states[k + 1]) in edges for k in range(len(path.labels))
    )


def random_observation(rng, noise):
    """``noise`` in [0, 1] scales how often the observation breaks a protocol rule."""
    base = (LogEntry(1, 1), LogEntry(1, 2))
    k = rng.choice([0, 0, 1, 1, 2])
    terms = {rng.randrange(1, 3) for _ in range(k)}
    # without noise term t always belongs to node t - 1
    leaders = tuple(sorted((rng.randrange(3) if rng.random() < noise else t - 1, t) for t in terms))
    logs = []
    for i in range(3):
        if rng.random() < 0.2:
            continue
        if rng.random() < noise:
            log = tuple(LogEntry(rng.randrange(1, 3), rng.randrange(1, 3)) for _ in range(rng.randrange(3)))
        else:
            log = base[: rng.randrange(3)]
        commit = rng.randrange(len(log) + 1) if rng.random() < 0.3 else 0
        logs.append((i, rng.randrange(3), commit, log))
    leader_logs = tuple((t, rng.choice(logs)[3] if logs and rng.random() < noise else base) for _, t in leaders)
    return Observation(leaders, tuple(logs), leader_logs)


def random_lts(seed, max_states=200):
    rng = random.Random(seed)
    n = rng.randrange(1, max_states + 1)
    noise = rng.choice([0.0, 0.0, 0.01, 0.05, 0.3])
    obs = [random_observation(rng, noise) for _ in range(n)]
    labels = [Timeout(0), Timeout(1)]
    for _ in range(3):
        log = (LogEntry(1, 1), LogEntry(1 if rng.random() >= noise else 2, 2))
        labels.append(AdvanceCommitIndex(CommitInfo(0, rng.randrange(1, 3), rng.randrange(1, 3), log)))
    edges = []
    density = rng.choice([0.5, 1.0, 1.5, 3.0])
    for _ in range(int(n * density)):
        edges.append((rng.randrange(n), rng.randrange(len(labels)), rng.randrange(n)))
    # a spanning chain keeps most states reachable
    for i in range(1, n):
        if rng.random() < 0.7:
            edges.append((rng.randrange(i), 0, i))
    return ToyLts(obs, edges, labels)
