"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line, bypassing pytest's output
capture. Run standalone with ``python3 tests/test_acceptance.py`` or through
pytest.

The large configurations take a few minutes and a couple of GB of memory;
explored graphs are cached for the duration of the module and dropped as
soon as the last criterion needing them has run.
"""

import gc
import hashlib
import io
import json
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracle_n1  # noqa: E402
from mutants import MUTANTS  # noqa: E402
from toy_lts import naive_leads_to, random_lts  # noqa: E402

from raftcheck import cli, core  # noqa: E402
from raftcheck import properties as P  # noqa: E402
from raftcheck.core import Config  # noqa: E402
from raftcheck.explorer import LOSE, StateLimitExceeded, explore, export_aut, successors  # noqa: E402

ROW1 = Config(3, 2, 1, 3)
ROW2 = Config(3, 1, 2, 3)
ROW4 = Config(3, 2, 1, 3, crashesEnabled=True)
N1 = Config(1, 1, 1, 1)
REFERENCE_ROW1_STATES = 2.14e5

_cache = {}


def lts_for(cfg):
    if cfg not in _cache:
        _cache[cfg] = explore(cfg)
    return _cache[cfg]


def drop(*cfgs):
    for cfg in cfgs:
        _cache.pop(cfg, None)
    gc.collect()


_capture = None


@pytest.fixture(autouse=True)
def _uncaptured(request):
    global _capture
    _capture = request.config.pluginmanager.getplugin("capturemanager")
    yield
    _capture = None


def report(number, ok, text):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}"
    if _capture is not None:
        with _capture.global_and_fixture_disabled():
            print(f"\n{line}", flush=True)
    else:
        print(line, flush=True)
    return ok


def row_name(cfg):
    return {ROW1: "row1", ROW2: "row2", ROW4: "row4"}[cfg]


# ---------------------------------------------------------------- 1


def test_criterion_1_safety_suite():
    results = {}
    times = {}
    for cfg in (ROW1, ROW2, ROW4):
        started = time.perf_counter()
        lts = lts_for(cfg)
        results[row_name(cfg)] = {name: P.run_check(name, lts).holds for name in P.SAFETY}
        times[row_name(cfg)] = time.perf_counter() - started
    ok = all(all(r.values()) for r in results.values()) and times["row1"] < 120
    failing = [f"{row}:{name}" for row, r in results.items() for name, h in r.items() if not h]
    summary = ", ".join(f"{row} {t:.0f}s" for row, t in times.items())
    assert report(1, ok, f"4 safety checks on rows 1, 2, 4 ({summary}) {failing or 'all hold'}")


# ---------------------------------------------------------------- 2


def test_criterion_2_liveness_suite():
    want = {
        ROW1: {"leader-liveness": True, "distinct-leaders": False, "leader-alternation": True,
               "sms-non-vacuity": True},
        ROW2: {"leader-liveness": True, "distinct-leaders": True, "leader-alternation": True},
        ROW4: {"leader-liveness": True, "distinct-leaders": False, "leader-alternation": True,
               "sms-non-vacuity": True},
    }
    wrong = []
    for cfg, expected in want.items():
        lts = lts_for(cfg)
        for name, holds in expected.items():
            v = P.run_check(name, lts)
            if v.holds != holds or (v.holds and not P.replay(lts, v.witness, successors)):
                wrong.append(f"{row_name(cfg)}:{name}")
    drop(ROW2)
    assert report(2, not wrong, f"liveness verdicts as expected {wrong or ''}".strip())


# ---------------------------------------------------------------- 6 (reuses rows 1 and 4)


def test_criterion_6_statistics():
    row1 = lts_for(ROW1).num_states
    row4 = lts_for(ROW4).num_states
    ratio = row1 / REFERENCE_ROW1_STATES
    growth = row4 / row1
    ok = 0.1 <= ratio <= 10 and growth >= 10
    drop(ROW1, ROW4)
    assert report(6, ok, f"row1 {row1} states ({ratio:.2f}x reference), crashes x{growth:.1f} ({row4})")


# ---------------------------------------------------------------- 3


def test_criterion_3_degenerate_oracle():
    lts = explore(N1)
    states = []
    for i in range(lts.num_states):
        s = lts.state(i)
        (n,) = s.nodes
        states.append((str(n.role), n.currentTerm, tuple(tuple(e) for e in n.log), n.commitIndex,
                       n.votedFor, n.voterLog, n.nextIndex, n.matchIndex, s.client))
    transitions = [(s, label.render(), t) for s, label, t in lts.transitions()]
    buf = io.BytesIO()
    export_aut(lts, buf)
    ok = (states == oracle_n1.STATES and transitions == oracle_n1.TRANSITIONS
          and buf.getvalue() == oracle_n1.AUT.encode())
    assert report(3, ok, f"N=1 LTS equals hand oracle ({len(states)} states, {len(transitions)} transitions)")


# ---------------------------------------------------------------- 4


def _instances():
    from raftcheck.core import prefix
    from raftcheck.explorer import AdvanceCommitIndex

    def lm_ok(l1, l2):
        return all(not (l1[k] == l2[k] and l1[: k + 1] != l2[: k + 1]) for k in range(min(len(l1), len(l2))))

    def lc_trig(label):
        if isinstance(label, AdvanceCommitIndex):
            i = label.info
            yield (i.term, i.log[i.oldCommitIndex:i.newCommitIndex])

    yield "election-safety", dict(trigger=lambda o: o.leaders), \
        lambda v, o: all(not (t == v[1] and i != v[0]) for i, t in o.leaders)
    yield "log-matching", dict(trigger=lambda o: [(i, l) for i, _, _, l in o.logs if l]), \
        lambda v, o: all(lm_ok(v[1], l2) for i, _, _, l2 in o.logs if i != v[0] and l2)
    yield "leader-completeness", dict(transition_trigger=lc_trig), \
        lambda v, o: all(e in l2 for t2, l2 in o.leaderLogs if t2 > v[0] for e in v[1])
    yield "state-machine-safety", dict(trigger=lambda o: [(i, c, prefix(l, c)) for i, _, c, l in o.logs if c > 0]), \
        lambda v, o: all(prefix(l2, v[1]) == v[2] for i, _, c2, l2 in o.logs if i != v[0] and c2 >= v[1])
    yield "term-monotone", dict(trigger=lambda o: [(i, t) for i, t, _, _ in o.logs]), \
        lambda v, o: all(t >= v[1] or i != v[0] for i, t, _, _ in o.logs)


def test_criterion_4_engine_oracle():
    graphs = [random_lts(seed) for seed in range(20)] + [explore(N1)]
    total = agree = 0
    for lts in graphs:
        for name, kw, follow in _instances():
            total += 1
            engine = P.check_leads_to(lts, follow, name=name, **kw).holds
            agree += engine == naive_leads_to(lts, follow, **kw)
            if name in P.SAFETY:
                total += 1
                agree += P.SAFETY[name](lts).holds == engine
    assert report(4, agree == total, f"engine agrees with naive oracle on {agree}/{total} instances")


# ---------------------------------------------------------------- 5


def test_criterion_5_mutants():
    caught = {}
    for name, (attr, fn, cfg, restrict, max_states) in MUTANTS.items():
        original = getattr(core, attr)
        setattr(core, attr, fn)
        try:
            try:
                lts = explore(cfg, max_states=max_states, restrict=restrict)
            except StateLimitExceeded as exc:
                lts = exc.partial
            hits = []
            for check, run in P.SAFETY.items():
                v = run(lts)
                if not v.holds and P.replay(lts, v.counterexample, successors):
                    hits.append(f"{check}({len(v.counterexample)} steps)")
            ok_cfg = cfg.maxTerm >= 2 and cfg.crashesEnabled
            caught[name] = hits if ok_cfg else []
        finally:
            setattr(core, attr, original)
            lts = None
            gc.collect()
    ok = all(caught.values())
    text = "; ".join(f"{n}: {', '.join(h) or 'not caught'}" for n, h in caught.items())
    assert report(5, ok, text)


# ---------------------------------------------------------------- 7


def _cli_outputs(tmp_path, tag):
    aut = tmp_path / f"{tag}.aut"
    rep = tmp_path / f"{tag}.json"
    code = cli.main(["--export-aut", str(aut), "--report", str(rep)])
    doc = json.loads(rep.read_text())
    doc.pop("wallClockSeconds")
    doc["artifacts"] = sorted(doc["artifacts"])
    return code, aut.read_bytes(), doc


def test_criterion_7_determinism(tmp_path, capsys):
    code1, aut1, doc1 = _cli_outputs(tmp_path, "first")
    code2, aut2, doc2 = _cli_outputs(tmp_path, "second")
    capsys.readouterr()
    ok = code1 == code2 == 0 and aut1 == aut2 and doc1 == doc2
    digest = hashlib.sha256(aut1).hexdigest()[:12]
    assert report(7, ok, f"two row1 runs give identical .aut (sha256 {digest}) and JSON verdicts")


# ---------------------------------------------------------------- 8


def test_criterion_8_lossy_gate():
    # The broadcast guard needs room for N messages, so with capacity < N no
    # vote request is ever sent and the network stays empty. Lose can only
    # be reachable once capacity >= N; those are the configurations gated.
    results = {}
    for n, cap in ((2, 2), (2, 3), (3, 3)):
        for lossy in (False, True):
            lts = explore(Config(n, 1, 1, cap, lossyNetwork=lossy))
            results[(n, cap, lossy)] = sum(1 for l in lts.lab if lts.labels[l] == LOSE)
    perfect = [v for (_, _, lossy), v in results.items() if not lossy]
    lossy = [v for (_, _, lossy), v in results.items() if lossy]
    ok = all(v == 0 for v in perfect) and all(v > 0 for v in lossy)
    assert report(8, ok, f"lose transitions: {sum(perfect)} when perfect, >= {min(lossy)} when lossy "
                         f"(N=2 cap 2-3, N=3 cap 3)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
