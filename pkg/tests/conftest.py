import sys
import random
from datetime import datetime, timedelta, timezone

import pytest

from sgscope.graph import HC, EdgeKind, NodeKind, PropertyGraph
from sgscope.ingest import PostRecord

T0 = datetime(2021, 1, 6, 12, 0, tzinfo=timezone.utc)


def homog(n, edges, prefix="h"):
    """Hashtag nodes 0..n-1 joined by HC edges: a plain undirected graph."""
    g = PropertyGraph()
    for i in range(n):
        g.add_node(NodeKind.HASHTAG, {"text": f"{prefix}{i}"}, node_id=f"{prefix}{i}")
    for i, j in edges:
        if i != j:
            g.add_edge(f"{prefix}{i}", f"{prefix}{j}", EdgeKind.COMPUTED, {"count": 1}, label=HC)
    return g


def gnp_edges(n, p, rng):
    return [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]


def rec(pid, author="u1", minutes=0, **kw):
    return PostRecord(post_id=pid, author_id=author, created_at=T0 + timedelta(minutes=minutes), **kw)


@pytest.fixture
def rng():
    return random.Random(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
