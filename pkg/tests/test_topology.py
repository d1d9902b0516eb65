from collections import deque

import pytest

from sefarnoc.topology import (DIRECTIONS, MeshTopology, Port, TopologyError, code_port,
                               format_code, port_code)


def grid_bfs(w, h, src):
    """Hop distances on the full w x h grid, written without the topology class."""
    dist = {src: 0}
    q = deque([src])
    while q:
        n = q.popleft()
        x, y = n % w, n // w
        for nx, ny in ((x, y - 1), (x + 1, y), (x, y + 1), (x - 1, y)):
            if 0 <= nx < w and 0 <= ny < h and ny * w + nx not in dist:
                dist[ny * w + nx] = dist[n] + 1
                q.append(ny * w + nx)
    return dist


def test_port_codes():
    assert [format_code(port_code(p)) for p in Port] == ["000", "001", "010", "011", "100"]
    for p in Port:
        assert code_port(port_code(p)) is p
    for bad in (5, 6, 7):
        with pytest.raises(ValueError):
            code_port(bad)


def test_opposites_and_letters():
    assert Port.NORTH.opposite is Port.SOUTH
    assert Port.EAST.opposite is Port.WEST
    assert Port.from_letter("w") is Port.WEST
    assert "".join(p.letter for p in Port) == "LNESW"
    with pytest.raises(ValueError):
        Port.from_letter("x")


def test_row_major_numbering():
    t = MeshTopology(4, 4)
    assert t.coord(9) == (1, 2)
    assert t.index(1, 2) == 9
    assert t.neighbor(9, Port.EAST) == 10
    assert t.neighbor(9, Port.NORTH) == 5
    assert t.neighbor(9, Port.SOUTH) == 13
    assert t.neighbor(9, Port.WEST) == 8
    assert t.neighbor(0, Port.NORTH) is None
    assert t.neighbor(3, Port.EAST) is None
    with pytest.raises(TopologyError):
        t.neighbor(0, Port.LOCAL)
    with pytest.raises(TopologyError):
        t.coord(16)


def test_link_count():
    t = MeshTopology(8, 8)
    assert t.num_links() == 2 * 2 * 8 * 7
    assert all(t.neighbor(ln.src, ln.dir) == ln.dst for ln in t.iter_links())


def test_bad_dimensions():
    with pytest.raises(TopologyError):
        MeshTopology(1, 4)
    with pytest.raises(TopologyError):
        MeshTopology(4, 4, propagation_delay=-1)


def test_faults_are_directed_and_permanent():
    t = MeshTopology(4, 4)
    assert t.inject_fault(9, Port.EAST, 5)
    assert not t.inject_fault(9, Port.EAST, 7)
    assert not t.is_faulty(9, Port.EAST, 4)
    assert t.is_faulty(9, Port.EAST, 5)
    assert t.is_faulty(9, Port.EAST, 10_000)
    assert not t.is_faulty(10, Port.WEST)
    assert t.faulty_links() == [(9, Port.EAST)]
    with pytest.raises(TopologyError):
        t.inject_fault(3, Port.EAST)


def test_lsr_own_bits():
    t = MeshTopology(4, 4)
    t.inject_fault(9, Port.EAST)
    t.inject_fault(9, Port.NORTH)
    lsr = t.lsr(9, 0)
    assert lsr.own == (True, True, False, False)
    assert lsr.own_bits() == 0b1100


@pytest.mark.parametrize("node", [0, 9, 27, 63])
def test_lsr_coverage_matches_bfs_radius(node):
    t = MeshTopology(8, 8)
    dist = grid_bfs(8, 8, node)
    lsr = t.lsr(node)
    for other in range(64):
        assert lsr.covers(other) == (dist[other] <= 2)
        if dist[other] > 2:
            with pytest.raises(TopologyError):
                lsr.is_faulty(other, Port.EAST)
    hood = lsr.neighborhood
    assert {n for n, _ in hood} == {n for n, d in dist.items() if d <= 2}


def test_lsr_propagation_delay():
    t = MeshTopology(4, 4, propagation_delay=3)
    t.inject_fault(9, Port.EAST, 10)
    # owner sees it at once, a neighbor three cycles later
    assert t.lsr(9, 10).is_faulty(9, Port.EAST)
    assert not t.lsr(8, 12).is_faulty(9, Port.EAST)
    assert t.lsr(8, 13).is_faulty(9, Port.EAST)
    assert t.lsr(8).is_faulty(9, Port.EAST)
    snaps = t.propagate_link_status(11)
    assert [s.node for s in snaps] == list(range(16))


def test_healthy_reachability():
    t = MeshTopology(4, 4)
    for d in DIRECTIONS:
        if t.has_link(5, d):
            t.inject_fault(t.neighbor(5, d), d.opposite)
    # nobody can enter 5, but 5 can still leave
    for s in range(16):
        if s != 5:
            assert not t.healthy_graph_reachable(s)[5]
    assert all(t.healthy_graph_reachable(5))
