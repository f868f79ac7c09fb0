"""Mesh construction, refinement, partitions and serialization."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtnlab.errors import MeshInvariantError, PartitionError, PolygonError
from dtnlab.mesh import (
    build_polygon_mesh,
    build_structured_square,
    check_mesh,
    load_mesh,
    lshape_polygon,
    map_vertices,
    partition_boundary,
    polygon_edge_selector,
    quality,
    refine,
    refine_partition,
    regular_polygon,
    save_mesh,
    square_side_selector,
)


def test_structured_square_smallest():
    m = build_structured_square(1)
    assert m.num_vertices == 4
    assert m.num_triangles == 2
    assert m.h_max == pytest.approx(math.sqrt(2), abs=1e-15)


def test_structured_square_counts():
    m = build_structured_square(2)
    assert m.num_vertices == 9
    assert m.num_triangles == 8


def test_structured_square_nonobtuse():
    q = quality(build_structured_square(4))
    assert q.nonobtuse
    assert q.max_angle_deg <= 90.0 + 1e-9


def test_structured_square_rejects_zero():
    with pytest.raises(ValueError):
        build_structured_square(0)


def test_refine_counts_and_h():
    m = build_structured_square(1)
    r = refine(m)
    assert r.num_triangles == 8
    assert r.h_max == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    rr = refine(r)
    assert rr.num_triangles == 32


def test_refine_halves_h_exactly():
    m = build_structured_square(4)
    h0 = m.h_max
    for k in range(1, 4):
        m = refine(m)
        assert m.h_max == h0 / 2 ** k  # dyadic coordinates: exact halving


def test_refine_partition_preserves_gamma0_length():
    m = build_structured_square(2)
    part = partition_boundary(m, square_side_selector(["left"]))
    child = refine(m)
    cpart = refine_partition(part, child)
    parent_len = m.edge_lengths()[part.gamma0_edges].sum()
    child_len = child.edge_lengths()[cpart.gamma0_edges].sum()
    assert child_len == pytest.approx(parent_len, rel=1e-14)
    assert cpart.num_gamma0 == 2 * part.num_gamma0


def test_polygon_square_euler():
    m = build_polygon_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], 0.5)
    check_mesh(m)
    assert m.h_max <= 2 * 0.5
    edges = set()
    for t in m.triangles:
        for k in range(3):
            edges.add(frozenset((int(t[k]), int(t[(k + 1) % 3]))))
    assert m.num_vertices - len(edges) + m.num_triangles == 1


def test_polygon_16gon_valid():
    m = build_polygon_mesh(regular_polygon(16), 0.3)
    check_mesh(m)
    assert m.h_max <= 0.6


def test_polygon_lshape_corners_preserved():
    poly = lshape_polygon()
    m = build_polygon_mesh(poly, 0.25)
    check_mesh(m)
    assert m.h_max <= 0.5
    vset = {tuple(v) for v in np.round(m.vertices, 12)}
    for corner in poly:
        assert tuple(np.round(corner, 12)) in vset


def test_polygon_rejects_self_intersection():
    bowtie = [(0, 0), (1, 1), (1, 0), (0, 1)]
    with pytest.raises(PolygonError):
        build_polygon_mesh(bowtie, 0.5)


def test_polygon_rejects_too_few_vertices():
    with pytest.raises(PolygonError):
        build_polygon_mesh([(0, 0), (1, 0)], 0.5)


def test_partition_left_side_counts():
    m = build_structured_square(2)
    part = partition_boundary(m, square_side_selector(["left"]))
    assert part.num_gamma0 == 2
    assert len(part.constrained_vertices) == 3


def test_partition_empty():
    m = build_structured_square(2)
    part = partition_boundary(m, lambda x, y: False)
    assert part.num_gamma0 == 0
    assert len(part.constrained_vertices) == 0
    assert part.num_gamma1 == m.num_boundary_edges


def test_partition_all_gamma0_rejected():
    m = build_structured_square(2)
    with pytest.raises(PartitionError):
        partition_boundary(m, lambda x, y: True)


def test_interface_corners_constrained():
    # corners shared by a gamma0 and a gamma1 edge must be constrained
    m = build_structured_square(4)
    part = partition_boundary(m, square_side_selector(["left"]))
    corner_ids = [i for i, v in enumerate(m.vertices)
                  if tuple(v) in {(0.0, 0.0), (0.0, 1.0)}]
    for cid in corner_ids:
        assert cid in part.constrained_vertices


def test_polygon_edge_selector():
    poly = lshape_polygon()
    m = build_polygon_mesh(poly, 0.5)
    part = partition_boundary(m, polygon_edge_selector(poly, [0]))
    mids = 0.5 * (m.vertices[m.boundary_edges[:, 0]]
                  + m.vertices[m.boundary_edges[:, 1]])
    for e in part.gamma0_edges:
        assert mids[e][1] == pytest.approx(0.0, abs=1e-12)  # side 0 is y=0
    assert part.num_gamma0 > 0


def test_map_vertices_rejects_fold():
    m = build_structured_square(2)
    with pytest.raises(MeshInvariantError):
        map_vertices(m, lambda x, y: (-x, y))


def test_map_vertices_identity_keeps_everything():
    m = refine(build_structured_square(2))
    moved = map_vertices(m, lambda x, y: (x, y))
    assert np.array_equal(moved.vertices, m.vertices)
    assert np.array_equal(moved.boundary_edges, m.boundary_edges)
    assert np.array_equal(moved.boundary_parent, m.boundary_parent)


def test_serialization_roundtrip(tmp_path):
    m = build_structured_square(3)
    part = partition_boundary(m, square_side_selector(["left", "top"]))
    path = tmp_path / "mesh.txt"
    save_mesh(path, m, part)
    assert open(path).readline().strip() == "DTNLAB-MESH v1"
    m2, part2 = load_mesh(path)
    assert np.array_equal(m2.vertices, m.vertices)
    assert np.array_equal(m2.triangles, m.triangles)
    assert np.array_equal(np.sort(part2.gamma0_edges),
                          np.sort(part.gamma0_edges))
    assert np.array_equal(part2.constrained_vertices,
                          part.constrained_vertices)


def test_serialization_without_partition(tmp_path):
    m = build_structured_square(2)
    path = tmp_path / "mesh.txt"
    save_mesh(path, m)
    _m2, part2 = load_mesh(path)
    assert part2.num_gamma0 == 0


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=6))
def test_structured_square_invariants(n):
    m = build_structured_square(n)
    check_mesh(m)
    assert m.num_vertices == (n + 1) ** 2
    assert m.num_triangles == 2 * n * n
    assert m.h_max == pytest.approx(math.sqrt(2) / n, rel=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=3, max_value=12), st.integers(min_value=0, max_value=2))
def test_polygon_refinement_preserves_area(sides, extra_refines):
    poly = regular_polygon(sides)
    m = build_polygon_mesh(poly, 0.5)
    for _ in range(extra_refines):
        m = refine(m)
    check_mesh(m)
    v = m.vertices[m.triangles]
    area = 0.5 * np.abs(
        (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
        - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0])
    ).sum()
    exact = 0.5 * sides * math.sin(2 * math.pi / sides)
    assert area == pytest.approx(exact, rel=1e-12)
