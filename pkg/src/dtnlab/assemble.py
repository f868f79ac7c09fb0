"""P1 finite element assembly with gamma0 dofs eliminated.

Builds the energy-form matrix A, the (consistent) domain mass matrix M
and the gamma1 boundary mass matrix B on the free degrees of freedom.
Free dofs are the mesh vertices not constrained by the boundary
partition, numbered in vertex order.  Variable coefficients are sampled
with the edge-midpoint triangle rule (order 2, exact for quadratics);
boundary edge integration is exact for the P1 product, with an optional
lumped (trapezoid) variant used by the semigroup positivity studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coeffs import CoefficientSet, certify, quadrature_points, _sample_fields
from .errors import EmptyInteriorError

__all__ = [
    "AssembledSystem",
    "assemble",
    "robin_matrix",
    "dirichlet_system",
    "lumped_boundary_weights",
    "transported_form_value",
    "dump_matrix",
]

_MAT_HEADER = "DTNLAB-MAT v1"

# P1 hat values at the edge-midpoint quadrature nodes (m01, m12, m20):
# row = basis function, column = node
_HATS_AT_MIDPOINTS = np.array([
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
])


@dataclass
class AssembledSystem:
    """Matrices on the free dofs plus the dof bookkeeping.

    dof_map sends a vertex index to its free-dof index, or -1 when the
    vertex is constrained.  boundary_dofs are the free dofs sitting on
    gamma1; interior_dofs is the complement.
    """

    A: sp.csr_matrix
    M: sp.csr_matrix
    B: sp.csr_matrix
    dof_map: np.ndarray
    free_vertices: np.ndarray
    boundary_dofs: np.ndarray
    interior_dofs: np.ndarray
    quadrature_order: int
    lumped_boundary: bool
    mesh: object
    part: object
    coeffs: CoefficientSet

    @property
    def n_free(self):
        return len(self.free_vertices)

    @property
    def boundary_dof_vertices(self):
        """Mesh vertex index of each gamma1 boundary dof."""
        return self.free_vertices[self.boundary_dofs]


def _triangle_geometry(mesh):
    """Vertex coords (nt,3,2), areas (nt,), hat gradients (nt,3,2)."""
    v = mesh.vertices[mesh.triangles]
    a, b, c = v[:, 0], v[:, 1], v[:, 2]
    det = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
           - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    area = 0.5 * det
    grads = np.empty((len(v), 3, 2))
    grads[:, 0, 0] = b[:, 1] - c[:, 1]
    grads[:, 0, 1] = c[:, 0] - b[:, 0]
    grads[:, 1, 0] = c[:, 1] - a[:, 1]
    grads[:, 1, 1] = a[:, 0] - c[:, 0]
    grads[:, 2, 0] = a[:, 1] - b[:, 1]
    grads[:, 2, 1] = b[:, 0] - a[:, 0]
    grads /= det[:, None, None]
    return v, area, grads


def assemble(mesh, part, c: CoefficientSet, lump_boundary_mass=False,
             sample_mesh=None, mass_weight=None) -> AssembledSystem:
    """Assemble A, M and B for a mesh, partition and coefficient set.

    The entry A[i, j] is the energy form applied to (trial hat j,
    test hat i).  When sample_mesh is given (same topology), coefficient
    values are taken at the quadrature nodes of that mesh instead; this
    is the transport hook used by gauge experiments, where the geometry
    mesh is the image of the sample mesh under a boundary-fixed map.
    mass_weight (a scalar field, sampled like the coefficients) weights
    the domain mass form; transported systems use the reciprocal
    Jacobian determinant so that their spectral-parameter family stays
    comparable with the untransported one.
    """
    if c.eta is None:
        certify(c, sample_mesh if sample_mesh is not None else mesh)

    nv = mesh.num_vertices
    constrained = np.zeros(nv, dtype=bool)
    constrained[part.constrained_vertices] = True
    dof_map = np.full(nv, -1, dtype=np.int64)
    free_vertices = np.flatnonzero(~constrained)
    dof_map[free_vertices] = np.arange(len(free_vertices))
    n = len(free_vertices)

    coeff_mesh = mesh if sample_mesh is None else sample_mesh
    if sample_mesh is not None and (
            sample_mesh.num_triangles != mesh.num_triangles
            or sample_mesh.num_vertices != mesh.num_vertices):
        raise ValueError("sample_mesh must share the mesh topology")
    pts, _ = quadrature_points(coeff_mesh)
    a_q, drift_q, codrift_q, a0_q = _sample_fields(c, pts[..., 0], pts[..., 1])

    _, area, grads = _triangle_geometry(mesh)
    w = area[:, None] / 3.0                          # (nt, 3) weights
    P = _HATS_AT_MIDPOINTS

    # mean matrix coefficient per triangle, quadrature-weighted
    abar = np.einsum("q,klTq->Tkl", np.ones(3), a_q) * (area[:, None, None] / 3.0)
    # stiffness: sum_kl abar_kl g_trial[k] g_test[l]
    K_el = np.einsum("Tjk,Tkl,Til->Tij", grads, abar, grads)

    # drift (a_k d_k trial, test) and codrift (trial, ak_k d_k test)
    drift_dot = np.einsum("kTq,Tjk->Tjq", drift_q, grads)     # (nt, trial, q)
    D_el = np.einsum("Tq,Tjq,iq->Tij", w, drift_dot, P)
    codrift_dot = np.einsum("kTq,Tik->Tiq", codrift_q, grads)  # (nt, test, q)
    C_el = np.einsum("Tq,Tiq,jq->Tij", w, codrift_dot, P)

    # potential and (possibly weighted) mass
    V_el = np.einsum("Tq,iq,jq->Tij", w * a0_q, P, P)
    if mass_weight is None:
        M_el = np.einsum("Tq,iq,jq->Tij", w, P, P)
    else:
        rho = mass_weight.eval_batch(pts[..., 0], pts[..., 1])
        M_el = np.einsum("Tq,iq,jq->Tij", w * rho, P, P)

    A_el = K_el + D_el + C_el + V_el

    tri_dofs = dof_map[mesh.triangles]                # (nt, 3)
    rows = np.repeat(tri_dofs, 3, axis=1).ravel()     # test index i (slow)
    cols = np.tile(tri_dofs, (1, 3)).ravel()          # trial index j (fast)
    keep = (rows >= 0) & (cols >= 0)
    ij = (rows[keep], cols[keep])
    A_vals = A_el.ravel()[keep]
    M_vals = M_el.ravel()[keep]
    A = sp.coo_matrix((A_vals, ij), shape=(n, n)).tocsr()
    M = sp.coo_matrix((M_vals, ij), shape=(n, n)).tocsr()

    # gamma1 boundary mass
    b_rows, b_cols, b_vals = [], [], []
    lengths = mesh.edge_lengths()
    for e in part.gamma1_edges:
        va, vb = mesh.boundary_edges[e]
        L = lengths[e]
        da, db = dof_map[va], dof_map[vb]
        if lump_boundary_mass:
            for d in (da, db):
                if d >= 0:
                    b_rows.append(d)
                    b_cols.append(d)
                    b_vals.append(L / 2.0)
        else:
            block = L / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
            for ii, d1 in enumerate((da, db)):
                for jj, d2 in enumerate((da, db)):
                    if d1 >= 0 and d2 >= 0:
                        b_rows.append(d1)
                        b_cols.append(d2)
                        b_vals.append(block[ii, jj])
    B = sp.coo_matrix((b_vals, (b_rows, b_cols)), shape=(n, n)).tocsr()

    gamma1_vertices = (np.unique(mesh.boundary_edges[part.gamma1_edges])
                       if len(part.gamma1_edges) else np.array([], dtype=np.int64))
    boundary_dofs = np.sort(dof_map[gamma1_vertices])
    boundary_dofs = boundary_dofs[boundary_dofs >= 0]
    interior_mask = np.ones(n, dtype=bool)
    interior_mask[boundary_dofs] = False
    interior_dofs = np.flatnonzero(interior_mask)

    return AssembledSystem(
        A=A, M=M, B=B, dof_map=dof_map, free_vertices=free_vertices,
        boundary_dofs=boundary_dofs, interior_dofs=interior_dofs,
        quadrature_order=2, lumped_boundary=bool(lump_boundary_mass),
        mesh=mesh, part=part, coeffs=c,
    )


def robin_matrix(sys: AssembledSystem, mu: float):
    """The Robin form matrix A - mu*B."""
    return (sys.A - mu * sys.B).tocsr()


def dirichlet_system(sys: AssembledSystem):
    """Restriction (A_D, M_D) to the interior dofs.

    Raises EmptyInteriorError when every free dof sits on the boundary.
    """
    idx = sys.interior_dofs
    if len(idx) == 0:
        raise EmptyInteriorError("no interior dofs (mesh too coarse)")
    A_D = sys.A[idx, :][:, idx].tocsr()
    M_D = sys.M[idx, :][:, idx].tocsr()
    return A_D, M_D


def lumped_boundary_weights(sys: AssembledSystem):
    """Diagonal (trapezoid) gamma1 boundary weights on the free dofs."""
    w = np.zeros(sys.n_free)
    lengths = sys.mesh.edge_lengths()
    for e in sys.part.gamma1_edges:
        va, vb = sys.mesh.boundary_edges[e]
        for vtx in (va, vb):
            d = sys.dof_map[vtx]
            if d >= 0:
                w[d] += lengths[e] / 2.0
    return w


def transported_form_value(mesh, part, c: CoefficientSet, phi, u, v,
                           lam: float = 0.0) -> float:
    """Quadrature value of the transported energy form at P1 functions.

    Computes, for the coefficient set transported by phi (pullback
    fields sampled at reference nodes, gradients mapped by the inverse
    transposed Jacobian, measure weighted by det), the value of the
    transported form at (u composed with the inverse map, same for v),
    minus lam times the transported mass term.  By the change of
    variables identity this equals the plain form value of (u, v) for
    the original coefficients up to roundoff, which is what the
    pullback tests verify.  u and v are free-dof vectors.
    """
    from .coeffs import pullback

    b = pullback(c, phi)
    nv = mesh.num_vertices
    constrained = np.zeros(nv, dtype=bool)
    constrained[part.constrained_vertices] = True
    dof_map = np.full(nv, -1, dtype=np.int64)
    free = np.flatnonzero(~constrained)
    dof_map[free] = np.arange(len(free))

    u_vert = np.zeros(nv)
    v_vert = np.zeros(nv)
    u_vert[free] = u
    v_vert[free] = v

    pts, _ = quadrature_points(mesh)
    xs, ys = pts[..., 0], pts[..., 1]
    J, det = phi.jacobian_batch(xs, ys)
    g_q, bdrift_q, bcodrift_q, b0_q = _sample_fields(b, xs, ys)

    _, area, grads = _triangle_geometry(mesh)
    w = area[:, None] / 3.0
    P = _HATS_AT_MIDPOINTS

    tri = mesh.triangles
    gu = np.einsum("Ti,Tik->Tk", u_vert[tri], grads)   # constant per triangle
    gv = np.einsum("Ti,Tik->Tk", v_vert[tri], grads)
    uq = np.einsum("Ti,iq->Tq", u_vert[tri], P)
    vq = np.einsum("Ti,iq->Tq", v_vert[tri], P)

    Jinv = np.linalg.inv(J)                             # (nt, 3, 2, 2)
    Gu = np.einsum("Tqlk,Tl->Tqk", Jinv, gu)            # J^{-T} grad u
    Gv = np.einsum("Tqlk,Tl->Tqk", Jinv, gv)

    gmat = np.moveaxis(g_q, (0, 1), (-2, -1))           # (nt, 3, 2, 2)
    principal = np.einsum("Tqk,Tqkl,Tql->Tq", Gu, gmat, Gv)
    drift_term = np.einsum("kTq,Tqk->Tq", bdrift_q, Gu) * vq
    codrift_term = np.einsum("kTq,Tqk->Tq", bcodrift_q, Gv) * uq
    potential = (b0_q - lam / det) * uq * vq

    integrand = det * (principal + drift_term + codrift_term + potential)
    return float(np.sum(w * integrand))


def dump_matrix(path, mat, extra_header_lines=()):
    """Write a matrix in coordinate text form (DTNLAB-MAT v1).

    Entries are emitted row-major with full float precision, so dumps
    are deterministic and diffable.
    """
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as f:
        f.write(_MAT_HEADER + "\n")
        for line in extra_header_lines:
            f.write(f"# {line}\n")
        f.write(f"shape {coo.shape[0]} {coo.shape[1]} nnz {coo.nnz}\n")
        for k in order:
            f.write(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}\n")


def load_matrix(path):
    """Read the DTNLAB-MAT v1 coordinate text format."""
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != _MAT_HEADER:
        raise ValueError(f"bad matrix header (expected {_MAT_HEADER!r})")
    pos = 1
    while lines[pos].startswith("#"):
        pos += 1
    tag, nr, nc, _tag2, nnz = lines[pos].split()
    if tag != "shape":
        raise ValueError("missing shape line")
    pos += 1
    rows, cols, vals = [], [], []
    for ln in lines[pos:pos + int(nnz)]:
        r, cc, val = ln.split()
        rows.append(int(r))
        cols.append(int(cc))
        vals.append(float(val))
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(int(nr), int(nc))).tocsr()
