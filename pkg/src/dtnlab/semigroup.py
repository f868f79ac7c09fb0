"""Boundary semigroups generated by the negative D-t-N pair.

The generator is the generalized pair (S0, Bb) on the gamma1 dofs; the
semigroup value at time t is the spectral exponential built from the
full generalized eigendecomposition, so the semigroup law and the decay
bound hold to roundoff (no time-stepping error confounds the order
properties under test).  Vectors live on the full boundary vertex set;
evolution restricts to gamma1, applies the exponential and extends by
zero on gamma0.

Order properties (positivity, sub-Markov, domination, potential
monotonicity) are checked on meshes where the discrete theory can
mirror the continuum one: nonobtuse triangles and lumped boundary
mass.  Violations elsewhere are reported as warnings, not failures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assemble import AssembledSystem, lumped_boundary_weights
from .coeffs import quadrature_points, _sample_fields
from .dtn import dtn_matrix
from .errors import EmptyInteriorError, HypothesisViolationError
from .mesh import quality
from .spectral import dirichlet_spectrum, sym_geneig

__all__ = [
    "BoundarySemigroup",
    "build_semigroup",
    "evolve",
    "propagator",
    "positivity_report",
    "submarkov_report",
    "domination_report",
    "potential_monotonicity_report",
    "lp_contraction_report",
    "check_order_hypotheses",
    "OrderReport",
]

TOL_POS = 1e-8


@dataclass(frozen=True)
class BoundarySemigroup:
    """Eigendecomposition of the boundary generator plus dof bookkeeping."""

    S0: np.ndarray
    Bb: np.ndarray
    lumped: bool
    lam: float
    omega: np.ndarray              # generator eigenvalues, ascending
    modes: np.ndarray              # Bb-orthonormal columns
    full_boundary_vertices: np.ndarray
    gamma1_positions: np.ndarray   # index of each gamma1 dof in the full list
    sys: AssembledSystem

    @property
    def w0(self):
        """Decay rate: the smallest generator eigenvalue."""
        return float(self.omega[0])


@dataclass(frozen=True)
class OrderReport:
    """Outcome of an entrywise order check."""

    check: str
    min_entry: float
    max_entry: float
    violation: float
    verdict: str                   # PASS / WARN / FAIL
    rows: tuple                    # (check, t, trial, min, max, violation, verdict)


def build_semigroup(sys: AssembledSystem, lam: float = 0.0) -> BoundarySemigroup:
    """Diagonalize the boundary pair (S(lam), Bb restricted to gamma1)."""
    d = dtn_matrix(sys, lam)
    spec = sym_geneig(d.S, d.Bb, d.S.shape[0])
    full = sys.mesh.boundary_vertices()
    pos = {v: i for i, v in enumerate(full)}
    gamma1_positions = np.array([pos[v] for v in sys.boundary_dof_vertices],
                                dtype=np.int64)
    return BoundarySemigroup(
        S0=d.S, Bb=d.Bb, lumped=sys.lumped_boundary, lam=float(lam),
        omega=spec.eigenvalues, modes=spec.eigenvectors,
        full_boundary_vertices=full, gamma1_positions=gamma1_positions,
        sys=sys,
    )


def evolve(sg: BoundarySemigroup, phi0, t: float):
    """Apply the semigroup at time t to a full-boundary vector.

    Restricts to the gamma1 entries, applies the spectral exponential
    and extends by zero on gamma0.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    phi0 = np.asarray(phi0, dtype=float)
    n_full = len(sg.full_boundary_vertices)
    if phi0.shape != (n_full,):
        raise ValueError(f"phi0 must have length {n_full}")
    phi1 = phi0[sg.gamma1_positions]
    coef = sg.modes.T @ (sg.Bb @ phi1)
    out1 = sg.modes @ (np.exp(-t * sg.omega) * coef)
    out = np.zeros(n_full)
    out[sg.gamma1_positions] = out1
    return out


def propagator(sg: BoundarySemigroup, t: float):
    """Dense matrix of the semigroup on the gamma1 dofs."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return (sg.modes * np.exp(-t * sg.omega)) @ (sg.modes.T @ sg.Bb)


def check_order_hypotheses(sys: AssembledSystem,
                           require_nonneg_potential: bool = False,
                           require_zero_drift: bool = False) -> None:
    """Verify the standing assumptions of the order theorems.

    Symmetric coefficients, an accretive and invertible Dirichlet
    operator, and optionally a nonnegative potential and zero drift.
    Raises HypothesisViolationError otherwise.
    """
    c = sys.coeffs
    if not c.symmetric_flag:
        raise HypothesisViolationError("coefficient set is not symmetric")
    try:
        lam1 = float(dirichlet_spectrum(sys, 1).eigenvalues[0])
    except EmptyInteriorError:
        lam1 = None
    if lam1 is not None:
        scale = float(np.abs(sys.A).max())
        if lam1 < -1e-10 * scale:
            raise HypothesisViolationError(
                f"Dirichlet operator not accretive (smallest eigenvalue {lam1:.3e})"
            )
        if abs(lam1) <= 1e-10 * scale:
            raise HypothesisViolationError(
                "0 lies in the discrete Dirichlet spectrum"
            )
    pts, _ = quadrature_points(sys.mesh)
    _a, drift, _codrift, a0 = _sample_fields(c, pts[..., 0], pts[..., 1])
    if require_nonneg_potential and float(a0.min()) < -1e-12:
        raise HypothesisViolationError(
            f"potential must be nonnegative (min {float(a0.min()):.3e})"
        )
    if require_zero_drift and float(np.abs(drift).max()) > 1e-12:
        raise HypothesisViolationError("drift must vanish")


def _verdict(violation, tol, strict):
    if violation <= tol:
        return "PASS"
    return "FAIL" if strict else "WARN"


def _strict_config(sg: BoundarySemigroup) -> bool:
    # discrete maximum principles need nonobtuse triangles + lumped mass
    return sg.lumped and quality(sg.sys.mesh).nonobtuse


def positivity_report(sg: BoundarySemigroup, t_list, trials: int,
                      seed: int = 0) -> OrderReport:
    """Min entry of evolved nonnegative data over random trials.

    FAILs only on nonobtuse meshes with lumped boundary mass; other
    configurations log WARN (discrete positivity is mesh dependent).
    """
    check_order_hypotheses(sg.sys)
    rng = np.random.default_rng(seed)
    n_full = len(sg.full_boundary_vertices)
    strict = _strict_config(sg)
    rows = []
    worst_min = np.inf
    worst_max = -np.inf
    for trial in range(trials):
        phi = rng.uniform(0.0, 1.0, n_full)
        phi *= rng.uniform(0.0, 1.0, n_full) < 0.7  # vary the support
        if not phi.any():
            phi[rng.integers(n_full)] = 1.0
        tol = TOL_POS * float(phi.max())
        for t in t_list:
            out = evolve(sg, phi, t)
            mn = float(out.min())
            mx = float(out.max())
            violation = max(0.0, -mn)
            rows.append(("positivity", t, trial, mn, mx, violation,
                         _verdict(violation, tol, strict)))
            worst_min = min(worst_min, mn)
            worst_max = max(worst_max, mx)
    violation = max(0.0, -worst_min)
    return OrderReport("positivity", worst_min, worst_max, violation,
                       _verdict(violation, TOL_POS, strict), tuple(rows))


def submarkov_report(sg: BoundarySemigroup, t_list, trials: int,
                     seed: int = 0) -> OrderReport:
    """Entrywise containment in [0, 1] of evolved [0, 1]-valued data."""
    check_order_hypotheses(sg.sys, require_nonneg_potential=True,
                           require_zero_drift=True)
    rng = np.random.default_rng(seed)
    n_full = len(sg.full_boundary_vertices)
    strict = _strict_config(sg)
    rows = []
    worst_min = np.inf
    worst_max = -np.inf
    for trial in range(trials):
        phi = rng.uniform(0.0, 1.0, n_full)
        for t in t_list:
            out = evolve(sg, phi, t)
            mn = float(out.min())
            mx = float(out.max())
            violation = max(0.0, -mn, mx - 1.0)
            rows.append(("submarkov", t, trial, mn, mx, violation,
                         _verdict(violation, TOL_POS, strict)))
            worst_min = min(worst_min, mn)
            worst_max = max(worst_max, mx)
    violation = max(0.0, -worst_min, worst_max - 1.0)
    return OrderReport("submarkov", worst_min, worst_max, violation,
                       _verdict(violation, TOL_POS, strict), tuple(rows))


def _same_mesh(a: AssembledSystem, b: AssembledSystem) -> bool:
    return (a.mesh is b.mesh
            or (np.array_equal(a.mesh.vertices, b.mesh.vertices)
                and np.array_equal(a.mesh.triangles, b.mesh.triangles)))


def _same_fields(a: AssembledSystem, b: AssembledSystem,
                 matrix=True, potential=True) -> bool:
    pts, _ = quadrature_points(a.mesh)
    xs, ys = pts[..., 0], pts[..., 1]
    fa = _sample_fields(a.coeffs, xs, ys)
    fb = _sample_fields(b.coeffs, xs, ys)
    ok = np.allclose(fa[1], fb[1], atol=1e-12)   # drift
    if matrix:
        ok = ok and np.allclose(fa[0], fb[0], atol=1e-12)
    if potential:
        ok = ok and np.allclose(fa[3], fb[3], atol=1e-12)
    return ok


def domination_report(sysA: AssembledSystem, sysB: AssembledSystem,
                      t_list, trials: int, seed: int = 0,
                      lam: float = 0.0) -> OrderReport:
    """Entrywise comparison 0 <= T_B <= T_A for nested constraints.

    sysB must constrain at least the gamma0 edges of sysA (same mesh
    and coefficients); more Dirichlet boundary pushes the evolution
    down.
    """
    if not _same_mesh(sysA, sysB):
        raise ValueError("domination needs both systems on the same mesh")
    if not _same_fields(sysA, sysB):
        raise ValueError("domination needs identical coefficients")
    g0A = set(sysA.part.gamma0_edges.tolist())
    g0B = set(sysB.part.gamma0_edges.tolist())
    if not g0A.issubset(g0B):
        raise ValueError("partitions not nested: gamma0(A) must be "
                         "contained in gamma0(B)")
    check_order_hypotheses(sysA)
    check_order_hypotheses(sysB)
    sgA = build_semigroup(sysA, lam)
    sgB = build_semigroup(sysB, lam)
    rng = np.random.default_rng(seed)
    n_full = len(sgA.full_boundary_vertices)
    strict = _strict_config(sgA) and _strict_config(sgB)
    rows = []
    worst = 0.0
    for trial in range(trials):
        phi = rng.uniform(0.0, 1.0, n_full)
        for t in t_list:
            outA = evolve(sgA, phi, t)
            outB = evolve(sgB, phi, t)
            violation = max(0.0, float((outB - outA).max()),
                            float((-outB).max()))
            rows.append(("domination", t, trial, float(outB.min()),
                         float(outB.max()), violation,
                         _verdict(violation, TOL_POS, strict)))
            worst = max(worst, violation)
    return OrderReport("domination", 0.0, 0.0, worst,
                       _verdict(worst, TOL_POS, strict), tuple(rows))


def potential_monotonicity_report(sys_a: AssembledSystem,
                                  sys_b: AssembledSystem,
                                  t_list, trials: int, seed: int = 0,
                                  lam: float = 0.0) -> OrderReport:
    """Entrywise comparison 0 <= T^{b0} <= T^{a0} for ordered potentials.

    Both systems must share the mesh, partition, matrix coefficient and
    have zero drift; the potential of sys_b must dominate that of
    sys_a at the quadrature samples.
    """
    if not _same_mesh(sys_a, sys_b):
        raise ValueError("potential comparison needs the same mesh")
    if not np.array_equal(sys_a.part.gamma0_edges, sys_b.part.gamma0_edges):
        raise ValueError("potential comparison needs the same partition")
    if not _same_fields(sys_a, sys_b, potential=False):
        raise ValueError("matrix coefficient and drift must coincide")
    pts, _ = quadrature_points(sys_a.mesh)
    xs, ys = pts[..., 0], pts[..., 1]
    a0 = _sample_fields(sys_a.coeffs, xs, ys)[3]
    b0 = _sample_fields(sys_b.coeffs, xs, ys)[3]
    if float((b0 - a0).min()) < -1e-12:
        raise ValueError("potential ordering violated: need b0 >= a0")
    check_order_hypotheses(sys_a, require_zero_drift=True)
    check_order_hypotheses(sys_b, require_zero_drift=True)
    sga = build_semigroup(sys_a, lam)
    sgb = build_semigroup(sys_b, lam)
    rng = np.random.default_rng(seed)
    n_full = len(sga.full_boundary_vertices)
    strict = _strict_config(sga) and _strict_config(sgb)
    rows = []
    worst = 0.0
    for trial in range(trials):
        phi = rng.uniform(0.0, 1.0, n_full)
        for t in t_list:
            outA = evolve(sga, phi, t)
            outB = evolve(sgb, phi, t)
            violation = max(0.0, float((outB - outA).max()),
                            float((-outB).max()))
            rows.append(("potential_monotonicity", t, trial,
                         float(outB.min()), float(outB.max()), violation,
                         _verdict(violation, TOL_POS, strict)))
            worst = max(worst, violation)
    return OrderReport("potential_monotonicity", 0.0, 0.0, worst,
                       _verdict(worst, TOL_POS, strict), tuple(rows))


def lp_contraction_report(sg: BoundarySemigroup, t_list,
                          p_list=(1.0, 2.0, np.inf)):
    """Weighted l^p operator norms of the propagator at each time.

    Weights are the lumped gamma1 boundary weights.  For p in {1, inf}
    the sub-Markov setting gives norms <= 1; for p = 2 the norm equals
    exp(-w0 t) by spectral calculus.  Returns rows
    (p, t, norm, bound, ok).
    """
    check_order_hypotheses(sg.sys, require_nonneg_potential=True,
                           require_zero_drift=True)
    w = lumped_boundary_weights(sg.sys)[sg.sys.boundary_dofs]
    rows = []
    for t in t_list:
        G = propagator(sg, t)
        for p in p_list:
            if p == np.inf:
                norm = float(np.max(np.sum(np.abs(G), axis=1)))
                bound = 1.0 + TOL_POS
            elif p == 1.0:
                norm = float(np.max((w @ np.abs(G)) / w))
                bound = 1.0 + TOL_POS
            elif p == 2.0:
                norm = float(np.exp(-t * sg.w0))
                bound = float(np.exp(-t * sg.w0)) + 1e-10
            else:
                raise ValueError("p must be 1, 2 or inf")
            rows.append((p, t, norm, bound, norm <= bound))
    return rows
