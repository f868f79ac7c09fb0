"""Discrete partial Dirichlet-to-Neumann matrices via Schur complements.

For a spectral parameter lambda away from the discrete Dirichlet
spectrum, the boundary reduction of A - lambda*M over the interior dofs

    S(lambda) = C_BB - C_BI C_II^{-1} C_IB,      C = A - lambda*M

represents the boundary flux form weakly: for any boundary vectors
phi, psi one has psi^T S(lambda) phi = energy form of the two harmonic
extensions.  Paired with the gamma1 boundary mass Bb, the generalized
pair (S, Bb) is the boundary operator all spectral and semigroup
computations consume; the explicit product Bb^{-1} S is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assemble import AssembledSystem, assemble, dump_matrix
from .coeffs import CoefficientSet
from .errors import NearDirichletSpectrumError, SolverError

__all__ = [
    "DtnMatrix",
    "HarmonicExtensionResult",
    "CoercivityReport",
    "SmoothnessReport",
    "harmonic_extension",
    "dtn_matrix",
    "decompose",
    "coercivity_report",
    "smoothness_check",
    "nearest_dirichlet_eigenvalue",
    "embed_on_full_boundary",
    "dump_dtn",
]

COND_LIMIT = 1e12


@dataclass(frozen=True)
class DtnMatrix:
    """Schur complement S(lambda) with its gamma1 boundary mass."""

    S: np.ndarray
    Bb: np.ndarray
    lam: float
    cond_interior: float
    boundary_dofs: np.ndarray


@dataclass(frozen=True)
class HarmonicExtensionResult:
    """Free-dof vector whose interior equations vanish to tolerance."""

    u: np.ndarray
    residual_interior: float   # relative to matrix and vector scale


@dataclass(frozen=True)
class CoercivityReport:
    w_est: float
    delta_est: float
    m_est: float
    trials: int


@dataclass(frozen=True)
class SmoothnessReport:
    max_defect: float          # scaled central second difference
    derivative_ratio: float    # |D(dlam/2)| / |D(dlam)| in max norm


class _InteriorSolve:
    """LU factorization of the interior block with a condition estimate."""

    def __init__(self, sys: AssembledSystem, lam: float):
        self.lam = lam
        idx = sys.interior_dofs
        self.size = len(idx)
        if self.size == 0:
            self.cond = 1.0
            self._lu = None
            return
        C = (sys.A - lam * sys.M).tocsc()
        T = C[idx, :][:, idx]
        try:
            self._lu = spla.splu(T.tocsc())
        except RuntimeError as exc:
            raise NearDirichletSpectrumError(lam, float("inf")) from exc
        norm1 = float(np.max(np.abs(T).sum(axis=0)))
        if self.size <= 4:
            try:
                inv_norm1 = float(
                    np.max(np.abs(scipy.linalg.inv(T.toarray())).sum(axis=0))
                )
            except scipy.linalg.LinAlgError as exc:
                raise NearDirichletSpectrumError(lam, float("inf")) from exc
        else:
            op = spla.LinearOperator(
                (self.size, self.size),
                matvec=lambda v: self._lu.solve(v),
                rmatvec=lambda v: self._lu.solve(v, trans="T"),
            )
            inv_norm1 = float(spla.onenormest(op))
        self.cond = norm1 * inv_norm1
        if not np.isfinite(self.cond) or self.cond > COND_LIMIT:
            raise NearDirichletSpectrumError(lam, self.cond)

    def solve(self, rhs):
        if self.size == 0:
            return np.zeros((0,) + rhs.shape[1:])
        return self._lu.solve(rhs)


def harmonic_extension(sys: AssembledSystem, lam: float,
                       phi) -> HarmonicExtensionResult:
    """Extend gamma1 boundary data into the discrete lambda-harmonic space.

    phi is indexed by sys.boundary_dofs.  The interior values solve the
    interior rows of (A - lambda*M) u = 0 with u fixed to phi on the
    boundary dofs.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (len(sys.boundary_dofs),):
        raise ValueError("phi must be indexed by the gamma1 boundary dofs")
    solver = _InteriorSolve(sys, lam)
    C = (sys.A - lam * sys.M).tocsr()
    u = np.zeros(sys.n_free)
    u[sys.boundary_dofs] = phi
    if solver.size:
        rhs = -(C[sys.interior_dofs, :][:, sys.boundary_dofs] @ phi)
        u[sys.interior_dofs] = solver.solve(rhs)
    resid = C @ u
    scale = ((np.abs(sys.A).max() + abs(lam) * np.abs(sys.M).max())
             * max(1.0, np.abs(u).max()))
    rel = float(np.max(np.abs(resid[sys.interior_dofs])) / scale) \
        if solver.size else 0.0
    return HarmonicExtensionResult(u=u, residual_interior=rel)


def dtn_matrix(sys: AssembledSystem, lam: float) -> DtnMatrix:
    """Schur complement of A - lambda*M over the interior dofs."""
    solver = _InteriorSolve(sys, lam)
    bd = sys.boundary_dofs
    idx = sys.interior_dofs
    C = (sys.A - lam * sys.M).tocsc()
    C_BB = C[bd, :][:, bd].toarray()
    if solver.size:
        C_IB = C[idx, :][:, bd].toarray()
        C_BI = C[bd, :][:, idx].toarray()
        S = C_BB - C_BI @ solver.solve(C_IB)
    else:
        S = C_BB
    Bb = sys.B[bd, :][:, bd].toarray()
    return DtnMatrix(S=S, Bb=Bb, lam=float(lam),
                     cond_interior=solver.cond, boundary_dofs=bd.copy())


def decompose(sys: AssembledSystem, lam: float, u):
    """Split a free-dof vector into interior part plus harmonic extension.

    Returns (u0, ext) where u0 lives on the interior dofs and ext is
    the harmonic extension of the boundary trace of u; the identity
    u = embed(u0) + ext.u holds exactly on the boundary dofs and to
    roundoff elsewhere.
    """
    u = np.asarray(u, dtype=float)
    ext = harmonic_extension(sys, lam, u[sys.boundary_dofs])
    u0 = (u - ext.u)[sys.interior_dofs]
    return u0, ext


def embed_interior(sys: AssembledSystem, u0):
    """Zero-pad an interior vector to the free-dof space."""
    out = np.zeros(sys.n_free)
    out[sys.interior_dofs] = u0
    return out


def embed_on_full_boundary(dtn: DtnMatrix, sys: AssembledSystem):
    """S extended by zero rows/columns to all boundary vertices.

    Realizes the boundary operator on the whole boundary, acting by
    zero on the gamma0 positions; the returned index array gives the
    boundary vertex of each row.
    """
    full = sys.mesh.boundary_vertices()
    pos = {v: i for i, v in enumerate(full)}
    S_full = np.zeros((len(full), len(full)))
    take = np.array([pos[v] for v in sys.boundary_dof_vertices])
    S_full[np.ix_(take, take)] = dtn.S
    return S_full, full


def coercivity_report(sys: AssembledSystem, lam: float, trials: int,
                      seed: int = 0) -> CoercivityReport:
    """Empirical boundary-form coercivity and continuity constants.

    Over random boundary vectors phi, fits w and delta with
    phi^T S phi + w phi^T Bb phi >= delta * ||u_phi||_H1^2 (the discrete
    H1 norm is u^T (K + M) u with K the unit-coefficient stiffness) and
    the smallest continuity constant for the mixed products.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dtn = dtn_matrix(sys, lam)
    K_sys = assemble(sys.mesh, sys.part, CoefficientSet.identity())
    H = (K_sys.A + sys.M).tocsr()
    rng = np.random.default_rng(seed)
    b = len(sys.boundary_dofs)
    phis = rng.standard_normal((trials, b))
    qS = np.empty(trials)
    qB = np.empty(trials)
    h1 = np.empty(trials)
    exts = []
    for i in range(trials):
        ext = harmonic_extension(sys, lam, phis[i])
        exts.append(ext.u)
        qS[i] = phis[i] @ (dtn.S @ phis[i])
        qB[i] = phis[i] @ (dtn.Bb @ phis[i])
        h1[i] = ext.u @ (H @ ext.u)
    base = max(0.0, float(np.max(-qS / qB)))
    w_est = 1.1 * base + 1e-6
    delta_est = float(np.min((qS + w_est * qB) / h1))
    m_est = 0.0
    norms = np.sqrt(qS + w_est * qB)
    for i in range(trials):
        j = (i + 1) % trials
        if j == i:
            break
        cross = abs(phis[i] @ (dtn.S @ phis[j]))
        m_est = max(m_est, cross / (norms[i] * norms[j]))
    return CoercivityReport(w_est=w_est, delta_est=delta_est,
                            m_est=float(m_est), trials=trials)


def nearest_dirichlet_eigenvalue(sys: AssembledSystem, lam: float) -> float:
    """Eigenvalue of the interior (Dirichlet) pencil closest to lam."""
    idx = sys.interior_dofs
    if len(idx) == 0:
        return float("inf")
    A_D = sys.A[idx, :][:, idx]
    M_D = sys.M[idx, :][:, idx]
    if len(idx) <= 1200:
        vals = scipy.linalg.eigh(A_D.toarray(), M_D.toarray(),
                                 eigvals_only=True)
        return float(vals[np.argmin(np.abs(vals - lam))])
    try:
        vals = spla.eigsh(A_D.tocsc(), k=1, M=M_D.tocsc(), sigma=lam,
                          which="LM", return_eigenvectors=False)
        return float(vals[0])
    except Exception as exc:
        raise SolverError(f"shift-invert solve failed near {lam}") from exc


def smoothness_check(sys: AssembledSystem, lam: float,
                     dlam: float) -> SmoothnessReport:
    """Finite-difference regularity check of lambda -> S(lambda).

    Requires the closed interval [lam - dlam, lam + dlam] to avoid the
    discrete Dirichlet spectrum; the family is then smooth there, so
    the central second difference stays bounded and halving the step
    leaves the first-difference estimate nearly unchanged.
    """
    if dlam <= 0:
        raise ValueError("dlam must be positive")
    nu = nearest_dirichlet_eigenvalue(sys, lam)
    if abs(nu - lam) <= dlam:
        raise NearDirichletSpectrumError(lam, float("inf"))
    S0 = dtn_matrix(sys, lam).S
    Sp = dtn_matrix(sys, lam + dlam).S
    Sm = dtn_matrix(sys, lam - dlam).S
    Sp2 = dtn_matrix(sys, lam + dlam / 2).S
    Sm2 = dtn_matrix(sys, lam - dlam / 2).S
    max_defect = float(np.max(np.abs(Sp - 2 * S0 + Sm)) / dlam ** 2)
    D1 = (Sp - Sm) / (2 * dlam)
    D2 = (Sp2 - Sm2) / dlam
    ratio = float(np.max(np.abs(D2)) / np.max(np.abs(D1)))
    return SmoothnessReport(max_defect=max_defect, derivative_ratio=ratio)


def dump_dtn(path, dtn: DtnMatrix):
    """Coordinate-text dump of S with lambda and the condition estimate."""
    dump_matrix(
        path, dtn.S,
        extra_header_lines=[
            f"lambda={dtn.lam!r} cond_interior={dtn.cond_interior!r}"
        ],
    )
