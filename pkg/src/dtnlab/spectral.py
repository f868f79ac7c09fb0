"""Generalized symmetric eigensolves and the boundary/domain spectral
correspondence.

Covers the Dirichlet, Robin and boundary (Steklov-type) spectra of an
assembled system, parameter sweeps of the Robin eigenvalue curves, the
strong-coupling limit toward the Dirichlet spectrum, the algebraic
duality between boundary eigenpairs of (S(lambda), Bb) and Robin
eigenpairs at the matching parameter, and gauge experiments comparing
two systems with equal boundary data (eigenvalue matching, unitary
intertwiner on computed eigenspaces, trace subspace angles).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .assemble import AssembledSystem, assemble, dirichlet_system, robin_matrix
from .coeffs import CoefficientSet, Diffeo, mass_weight, pullback, transport_mesh
from .dtn import dtn_matrix, harmonic_extension
from .errors import (
    EmptyInteriorError,
    NotPositiveDefiniteError,
    SolverError,
)
from .mesh import refine, refine_partition
from .util import parallel_map

__all__ = [
    "Spectrum",
    "EigenCurve",
    "MatchReport",
    "DualityResult",
    "LimitStudy",
    "GaugeStudy",
    "sym_geneig",
    "cluster_indices",
    "dirichlet_spectrum",
    "robin_spectrum",
    "steklov_spectrum",
    "duality_check",
    "eigen_curves",
    "dirichlet_limit_study",
    "match_and_unitary",
    "dtn_equality_check",
    "lambda_in_gaps",
    "gauge_experiment",
]

CLUSTER_RTOL = 1e-6


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with G-orthonormal eigenvectors."""

    eigenvalues: np.ndarray    # (k,)
    eigenvectors: np.ndarray   # (n, k)
    residual_max: float


@dataclass(frozen=True)
class EigenCurve:
    """Robin eigenvalue curves sampled on a mu grid (index pairing)."""

    mu_grid: np.ndarray        # (steps,)
    values: np.ndarray         # (k, steps)
    clusters: list             # per sample: list of index groups
    max_violation: float       # worst increase along any row


@dataclass(frozen=True)
class DualityResult:
    """Residuals of the boundary/domain eigenpair correspondence."""

    mu: float
    residual: float            # boundary pair extended into the domain
    reverse_residual: float    # domain pair restricted to the boundary
    steklov_multiplicity: int
    robin_multiplicity: int
    multiplicity_match: bool


@dataclass(frozen=True)
class LimitStudy:
    """Gap table for the strong-coupling limit toward Dirichlet."""

    mu_list: np.ndarray
    dirichlet_values: np.ndarray   # (k,)
    robin_values: np.ndarray       # (len(mu), k)
    gaps: np.ndarray               # (len(mu), k)
    all_gaps_positive: bool
    monotone: bool
    decade_ratio_ok: bool
    ratios: np.ndarray             # (len(mu)-1, k)


@dataclass(frozen=True)
class MatchReport:
    """Comparison of two systems' Robin spectra at one parameter."""

    gaps: np.ndarray
    cluster_sizes_a: tuple
    cluster_sizes_b: tuple
    multiplicity_match: bool
    orthogonality_defect: float
    conjugation_residual: float
    principal_angles: tuple        # max angle per matched cluster (radians)
    ambiguous_clusters: tuple      # clusters of size > 1 (pairing reported)
    U: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class GaugeStudy:
    """Refinement table for a gauge (change-of-variables) experiment."""

    h_list: np.ndarray
    dtn_defects: np.ndarray
    max_gaps: np.ndarray
    defect_ratios: np.ndarray
    gap_ratios: np.ndarray
    identity_residual: float


def sym_geneig(K, G, k: int) -> Spectrum:
    """k smallest eigenpairs of K v = lambda G v, G-orthonormal.

    K must be symmetric (to 1e-8 relative; tiny asymmetry is averaged
    away) and G symmetric positive definite.  Solved by reduction to a
    standard symmetric problem (LAPACK); deterministic for fixed input.
    """
    K = np.asarray(K.toarray() if hasattr(K, "toarray") else K, dtype=float)
    G = np.asarray(G.toarray() if hasattr(G, "toarray") else G, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n) or G.shape != (n, n):
        raise ValueError("K and G must be square and of equal size")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")
    for name, mat in (("K", K), ("G", G)):
        scale = np.abs(mat).max() or 1.0
        if np.abs(mat - mat.T).max() > 1e-8 * scale:
            raise ValueError(f"{name} is not symmetric")
    K = 0.5 * (K + K.T)
    G = 0.5 * (G + G.T)
    try:
        scipy.linalg.cholesky(G)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("G is not positive definite") from exc
    try:
        vals, vecs = scipy.linalg.eigh(K, G, subset_by_index=[0, k - 1])
    except scipy.linalg.LinAlgError as exc:
        raise SolverError(f"generalized eigensolver failed: {exc}") from exc
    resid = 0.0
    K_scale = np.abs(K).max() or 1.0
    for i in range(k):
        r = K @ vecs[:, i] - vals[i] * (G @ vecs[:, i])
        resid = max(resid, float(np.linalg.norm(r)
                                 / (K_scale * np.linalg.norm(vecs[:, i]))))
    return Spectrum(eigenvalues=vals, eigenvectors=vecs, residual_max=resid)


def cluster_indices(values, rtol: float = CLUSTER_RTOL):
    """Group ascending eigenvalues into multiplicity clusters."""
    values = np.asarray(values)
    groups = []
    current = [0]
    for i in range(1, len(values)):
        tol = rtol * max(1.0, abs(values[i]), abs(values[i - 1]))
        if values[i] - values[i - 1] <= tol:
            current.append(i)
        else:
            groups.append(current)
            current = [i]
    if len(values):
        groups.append(current)
    return groups


def dirichlet_spectrum(sys: AssembledSystem, k: int) -> Spectrum:
    """k smallest eigenpairs of the interior (Dirichlet) pencil."""
    A_D, M_D = dirichlet_system(sys)
    return sym_geneig(A_D, M_D, k)


def robin_spectrum(sys: AssembledSystem, mu: float, k: int) -> Spectrum:
    """k smallest eigenpairs of (A - mu*B, M) on the free dofs."""
    return sym_geneig(robin_matrix(sys, mu), sys.M, k)


def steklov_spectrum(sys: AssembledSystem, lam: float, k: int) -> Spectrum:
    """k smallest eigenpairs of the boundary pair (S(lambda), Bb)."""
    d = dtn_matrix(sys, lam)
    return sym_geneig(d.S, d.Bb, k)


def _robin_eigs_near(sys, mu, lam, margin):
    """Robin eigenpairs with eigenvalue within margin of lam."""
    K = robin_matrix(sys, mu).toarray()
    M = sys.M.toarray()
    K = 0.5 * (K + K.T)
    if sys.n_free <= 1500:
        vals, vecs = scipy.linalg.eigh(K, M)
    else:
        vals, vecs = scipy.linalg.eigh(
            K, M, subset_by_value=(lam - margin, lam + margin))
    keep = np.abs(vals - lam) <= margin
    return vals[keep], vecs[:, keep]


def duality_check(sys: AssembledSystem, lam: float, j: int) -> DualityResult:
    """Check the two-way eigenpair correspondence at boundary index j.

    Forward: the j-th boundary eigenpair (mu_j, phi_j) of (S(lam), Bb)
    is extended into the domain and must satisfy
    (A - lam M - mu_j B) u = 0 to solver tolerance.  Reverse: the Robin
    pencil at mu_j must have an eigenvalue cluster at lam whose
    eigenvectors restrict to boundary eigenvectors, with equal cluster
    size (multiplicities agree).  j is 1-based.
    """
    d = dtn_matrix(sys, lam)
    b = d.S.shape[0]
    if not 1 <= j <= b:
        raise ValueError(f"boundary index j must be in [1, {b}], got {j}")
    spec = sym_geneig(d.S, d.Bb, b)
    mu_j = float(spec.eigenvalues[j - 1])
    phi_j = spec.eigenvectors[:, j - 1]

    ext = harmonic_extension(sys, lam, phi_j)
    R = sys.A - lam * sys.M - mu_j * sys.B
    A_norm = scipy.linalg.norm(sys.A.toarray())
    residual = float(np.linalg.norm(R @ ext.u)
                     / (A_norm * np.linalg.norm(ext.u)))

    tol_mu = CLUSTER_RTOL * max(1.0, abs(mu_j))
    s_mult = int(np.sum(np.abs(spec.eigenvalues - mu_j) <= tol_mu))

    margin = 100 * CLUSTER_RTOL * max(1.0, abs(lam))
    rvals, rvecs = _robin_eigs_near(sys, mu_j, lam, margin)
    tol_lam = CLUSTER_RTOL * max(1.0, abs(lam))
    keep = np.abs(rvals - lam) <= tol_lam
    r_mult = int(np.sum(keep))
    reverse = float("inf")
    if r_mult:
        S_norm = np.abs(d.S).max() or 1.0
        reverse = 0.0
        for w in rvecs[:, keep].T:
            psi = w[sys.boundary_dofs]
            rr = np.linalg.norm(d.S @ psi - mu_j * (d.Bb @ psi))
            reverse = max(reverse, float(rr / (S_norm * np.linalg.norm(psi))))
    return DualityResult(
        mu=mu_j,
        residual=residual,
        reverse_residual=reverse,
        steklov_multiplicity=s_mult,
        robin_multiplicity=r_mult,
        multiplicity_match=(s_mult == r_mult),
    )


def eigen_curves(sys: AssembledSystem, mu_min: float, mu_max: float,
                 steps: int, k: int) -> EigenCurve:
    """Robin eigenvalue curves over a mu grid, paired by sorted index.

    Pairing by index keeps crossings inside clusters benign; each row
    must be non-increasing in mu, and the worst increase found is
    reported (not raised).
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    grid = np.linspace(mu_min, mu_max, steps)

    def solve(mu):
        try:
            return robin_spectrum(sys, mu, k).eigenvalues
        except Exception as exc:
            raise SolverError(f"Robin solve failed at mu={mu}: {exc}") from exc

    columns = parallel_map(solve, grid)
    values = np.column_stack(columns)
    clusters = [cluster_indices(col) for col in columns]
    max_violation = float(np.max(np.diff(values, axis=1))) if steps > 1 else 0.0
    return EigenCurve(mu_grid=grid, values=values, clusters=clusters,
                      max_violation=max_violation)


def dirichlet_limit_study(sys: AssembledSystem, k: int,
                          mu_list) -> LimitStudy:
    """Gaps |lambda_k^mu - lambda_k^D| along decreasing negative mu.

    Report-only: records whether every gap is positive, whether gaps
    shrink monotonically along the list, and whether they shrink by at
    least a factor 5 per decade of |mu|.
    """
    mu_list = np.asarray(list(mu_list), dtype=float)
    if np.any(mu_list >= 0) or np.any(np.diff(mu_list) >= 0):
        raise ValueError("mu_list must be strictly decreasing negatives")
    dvals = dirichlet_spectrum(sys, k).eigenvalues
    rvals = np.array([robin_spectrum(sys, mu, k).eigenvalues
                      for mu in mu_list])
    gaps = dvals[None, :] - rvals
    ratios = gaps[:-1] / gaps[1:]
    decades = np.log10(np.abs(mu_list[1:]) / np.abs(mu_list[:-1]))
    required = 5.0 ** decades
    return LimitStudy(
        mu_list=mu_list,
        dirichlet_values=dvals,
        robin_values=rvals,
        gaps=gaps,
        all_gaps_positive=bool(np.all(gaps > 0)),
        monotone=bool(np.all(np.diff(gaps, axis=0) < 0)),
        decade_ratio_ok=bool(np.all(ratios >= required[:, None])),
        ratios=ratios,
    )


def _check_compatible(sysA: AssembledSystem, sysB: AssembledSystem):
    if sysA.n_free != sysB.n_free:
        raise ValueError("dimension mismatch: different free-dof counts")
    if not np.array_equal(sysA.boundary_dofs, sysB.boundary_dofs) or \
            not np.array_equal(sysA.boundary_dof_vertices,
                               sysB.boundary_dof_vertices):
        raise ValueError("dimension mismatch: different boundary dofs")


def match_and_unitary(sysA: AssembledSystem, sysB: AssembledSystem,
                      mu: float, k: int,
                      build_unitary: bool = True) -> MatchReport:
    """Pair the two Robin spectra by index and intertwine eigenbases.

    The map U sends the i-th A-eigenvector to the i-th B-eigenvector
    (U = Psi Phi^T M_A on the computed subspace, where the columns of
    Phi and Psi are mass-orthonormal).  Reported: per-index eigenvalue
    gaps, cluster size agreement, the orthogonality defect of U on the
    computed subspace, the conjugation residual (how well A-eigenvalues
    act as B-eigenvalues on the mapped vectors) and principal angles
    between boundary-trace subspaces of matched clusters.  Clusters of
    size > 1 make the within-cluster pairing ambiguous; they are
    reported, never silently resolved.
    """
    _check_compatible(sysA, sysB)
    specA = robin_spectrum(sysA, mu, k)
    specB = robin_spectrum(sysB, mu, k)
    gaps = np.abs(specA.eigenvalues - specB.eigenvalues)
    ca = cluster_indices(specA.eigenvalues)
    cb = cluster_indices(specB.eigenvalues)
    sizes_a = tuple(len(g) for g in ca)
    sizes_b = tuple(len(g) for g in cb)
    ambiguous = tuple(tuple(g) for g in ca if len(g) > 1)

    Phi = specA.eigenvectors
    Psi = specB.eigenvectors
    M_B = sysB.M
    U = None
    W = Psi  # U @ Phi equals Psi up to solver defect when U is built
    if build_unitary:
        U = Psi @ (sysA.M @ Phi).T
        W = U @ Phi
    G = W.T @ (M_B @ W)
    orthogonality_defect = float(np.abs(G - np.eye(k)).max())

    A_mu_B = robin_matrix(sysB, mu)
    scaleB = (scipy.linalg.norm(sysB.A.toarray())
              + abs(mu) * scipy.linalg.norm(sysB.B.toarray()))
    conj = 0.0
    for i in range(k):
        lam_a = specA.eigenvalues[i]
        r = A_mu_B @ Psi[:, i] - lam_a * (M_B @ Psi[:, i])
        s = (scaleB + abs(lam_a) * scipy.linalg.norm(sysB.M.toarray()))
        conj = max(conj, float(np.linalg.norm(r)
                               / (s * np.linalg.norm(Psi[:, i]))))

    bd = sysA.boundary_dofs
    Bb = sysA.B[bd, :][:, bd].toarray()
    angles = []
    if sizes_a == sizes_b:
        for ga in ca:
            Ta = Phi[bd][:, ga]
            Tb = Psi[bd][:, ga]
            try:
                qa = _orthonormalize(Ta, Bb)
                qb = _orthonormalize(Tb, Bb)
            except scipy.linalg.LinAlgError:
                angles.append(float("nan"))
                continue
            sv = scipy.linalg.svd(qa.T @ (Bb @ qb), compute_uv=False)
            sv = np.clip(sv, -1.0, 1.0)
            angles.append(float(np.max(np.arccos(sv))))
    return MatchReport(
        gaps=gaps,
        cluster_sizes_a=sizes_a,
        cluster_sizes_b=sizes_b,
        multiplicity_match=(sizes_a == sizes_b),
        orthogonality_defect=orthogonality_defect,
        conjugation_residual=conj,
        principal_angles=tuple(angles),
        ambiguous_clusters=ambiguous,
        U=U,
    )


def _orthonormalize(T, G):
    """G-orthonormal basis of the column span of T (Cholesky of the Gram)."""
    gram = T.T @ (G @ T)
    L = scipy.linalg.cholesky(gram, lower=True)
    return scipy.linalg.solve_triangular(L, T.T, lower=True).T


def dtn_equality_check(sysA: AssembledSystem, sysB: AssembledSystem,
                       lambda_list) -> float:
    """Max-norm defect between the two Schur complements over a lambda set.

    This is the (finite-grid) hypothesis defect of the equal-boundary-
    data experiments.
    """
    _check_compatible(sysA, sysB)

    def defect(lam):
        SA = dtn_matrix(sysA, lam).S
        SB = dtn_matrix(sysB, lam).S
        return float(np.abs(SA - SB).max())

    return max(parallel_map(defect, list(lambda_list)))


def lambda_in_gaps(sys: AssembledSystem, count: int = 3,
                   k_probe: int = 10):
    """Midpoints of the widest gaps of the discrete Dirichlet spectrum.

    Includes the interval below the smallest eigenvalue.  Returns an
    ascending array of `count` spectral parameters safe for Schur
    complements on this discretization.
    """
    n_int = len(sys.interior_dofs)
    if n_int == 0:
        raise EmptyInteriorError("no interior dofs")
    k = min(k_probe, n_int)
    vals = dirichlet_spectrum(sys, k).eigenvalues
    distinct = [float(vals[g[0]]) for g in cluster_indices(vals)]
    first_width = (distinct[1] - distinct[0]) if len(distinct) > 1 else 1.0
    intervals = [(distinct[0] - max(1.0, first_width), distinct[0])]
    intervals += list(zip(distinct[:-1], distinct[1:]))
    widths = [b - a for a, b in intervals]
    order = sorted(range(len(intervals)), key=lambda i: (-widths[i], i))
    chosen = sorted(order[:count])
    return np.array([0.5 * (intervals[i][0] + intervals[i][1])
                     for i in chosen])


def gauge_experiment(mesh0, part0, c: CoefficientSet, phi: Diffeo,
                     refinements: int, k: int = 6,
                     mu_list=(-5.0, 0.0, 5.0),
                     lambda_list=(0.0,)) -> GaugeStudy:
    """Refinement study of a boundary-fixed change of variables.

    At each level the original coefficients are assembled on the level
    mesh, and the transported coefficients on the transported mesh
    (same boundary).  Both the Schur-complement defect over lambda_list
    and the worst Robin eigenvalue gap over mu_list are tabulated; both
    shrink under refinement since the two discretizations share their
    continuum limit.  Also reports the conjugation residual of the
    intertwiner built from two identical inputs as a baseline.
    """
    meshes = [mesh0]
    parts = [part0]
    for _ in range(refinements):
        meshes.append(refine(meshes[-1]))
        parts.append(refine_partition(parts[-1], meshes[-1]))

    h_list, defects, max_gaps = [], [], []
    identity_residual = None
    for mesh_i, part_i in zip(meshes, parts):
        sysA = assemble(mesh_i, part_i, c)
        mesh_t = transport_mesh(mesh_i, phi)
        b = pullback(c, phi)
        sysB = assemble(mesh_t, part_i, b, sample_mesh=mesh_i,
                        mass_weight=mass_weight(phi))
        defect = dtn_equality_check(sysA, sysB, lambda_list)
        gap = 0.0
        for mu in mu_list:
            rep = match_and_unitary(sysA, sysB, mu, k, build_unitary=False)
            gap = max(gap, float(rep.gaps.max()))
        if identity_residual is None:
            rep0 = match_and_unitary(sysA, sysA, float(mu_list[0]), k)
            identity_residual = rep0.conjugation_residual
        h_list.append(mesh_i.h_max)
        defects.append(defect)
        max_gaps.append(gap)

    h_list = np.array(h_list)
    defects = np.array(defects)
    max_gaps = np.array(max_gaps)
    return GaugeStudy(
        h_list=h_list,
        dtn_defects=defects,
        max_gaps=max_gaps,
        defect_ratios=defects[:-1] / defects[1:],
        gap_ratios=max_gaps[:-1] / max_gaps[1:],
        identity_residual=float(identity_residual),
    )
