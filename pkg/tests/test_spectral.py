"""Eigen-solvers, spectral duality, curves, limits and matching."""

import numpy as np
import pytest
import scipy.linalg

from dtnlab.assemble import assemble
from dtnlab.coeffs import CoefficientSet, certify, radial_bump_diffeo
from dtnlab.errors import NotPositiveDefiniteError
from dtnlab.mesh import build_structured_square, partition_boundary
from dtnlab.spectral import (
    cluster_indices,
    dirichlet_limit_study,
    dirichlet_spectrum,
    dtn_equality_check,
    duality_check,
    eigen_curves,
    gauge_experiment,
    lambda_in_gaps,
    match_and_unitary,
    robin_spectrum,
    steklov_spectrum,
    sym_geneig,
)

from helpers import square_system, variable_coeffs


def brute_force_geneig(K, G, k):
    """Independent dense oracle: explicit Cholesky reduction plus the
    standard symmetric solver from numpy (the implementation path goes
    through scipy's generalized driver)."""
    L = np.linalg.cholesky(G)
    Y = np.linalg.solve(L, K)
    C = np.linalg.solve(L, Y.T).T
    vals, vecs = np.linalg.eigh(0.5 * (C + C.T))
    back = np.linalg.solve(L.T, vecs[:, :k])
    return vals[:k], back


def random_spd_pair(rng, n):
    Q = rng.standard_normal((n, n))
    K = Q + Q.T
    R = rng.standard_normal((n, n))
    G = R @ R.T + n * np.eye(n)
    return K, G


def test_sym_geneig_diagonal():
    spec = sym_geneig(np.diag([3.0, 1.0, 2.0]), np.eye(3), 3)
    np.testing.assert_allclose(spec.eigenvalues, [1.0, 2.0, 3.0], atol=1e-14)


def test_sym_geneig_equal_matrices():
    rng = np.random.default_rng(0)
    _, G = random_spd_pair(rng, 8)
    spec = sym_geneig(G, G, 8)
    np.testing.assert_allclose(spec.eigenvalues, 1.0, atol=1e-12)


def test_sym_geneig_matches_oracle():
    rng = np.random.default_rng(42)
    K, G = random_spd_pair(rng, 30)
    spec = sym_geneig(K, G, 30)
    vals, _ = brute_force_geneig(K, G, 30)
    np.testing.assert_allclose(spec.eigenvalues, vals, atol=1e-10)
    # G-orthonormality of the returned vectors
    V = spec.eigenvectors
    np.testing.assert_allclose(V.T @ G @ V, np.eye(30), atol=1e-8)


def test_sym_geneig_rejects_indefinite_G():
    with pytest.raises(NotPositiveDefiniteError):
        sym_geneig(np.eye(3), np.diag([1.0, -1.0, 1.0]), 2)


def test_sym_geneig_rejects_asymmetric():
    K = np.array([[1.0, 5.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        sym_geneig(K, np.eye(2), 1)


def test_sym_geneig_bounds_k():
    with pytest.raises(ValueError):
        sym_geneig(np.eye(3), np.eye(3), 4)


def test_cluster_indices():
    vals = np.array([1.0, 1.0 + 1e-9, 2.0, 3.0, 3.0, 3.0])
    groups = cluster_indices(vals)
    assert [len(g) for g in groups] == [2, 1, 3]


def test_dirichlet_square_oracle():
    sys_ = square_system(n=16, gamma0_sides=())
    vals = dirichlet_spectrum(sys_, 3).eigenvalues
    assert vals[0] == pytest.approx(2 * np.pi ** 2, rel=0.02)
    assert vals[1] == pytest.approx(5 * np.pi ** 2, rel=0.03)
    assert vals[2] == pytest.approx(5 * np.pi ** 2, rel=0.03)


def test_scaling_doubles_spectrum():
    sys1 = square_system(n=8, gamma0_sides=("left",))
    sys2 = square_system(n=8, gamma0_sides=("left",),
                         coeffs=CoefficientSet.make(a=((2.0, 0.0), (0.0, 2.0))))
    v1 = dirichlet_spectrum(sys1, 4).eigenvalues
    v2 = dirichlet_spectrum(sys2, 4).eigenvalues
    np.testing.assert_allclose(v2, 2 * v1, rtol=1e-12)


def test_robin_neumann_kernel():
    sys_ = square_system(n=8, gamma0_sides=())
    spec = robin_spectrum(sys_, 0.0, 2)
    assert abs(spec.eigenvalues[0]) <= 1e-10
    v = spec.eigenvectors[:, 0]
    assert np.abs(v - v.mean()).max() <= 1e-8 * np.abs(v).max()
    assert spec.eigenvalues[1] == pytest.approx(np.pi ** 2, rel=0.02)


def test_robin_strong_negative_approaches_dirichlet():
    sys_ = square_system(n=8, gamma0_sides=())
    lam_d = dirichlet_spectrum(sys_, 1).eigenvalues[0]
    gap4 = lam_d - robin_spectrum(sys_, -1e4, 1).eigenvalues[0]
    gap6 = lam_d - robin_spectrum(sys_, -1e6, 1).eigenvalues[0]
    assert gap4 > 0 and gap6 > 0
    assert gap6 <= gap4 / 50  # consistent with a 1/|mu| rate


def test_steklov_kernel_and_positivity():
    free = square_system(n=8, gamma0_sides=())
    spec = steklov_spectrum(free, 0.0, 3)
    assert abs(spec.eigenvalues[0]) <= 1e-10
    mixed = square_system(n=8, gamma0_sides=("left",))
    spec_m = steklov_spectrum(mixed, 0.0, 1)
    assert spec_m.eigenvalues[0] > 0


def test_duality_residual_and_reverse():
    for sys_ in (square_system(n=8, gamma0_sides=()),
                 square_system(n=8, gamma0_sides=("left",),
                               coeffs=variable_coeffs())):
        r = duality_check(sys_, 0.0, 1)
        assert r.residual <= 1e-8
        assert r.reverse_residual <= 1e-8
        assert r.multiplicity_match


def test_duality_multiplicity_cluster():
    # full gamma1 square: symmetric boundary modes come in pairs
    sys_ = square_system(n=8, gamma0_sides=())
    r = duality_check(sys_, 0.0, 2)
    assert r.steklov_multiplicity == 2
    assert r.robin_multiplicity == 2
    assert r.multiplicity_match


def test_duality_index_out_of_bounds():
    sys_ = square_system(n=4, gamma0_sides=())
    with pytest.raises(ValueError):
        duality_check(sys_, 0.0, 10 ** 6)


def test_eigen_curves_monotone():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    curve = eigen_curves(sys_, -10.0, 10.0, 21, 1)
    assert curve.max_violation <= 1e-8
    assert np.all(np.diff(curve.values[0]) < 0)  # strictly decreasing here


def test_eigen_curves_rayleigh_divergence_bound():
    # the constant vector bounds the first eigenvalue from above
    sys_ = square_system(n=8, gamma0_sides=())
    one = np.ones(sys_.n_free)
    for mu in (50.0, 100.0):
        bound = (one @ (sys_.A @ one) - mu * one @ (sys_.B @ one)) \
            / (one @ (sys_.M @ one))
        lam1 = robin_spectrum(sys_, mu, 1).eigenvalues[0]
        assert lam1 <= bound + 1e-10
    assert robin_spectrum(sys_, 100.0, 1).eigenvalues[0] <= -399.0


def test_eigen_curves_mu_zero_column_matches_mixed():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    curve = eigen_curves(sys_, -1.0, 1.0, 3, 3)
    direct = robin_spectrum(sys_, 0.0, 3).eigenvalues
    np.testing.assert_allclose(curve.values[:, 1], direct, atol=1e-12)


def test_eigen_curves_below_dirichlet():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    k = 3
    curve = eigen_curves(sys_, -20.0, 20.0, 9, k)
    dvals = dirichlet_spectrum(sys_, k).eigenvalues
    excess = (curve.values - dvals[:, None]).max()
    assert excess <= 1e-10 * max(1.0, np.abs(dvals).max())


def test_eigen_curves_guards():
    sys_ = square_system(n=4)
    with pytest.raises(ValueError):
        eigen_curves(sys_, 0.0, 1.0, 1, 1)


def test_min_max_monotone_in_mu():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    k = 4
    v1 = robin_spectrum(sys_, -3.0, k).eigenvalues
    v2 = robin_spectrum(sys_, 2.0, k).eigenvalues
    assert np.all(v2 <= v1 + 1e-10)


def test_limit_study_cluster_convergence():
    sys_ = square_system(n=8, gamma0_sides=())
    study = dirichlet_limit_study(sys_, 3, [-100.0, -1000.0])
    assert study.all_gaps_positive
    assert study.monotone
    # the near-degenerate pair (indices 2, 3) converges as a cluster
    pair_gap = study.gaps[:, 1] + study.gaps[:, 2]
    assert pair_gap[1] < pair_gap[0] / 5


def test_limit_study_requires_decreasing_negatives():
    sys_ = square_system(n=4)
    with pytest.raises(ValueError):
        dirichlet_limit_study(sys_, 2, [-100.0, -10.0])
    with pytest.raises(ValueError):
        dirichlet_limit_study(sys_, 2, [10.0, -100.0])


def test_match_identical_systems():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    rep = match_and_unitary(sys_, sys_, 0.0, 5)
    assert np.abs(rep.gaps).max() == 0.0
    assert rep.multiplicity_match
    assert rep.orthogonality_defect <= 1e-8
    assert rep.conjugation_residual <= 1e-10
    # U acts as the identity on the computed eigenvectors up to sign
    spec = robin_spectrum(sys_, 0.0, 5)
    W = rep.U @ spec.eigenvectors
    M = sys_.M
    for i in range(5):
        overlap = abs(W[:, i] @ (M @ spec.eigenvectors[:, i]))
        assert overlap == pytest.approx(1.0, abs=1e-8)


def test_match_detects_potential_shift():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    c_up = CoefficientSet.make(a0=1.0)
    sys_up = square_system(n=8, gamma0_sides=("left",), coeffs=c_up)
    rep = match_and_unitary(sys_, sys_up, 0.0, 5, build_unitary=False)
    np.testing.assert_allclose(rep.gaps, 1.0, atol=1e-10)


def test_match_dimension_mismatch():
    a = square_system(n=4)
    b = square_system(n=8)
    with pytest.raises(ValueError):
        match_and_unitary(a, b, 0.0, 3)


def test_dtn_equality_identical_and_shifted():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    assert dtn_equality_check(sys_, sys_, [0.0, 2.0]) <= 1e-12
    sys_up = square_system(n=8, gamma0_sides=("left",),
                           coeffs=CoefficientSet.make(a0=1.0))
    assert dtn_equality_check(sys_, sys_up, [0.0]) > 1e-3


def test_counting_functions_agree_for_matched_systems():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    specA = robin_spectrum(sys_, -2.0, 6).eigenvalues
    specB = robin_spectrum(sys_, -2.0, 6).eigenvalues
    for t in np.linspace(specA[0], specA[-1], 7):
        assert np.sum(specA <= t) == np.sum(specB <= t)


def test_lambda_in_gaps_avoids_spectrum():
    sys_ = square_system(n=8, gamma0_sides=("left",))
    lams = lambda_in_gaps(sys_, 3)
    dvals = dirichlet_spectrum(sys_, 10).eigenvalues
    assert len(lams) == 3
    for lam in lams:
        assert np.abs(dvals - lam).min() > 1e-3


def test_gauge_experiment_smoke():
    mesh = build_structured_square(4)
    part = partition_boundary(mesh, lambda x, y: False)
    c = CoefficientSet.identity()
    certify(c, mesh)
    study = gauge_experiment(mesh, part, c, radial_bump_diffeo(),
                             refinements=1, k=3, mu_list=(0.0,),
                             lambda_list=(0.0,))
    assert study.identity_residual <= 1e-10
    assert study.dtn_defects[1] < study.dtn_defects[0]
    assert study.max_gaps[1] < study.max_gaps[0]
