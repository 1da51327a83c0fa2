import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from bbz.errors import ConfigurationError, DomainError, SolvabilityError
from bbz.operators import (
    BoundaryCondition,
    OperatorLabel,
    assemble,
    d_matrix,
    essential_edge,
    lminus_quadratic_form,
    morse_index,
    phi_identity_residual,
    pin_kernel,
    solve_indefinite,
)
from bbz.profiles import (
    Branch,
    Parity,
    ProfileGrid,
    SolitonProfile,
    build_profile,
    nls_profile,
    params_of_alpha,
)


def _profile(alpha, branch, n=2048, parity=Parity.FULL):
    p = params_of_alpha(alpha, branch)
    return build_profile(p, ProfileGrid.for_params(p, n, parity))


@pytest.mark.parametrize("parity", list(Parity))
@pytest.mark.parametrize("label", list(OperatorLabel))
def test_symmetry_and_inertia_sum(parity, label):
    op = assemble(_profile(1.5, Branch.MINUS, 200, parity), label)
    a = op.dense()
    assert np.array_equal(a, a.T)
    assert op.entry(3, 5) == op.entry(5, 3)
    r = morse_index(op)
    assert r.n == op.n


def test_small_grid_rejected():
    prof = _profile(1.0, Branch.PLUS, 16)
    assemble(prof, "Lplus")
    small = build_profile(prof.params, ProfileGrid(prof.grid.half_length, 12))
    with pytest.raises(ConfigurationError):
        assemble(small, "Lplus")


def test_boundary_condition_must_match_parity():
    prof = _profile(1.0, Branch.PLUS, 64)
    with pytest.raises(ConfigurationError):
        assemble(prof, "Lplus", BoundaryCondition.NEUMANN_AT_ZERO)


def test_translational_kernel():
    for branch in Branch:
        prof = _profile(1.0, branch, 4096)
        r = assemble(prof, OperatorLabel.LPLUS).apply(prof.u_prime_values)
        assert np.max(np.abs(r)) < 1e-4


@pytest.mark.parametrize("branch", list(Branch))
def test_translational_kernel_fourth_order(branch):
    errs = []
    for n in (1024, 2048):
        prof = _profile(2.0, branch, n)
        r = assemble(prof, OperatorLabel.LPLUS).apply(prof.u_prime_values)
        errs.append(np.max(np.abs(r[2:-2])))
    assert 8 <= errs[0] / errs[1] <= 32


def test_nls_lminus_kernel():
    prof = nls_profile(ProfileGrid(40.0, 4096))
    assert np.max(np.abs(assemble(prof, "Lminus").apply(prof.u_values))) < 1e-4


def test_constant_potential_bottom():
    p = params_of_alpha(2.0)
    grid = ProfileGrid(40.0, 801)
    u = np.full(grid.n_points, p.psi0)
    prof = SolitonProfile(p, grid, u, np.zeros_like(u), np.zeros_like(u))
    op = assemble(prof, OperatorLabel.LPLUS)
    lowest = sla.eigvals_banded(op.band_matrix, select="i", select_range=(0, 0))[0]
    assert lowest == pytest.approx(1 - 6 * p.psi0**2, abs=2e-3)
    assert lowest > 1 - 6 * p.psi0**2


def test_essential_edge_examples():
    assert essential_edge(0.0) == 1.0
    psi0 = params_of_alpha(1.0).psi0
    p2 = 0.294572**2
    assert essential_edge(0.294572) == pytest.approx(math.sqrt((1 - 6 * p2) * (1 - 2 * p2)), rel=1e-14)
    assert essential_edge(psi0) == pytest.approx(0.629423, abs=1e-6)
    assert essential_edge(math.sqrt(1 / 6)) == 0.0
    with pytest.raises(DomainError):
        essential_edge(0.5)


@given(st.lists(st.floats(min_value=0.3, max_value=8.0), min_size=2, max_size=10, unique=True))
def test_edge_increasing_in_alpha(values):
    edges = [essential_edge(params_of_alpha(a).psi0) for a in sorted(values)]
    assert all(b > a for a, b in zip(edges, edges[1:]))
    assert edges[-1] < 1


def test_morse_examples_alpha_two():
    plus, minus = _profile(2.0, Branch.PLUS, 4096), _profile(2.0, Branch.MINUS, 4096)
    lp = morse_index(assemble(minus, "Lplus"))
    assert (lp.n_negative, lp.n_zero) == (1, 1)
    lm = morse_index(assemble(plus, "Lminus"))
    assert (lm.n_negative, lm.n_zero) == (0, 0)
    lm = morse_index(assemble(minus, "Lminus"))
    assert (lm.n_negative, lm.n_zero) == (1, 0)


@pytest.mark.parametrize("branch", list(Branch))
@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0, 4.0, 6.0])
def test_morse_table_with_pinned_kernel(alpha, branch):
    prof = _profile(alpha, branch)
    lp = pin_kernel(assemble(prof, "Lplus"), prof.u_prime_values)
    lm = assemble(prof, "Lminus")
    expected = (1, 0) if branch is Branch.PLUS else (1, 1)
    assert (morse_index(lp).n_negative, morse_index(lm).n_negative) == expected
    assert morse_index(lp).n_zero == 1


def test_nls_morse():
    prof = nls_profile(ProfileGrid(40.0, 2048))
    lp = pin_kernel(assemble(prof, "Lplus"), prof.u_prime_values)
    lm = pin_kernel(assemble(prof, "Lminus"), prof.u_values)
    assert (morse_index(lp).n_negative, morse_index(lp).n_zero) == (1, 1)
    assert (morse_index(lm).n_negative, morse_index(lm).n_zero) == (0, 1)


@pytest.mark.parametrize("parity", list(Parity))
def test_ldl_counts_agree_with_eigensolver(parity):
    op = assemble(_profile(1.0, Branch.MINUS, 300, parity), "Lminus")
    w = sla.eigvals_banded(op.band_matrix)
    for tol in (1e-6, 0.05, 0.5):
        r = morse_index(op, tol)
        assert r.n_negative == np.sum(w < -tol)
        assert r.n_zero == np.sum(np.abs(w) < tol)


def test_inertia_serialization():
    r = morse_index(assemble(_profile(1.0, Branch.PLUS, 64), "Lplus"))
    assert set(r.to_dict()) == {"negative", "zero", "positive", "zero_tol"}


def test_coo_export():
    op = assemble(_profile(1.0, Branch.PLUS, 32), "Lplus")
    rows = [line.split() for line in op.to_coo_text().splitlines()]
    a = op.dense()
    assert len(rows) == np.count_nonzero(a)
    i, j, v = rows[7]
    assert float(v) == a[int(i), int(j)]


def test_solve_indefinite_examples():
    prof = _profile(2.0, Branch.MINUS)
    lm = assemble(prof, "Lminus")
    w = solve_indefinite(lm, prof.u_prime_values)
    assert prof.grid.inner(w, prof.u_prime_values) > 0
    np.testing.assert_array_equal(solve_indefinite(lm, np.zeros(lm.n)), 0.0)


def test_scaling_family_oracle():
    prof = nls_profile(ProfileGrid(40.0, 2048))
    lp = pin_kernel(assemble(prof, "Lplus"), prof.u_prime_values)
    x = solve_indefinite(lp, prof.u_values)
    assert prof.grid.inner(x, prof.u_values) == pytest.approx(-0.5, abs=1e-3)
    # L+ d/dw[sqrt(w) sech(sqrt(w) x)] = -u0 at w = 1
    oracle = -0.5 * (prof.u_values + prof.x * prof.u_prime_values)
    assert np.max(np.abs(x - oracle)) < 1e-5
    assert abs(prof.grid.inner(x, prof.u_prime_values)) < 1e-10


def test_solvability_error():
    prof = nls_profile(ProfileGrid(40.0, 512))
    lp = pin_kernel(assemble(prof, "Lplus"), prof.u_prime_values)
    with pytest.raises(SolvabilityError):
        solve_indefinite(lp, prof.u_prime_values)


def test_even_grid_solve_matches_full():
    full = nls_profile(ProfileGrid(40.0, 2001))
    even = nls_profile(ProfileGrid(40.0, 1001, Parity.EVEN))
    lp_full = pin_kernel(assemble(full, "Lplus"), full.u_prime_values)
    a = full.grid.inner(solve_indefinite(lp_full, full.u_values), full.u_values)
    b = even.grid.inner(solve_indefinite(assemble(even, "Lplus"), even.u_values), even.u_values)
    assert a == pytest.approx(b, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 4.0, 6.0])
def test_d_matrix_positive(alpha):
    assert d_matrix(_profile(alpha, Branch.MINUS)) > 0
    if alpha == 1.0:
        assert d_matrix(_profile(alpha, Branch.PLUS)) > 0


def test_d_matrix_nls():
    prof = nls_profile(ProfileGrid(40.0, 2048))
    assert d_matrix(prof) == pytest.approx(0.5, abs=1e-3)
    # oracle L-(x u0) = -2 u0'
    lm = pin_kernel(assemble(prof, "Lminus"), prof.u_values)
    sol = solve_indefinite(lm, prof.u_prime_values)
    assert np.max(np.abs(sol + 0.5 * prof.x * prof.u_values)) < 1e-5


def test_d_matrix_needs_full_grid():
    with pytest.raises(ConfigurationError):
        d_matrix(_profile(1.0, Branch.MINUS, 256, Parity.EVEN))


@pytest.mark.parametrize("alpha", [1.0, 3.0])
def test_phi_identity(alpha):
    assert phi_identity_residual(_profile(alpha, Branch.MINUS, 4096)) < 1e-4


def test_phi_identity_requires_minus():
    with pytest.raises(ValueError):
        phi_identity_residual(_profile(1.0, Branch.PLUS, 64))


@pytest.mark.parametrize("alpha", [1.0, 3.0])
def test_lminus_form_negative_and_consistent(alpha):
    prof = _profile(alpha, Branch.MINUS, 4096)
    a = lminus_quadratic_form(prof, "integral")
    b = lminus_quadratic_form(prof, "matrix")
    assert a < 0
    assert b == pytest.approx(a, rel=1e-4)


def test_pin_kernel_removes_only_the_kernel():
    prof = _profile(1.0, Branch.MINUS, 400)
    op = assemble(prof, "Lplus")
    pinned = pin_kernel(op, prof.u_prime_values)
    w0 = np.linalg.eigvalsh(op.dense())
    w1 = np.linalg.eigvalsh(pinned.dense())
    k = np.argmin(np.abs(w0))
    expected = np.sort(np.concatenate([np.delete(w0, k), [0.0]]))
    np.testing.assert_allclose(w1, expected, atol=1e-9)
