import numpy as np
import pytest

from frndp import (
    GraverSet,
    apply_reservation,
    augment,
    conformal_filter,
    integer_kernel_basis,
    is_conformal,
    lattice_from_differences,
    load_graver,
    pottier_graver,
    save_graver,
    sign_canonical,
    solve_ue,
)
from frndp.graver import negate
from conftest import N4_BALANCE, N4_DESIGNS, N4_FEASIBLE, N4_KERNEL

# the fixture's complete basis, column for column
N4_FULL_GRAVER = {
    (1, -1, 0, 1, 0, 0), (1, 0, -1, 0, 1, 0), (0, 1, -1, 0, 0, 1),
    (-1, 1, 0, -1, 0, 0), (-1, 0, 1, 0, -1, 0), (0, -1, 1, 0, 0, -1),
    (1, 0, -1, 1, 0, 1), (-1, 0, 1, -1, 0, -1),
    (0, -1, 1, 1, -1, 0), (0, 1, -1, -1, 1, 0),
    (1, -1, 0, 0, 1, -1), (-1, 1, 0, 0, -1, 1),
    (0, 0, 0, 1, -1, 1), (0, 0, 0, -1, 1, -1),
}


def test_conformal_examples():
    assert is_conformal((1, 0, -1), (2, 0, -1))
    assert not is_conformal((1, 0), (-1, 0))
    assert is_conformal((0, 0, 0), (5, -2, 7))


def test_conformal_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        is_conformal((1, 0), (1, 0, 0))


def test_differences_match_kernel():
    diffs = lattice_from_differences(N4_FEASIBLE)
    assert set(diffs) == N4_KERNEL
    assert len(diffs) == 6


def test_differences_of_identical_solutions():
    assert lattice_from_differences([(1, 0), (1, 0), (1, 0)]) == ()


def test_differences_affinely_independent():
    diffs = lattice_from_differences([(0, 0), (1, 1), (2, 3)])
    assert len(diffs) == 3


def test_filter_retains_kernel():
    gset = conformal_filter(N4_KERNEL, kernel_matrix=N4_BALANCE)
    assert set(gset.vectors) == N4_KERNEL


def test_filter_removes_dominated():
    gset = conformal_filter([(1, 1), (1, 0), (0, 1)])
    assert set(gset.vectors) == {(1, 0), (0, 1)}


def test_filter_matches_definition_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        cands = {tuple(int(v) for v in rng.integers(-2, 3, size=4)) for _ in range(8)}
        cands = {c for c in cands if any(c)}
        # definition-level oracle over the sign-symmetric pool
        pool = {sign_canonical(c) for c in cands}
        full = pool | {negate(c) for c in pool}
        minimal = {
            v for v in full
            if not any(u != v and is_conformal(u, v) for u in full)
        }
        expected = {sign_canonical(v) for v in minimal}
        assert set(conformal_filter(cands).vectors) == expected


def test_kernel_basis_spans():
    basis = integer_kernel_basis(N4_BALANCE)
    assert len(basis) == 3                    # 6 arcs - 3 independent rows
    for v in basis:
        assert not np.any(N4_BALANCE @ np.array(v))


def test_pottier_reproduces_full_basis():
    gset = pottier_graver(N4_BALANCE)
    assert len(gset.vectors) == 7
    assert set(gset.signed_vectors) == N4_FULL_GRAVER


@pytest.mark.parametrize("matrix,expected", [
    ([[1, -1]], {(1, 1), (-1, -1)}),
    ([[1, 1]], {(1, -1), (-1, 1)}),
])
def test_pottier_tiny_matrices(matrix, expected):
    assert set(pottier_graver(np.array(matrix)).signed_vectors) == expected


def test_pottier_size_guard():
    with pytest.raises(ValueError, match="guard"):
        pottier_graver(np.ones((1, 13), dtype=int))


def test_pottier_members_in_kernel():
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = rng.integers(-2, 3, size=(2, 5))
        gset = pottier_graver(a)
        for g in gset.vectors:
            assert not np.any(a @ np.array(g))
        for u in gset.signed_vectors:
            for v in gset.signed_vectors:
                if u != v:
                    assert not is_conformal(u, v)


def test_partial_subset_of_full():
    partial = conformal_filter(lattice_from_differences(N4_FEASIBLE))
    full = pottier_graver(N4_BALANCE)
    assert set(partial.vectors) <= set(full.signed_vectors)


def test_graverset_scan_order():
    gset = conformal_filter(N4_KERNEL)
    # ascending 1-norm first, descending lexicographic inside a tie
    norms = [sum(abs(e) for e in v) for v in gset.vectors]
    assert norms == sorted(norms)
    assert gset.vectors[0] == (1, 0, -1, 0, 1, 0)


def test_graverset_rejects_non_kernel():
    with pytest.raises(ValueError, match="kernel"):
        GraverSet(((1, 0, 0, 0, 0, 0),), kernel_matrix=N4_BALANCE)


def test_augment_walk_step(n4):
    def feasible(y):
        return all(v in (0, 1) for v in y) and \
            not np.any(N4_BALANCE @ np.array(y) - np.array([1, 0, 0]))

    def evaluate(y):
        from frndp import FrDesign
        design = FrDesign((0,), (tuple(int(i) for i in np.flatnonzero(y)),))
        return solve_ue(apply_reservation(n4, design)).total_time

    current = (0, 0, 1, 0, 0, 0)
    step = augment(current, (1, 0, -1, 0, 1, 0), feasible, evaluate)
    assert step == (1, 0, 0, 0, 1, 0)         # the 507 -> 243 improvement

    # violating binary bounds is rejected before evaluation
    assert augment(current, (1, -1, 0, 1, 0, 0), feasible, evaluate) is None
    # a non-improving direction is rejected on strict comparison
    assert augment(step, (-1, 0, 1, 0, -1, 0), feasible, evaluate) is None


def test_graver_text_roundtrip(tmp_path):
    gset = conformal_filter(N4_KERNEL, kernel_matrix=N4_BALANCE)
    path = tmp_path / "basis.txt"
    save_graver(gset, path)
    loaded = load_graver(path, kernel_matrix=N4_BALANCE)
    assert loaded.vectors == gset.vectors
