import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvborn.errors import DegenerateStateError, DomainError, InvalidStateError, UsageError
from cvborn.fock import (
    CutoffSpec,
    DensityMatrix,
    FockIndexMap,
    PureState,
    basis_index,
    enumerate_basis,
    normalize,
    outer_product,
    partial_trace,
    space_dimension,
)

from conftest import random_density


@pytest.mark.parametrize("d,c,expected", [(1, 7, 7), (2, 3, 6), (3, 1, 1), (4, 10, 715)])
def test_space_dimension(d, c, expected):
    assert space_dimension(CutoffSpec(d, c)) == expected


@pytest.mark.parametrize(
    "d,c,expected",
    [
        (2, 2, [(0, 0), (0, 1), (1, 0)]),
        (1, 3, [(0,), (1,), (2,)]),
        (2, 1, [(0, 0)]),
        (2, 3, [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]),
    ],
)
def test_enumerate_basis_examples(d, c, expected):
    assert enumerate_basis(CutoffSpec(d, c)) == expected


@given(st.integers(1, 4), st.integers(1, 6))
def test_basis_matches_brute_force(d, c):
    # oracle: filter the full product grid, sort by (total, lexicographic)
    brute = sorted(
        (v for v in itertools.product(range(c), repeat=d) if sum(v) < c),
        key=lambda v: (sum(v), v),
    )
    basis = enumerate_basis(CutoffSpec(d, c))
    assert basis == brute
    assert len(basis) == comb(d + c - 1, d)


@given(st.integers(1, 4), st.integers(1, 6))
def test_index_roundtrip(d, c):
    imap = FockIndexMap.of(d, c)
    for i in range(imap.dim):
        assert imap.index_of(imap.occupation_of(i)) == i


def test_basis_index_examples(spec22):
    imap = FockIndexMap.of(2, 2)
    assert basis_index(imap, (0, 0)) == 0
    assert basis_index(imap, (1, 0)) == 2
    with pytest.raises(DomainError):
        basis_index(imap, (1, 1))
    with pytest.raises(DomainError):
        basis_index(imap, (0, -1))


def test_cutoff_spec_validation():
    for bad in ((0, 3), (2, 0), (-1, 2)):
        with pytest.raises(UsageError):
            CutoffSpec(*bad)


def test_outer_product_vacuum_and_rank(rng):
    spec = CutoffSpec(2, 4)
    rho = outer_product(PureState.vacuum(spec)).entries
    expected = np.zeros_like(rho)
    expected[0, 0] = 1
    np.testing.assert_array_equal(rho, expected)

    imap = FockIndexMap.of(2, 4)
    amps = rng.normal(size=imap.dim) + 1j * rng.normal(size=imap.dim)
    psi = PureState(imap, amps).normalized()
    rho = outer_product(psi)
    assert abs(rho.trace - 1) < 1e-12
    rho.validate()
    # rank one: every 2x2 minor vanishes
    e = rho.entries
    for i, j in itertools.combinations(range(imap.dim), 2):
        assert abs(e[i, i] * e[j, j] - e[i, j] * e[j, i]) < 1e-10


def test_dense_roundtrip(rng):
    imap = FockIndexMap.of(3, 4)
    amps = rng.normal(size=imap.dim) + 1j * rng.normal(size=imap.dim)
    psi = PureState(imap, amps)
    dense = psi.to_dense()
    assert dense.shape == (4, 4, 4)
    for i, occ in enumerate(imap.basis):
        assert dense[tuple(occ)] == amps[i]
    assert np.count_nonzero(dense) == imap.dim
    np.testing.assert_array_equal(PureState.from_dense(dense).amplitudes, amps)


def test_partial_trace_examples():
    spec = CutoffSpec(2, 2)
    rho = outer_product(PureState.vacuum(spec))
    np.testing.assert_allclose(partial_trace(rho, [1]).entries, [[1, 0], [0, 0]])

    bell = PureState.superposition(spec, [(1, (0, 1)), (1, (1, 0))])
    red = partial_trace(outer_product(bell), [0])
    np.testing.assert_allclose(red.entries, np.diag([0.5, 0.5]), atol=1e-15)


def brute_partial_trace(rho: DensityMatrix, keep):
    """Direct index contraction over all pairs of basis states."""
    basis = rho.index_map.basis
    traced = [m for m in range(rho.modes) if m not in keep]
    reduced = FockIndexMap.of(len(keep), rho.cutoff)
    out = np.zeros((reduced.dim, reduced.dim), dtype=complex)
    for i, ni in enumerate(basis):
        for j, nj in enumerate(basis):
            if all(ni[t] == nj[t] for t in traced):
                a = reduced.index_of([ni[k] for k in keep])
                b = reduced.index_of([nj[k] for k in keep])
                out[a, b] += rho.entries[i, j]
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 3), st.integers(1, 5), st.data())
def test_partial_trace_matches_brute_force(d, c, data):
    seed = data.draw(st.integers(0, 2**32 - 1))
    keep = data.draw(st.lists(st.integers(0, d - 1), min_size=1, max_size=d, unique=True))
    rho = random_density(d, c, np.random.default_rng(seed))
    red = partial_trace(rho, keep)
    np.testing.assert_allclose(red.entries, brute_partial_trace(rho, keep), atol=1e-13)
    assert abs(red.trace - rho.trace) < 1e-10
    red.validate()
    assert np.linalg.eigvalsh(red.entries).min() > -1e-12


def test_partial_trace_composes(rng):
    rho = random_density(3, 4, rng)
    staged = partial_trace(partial_trace(rho, [0, 1]), [0])
    direct = partial_trace(rho, [0])
    np.testing.assert_allclose(staged.entries, direct.entries, atol=1e-14)


def test_partial_trace_errors(rng):
    rho = random_density(2, 3, rng)
    with pytest.raises(UsageError):
        partial_trace(rho, [])
    with pytest.raises(UsageError):
        partial_trace(rho, [2])


def test_normalize():
    imap = FockIndexMap.of(1, 3)
    two = DensityMatrix(imap, np.diag([2.0, 0, 0]))
    np.testing.assert_array_equal(normalize(two).entries, np.diag([1.0, 0, 0]))
    one = DensityMatrix(imap, np.diag([0.25, 0.75, 0]))
    np.testing.assert_allclose(normalize(one).entries, one.entries, atol=1e-14)
    with pytest.raises(DegenerateStateError):
        normalize(DensityMatrix(imap, np.zeros((3, 3))))


def test_validate_reports_all_problems():
    imap = FockIndexMap.of(1, 2)
    bad = DensityMatrix(imap, np.array([[-0.1, 1.0], [0.0, 0.5]]))
    with pytest.raises(InvalidStateError) as info:
        bad.validate()
    message = str(info.value)
    assert "Hermitian" in message and "negative" in message and "trace" in message
