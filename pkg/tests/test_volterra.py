from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_operator, random_skew
from rqso.simplex import barycenter, vertex
from rqso.volterra import (UNDERFLOW_FLOOR, VolterraError, VolterraOperator, apply, apply_tensor,
                           check_doubling_bound, check_tensor, enumerate_extremal, extremal_operator,
                           matrix_from_tensor, operator_from_spec, squaring_operator,
                           tensor_from_matrix)


def brute_force(p, x):
    """x'_k = sum_ij p_ij,k x_i x_j, term by term."""
    m = len(x)
    return np.array([sum(p[i][j][k] * x[i] * x[j] for i in range(m) for j in range(m))
                     for k in range(m)])


def exact_apply(A, x):
    """Volterra map in rational arithmetic."""
    m = len(x)
    return [x[k] * (1 + sum(A[k][i] * x[i] for i in range(m))) for k in range(m)]


@st.composite
def operator_and_point(draw, min_m=2, max_m=7, extremal=False):
    seed = draw(st.integers(0, 2**32 - 1))
    m = draw(st.integers(min_m, max_m))
    rng = np.random.default_rng(seed)
    return random_operator(rng, m, extremal), rng.dirichlet(np.ones(m))


class TestOperator:
    def test_rejects_non_skew(self):
        A = np.array([[0.0, 0.5], [0.2, 0.0]])
        with pytest.raises(VolterraError, match="skew"):
            VolterraOperator(A)

    def test_rejects_large_entries(self):
        A = np.array([[0.0, 3.0], [-3.0, 0.0]])
        with pytest.raises(VolterraError):
            VolterraOperator(A)

    def test_clamps_within_tolerance(self):
        A = np.array([[0.0, 1.0 + 5e-13], [-1.0 - 5e-13, 0.0]])
        assert VolterraOperator(A).A[0, 1] == 1.0

    def test_matrix_read_only(self):
        V = squaring_operator(3, 0)
        with pytest.raises(ValueError):
            V.A[0, 1] = 0.0

    def test_dict_roundtrip(self):
        V = extremal_operator("101")
        assert VolterraOperator.from_dict(V.to_dict()) == V

    def test_dimension_mismatch(self):
        with pytest.raises(VolterraError, match="dimension"):
            apply(squaring_operator(3, 0), [0.5, 0.5])


class TestApply:
    def test_vertex_fixed_points(self, rng):
        for m in range(2, 8):
            for _ in range(20):
                V = random_operator(rng, m, extremal=bool(rng.integers(2)))
                for i in range(m):
                    assert np.array_equal(apply(V, vertex(m, i)), vertex(m, i))

    def test_squaring_two_types(self):
        # oracle: full tensor of V_1 evaluated term by term
        V = squaring_operator(2, 0)
        p = tensor_from_matrix(V)
        assert brute_force(p, [0.5, 0.5]).tolist() == [0.25, 0.75]
        assert apply(V, [0.5, 0.5]).tolist() == [0.25, 0.75]
        assert apply(squaring_operator(2, 1), [0.5, 0.5]).tolist() == [0.75, 0.25]

    def test_squaring_barycenter_three_types(self):
        third = Fraction(1, 3)
        A = [[Fraction(int(a)) for a in row] for row in squaring_operator(3, 0).A]
        expected = exact_apply(A, [third] * 3)
        assert expected == [Fraction(1, 9), Fraction(4, 9), Fraction(4, 9)]
        y = apply(squaring_operator(3, 0), barycenter(3))
        assert np.allclose(y, [float(v) for v in expected], rtol=0, atol=1e-15)

    def test_zero_matrix_is_identity(self, rng):
        V = VolterraOperator(np.zeros((3, 3)))
        x = rng.dirichlet(np.ones(3))
        assert np.allclose(apply(V, x), x, rtol=0, atol=1e-16)

    def test_agrees_with_tensor_oracle(self, rng):
        for _ in range(1000):
            m = int(rng.integers(2, 8))
            V = random_operator(rng, m)
            x = rng.dirichlet(np.ones(m))
            p = tensor_from_matrix(V)
            assert np.max(np.abs(apply(V, x) - brute_force(p, x))) <= 1e-12
            assert np.max(np.abs(apply(V, x) - apply_tensor(p, x))) <= 1e-12

    def test_underflow_flush(self):
        V = squaring_operator(2, 0)
        y = apply(V, [1e-160, 1 - 1e-160])
        assert y[0] == 0.0 and y[1] == 1.0
        assert UNDERFLOW_FLOOR == 1e-300

    @given(operator_and_point())
    def test_interior_preserved(self, pair):
        V, x = pair
        x = x[x > 1e-100]
        if x.size < 2:
            return
        x = x / x.sum()
        V = VolterraOperator(V.A[: x.size, : x.size])
        assert np.all(apply(V, x) > 0)

    @given(operator_and_point(min_m=3))
    def test_zero_coordinates_stay_zero(self, pair):
        V, x = pair
        x = x.copy()
        x[0] = 0.0
        x /= x.sum()
        y = apply(V, x)
        assert y[0] == 0.0
        # and the converse: positive stays positive
        pos = x > 1e-100
        assert np.all(y[pos] > 0)


class TestTensor:
    def test_zero_matrix_tensor(self):
        p = tensor_from_matrix(VolterraOperator(np.zeros((2, 2))))
        assert p[0, 1, 0] == p[0, 1, 1] == 0.5

    def test_extreme_entry(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        p = tensor_from_matrix(VolterraOperator(A))
        # a_21 = -1 means type 2 never wins against type 1
        assert p[0, 1, 1] == 0.0 and p[0, 1, 0] == 1.0

    def test_matrix_from_tensor_symbolwise(self):
        p = np.zeros((2, 2, 2))
        p[0, 0, 0] = p[1, 1, 1] = 1.0
        p[0, 1, 0] = p[1, 0, 0] = 1.0
        V = matrix_from_tensor(p)
        assert V.A[0, 1] == 1.0 and V.A[1, 0] == -1.0

    def test_rejects_non_volterra(self):
        p = tensor_from_matrix(VolterraOperator(np.zeros((3, 3))))
        p[0, 1, 2] = p[1, 0, 2] = 0.1
        p[0, 1, 0] -= 0.1
        p[1, 0, 0] -= 0.1
        check_tensor(p, volterra=False)
        with pytest.raises(VolterraError, match="Volterra"):
            matrix_from_tensor(p)

    def test_rows_sum_to_one(self, rng):
        for m in range(2, 7):
            p = tensor_from_matrix(random_operator(rng, m))
            assert np.allclose(p.sum(axis=2), 1.0, rtol=0, atol=1e-12)
            assert np.array_equal(p, p.transpose(1, 0, 2))

    def test_roundtrip_1000(self, rng):
        for _ in range(1000):
            m = int(rng.integers(2, 8))
            V = random_operator(rng, m)
            back = matrix_from_tensor(tensor_from_matrix(V))
            assert np.max(np.abs(back.A - V.A)) <= 1e-15
            p = tensor_from_matrix(V)
            assert np.max(np.abs(tensor_from_matrix(back) - p)) <= 1e-15


class TestSquaring:
    @pytest.mark.parametrize("m", range(2, 8))
    def test_squares_only_k(self, m):
        x = barycenter(m)
        for k in range(m):
            V = squaring_operator(m, k)
            y = apply(V, x)
            hits = [i for i in range(m) if abs(y[i] - x[i] ** 2) <= 1e-15]
            assert hits == [k]
            assert V.squares() == [k]

    def test_custom_block(self, rng):
        block = random_skew(rng, 4)
        V = squaring_operator(4, 2, block=block)
        assert V.squares() == [2]
        keep = [0, 1, 3]
        assert np.array_equal(V.A[np.ix_(keep, keep)], block[np.ix_(keep, keep)])

    def test_zero_block_interior_run(self, rng):
        V = squaring_operator(3, 0)
        x = rng.dirichlet(np.ones(3))
        prev = x[0]
        for _ in range(20):
            x = apply(V, x)
            assert x[0] < prev or x[0] == 0.0
            prev = x[0]
        assert x[0] == 0.0


class TestExtremal:
    @pytest.mark.parametrize("m, count", [(2, 2), (3, 8), (4, 64)])
    def test_count(self, m, count):
        ops = enumerate_extremal(m)
        assert len(ops) == count
        assert len(set(ops)) == count
        off = ~np.eye(m, dtype=bool)
        for V in ops:
            assert np.array_equal(V.A, -V.A.T)
            assert np.all(np.abs(V.A[off]) == 1.0)

    def test_bit_addressing(self):
        V = extremal_operator("101")
        assert V.A[0, 1] == 1 and V.A[0, 2] == -1 and V.A[1, 2] == 1

    def test_bad_length(self):
        with pytest.raises(VolterraError):
            extremal_operator("11")

    def test_spec_strings(self):
        assert operator_from_spec("squaring:2", m=3) == squaring_operator(3, 1)
        assert operator_from_spec("extremal:111", m=3).m == 3
        with pytest.raises(VolterraError):
            operator_from_spec("squaring:4", m=3)


class TestDoubling:
    def test_squaring_barycenter(self):
        assert check_doubling_bound(squaring_operator(3, 0), barycenter(3))

    @given(operator_and_point(extremal=True))
    def test_extremal_random(self, pair):
        assert check_doubling_bound(*pair)

    def test_raw_bad_matrix_can_fail(self):
        bad = np.array([[0.0, 3.0], [-3.0, 0.0]])
        assert not check_doubling_bound(bad, [0.5, 0.5])

    def test_many_pairs(self, rng):
        # vectorized sweep: every coordinate at most doubles
        from rqso.volterra import volterra_step
        for m in (2, 3, 5, 8):
            A = np.stack([random_skew(rng, m, extremal=bool(e)) for e in rng.integers(0, 2, 25_000)])
            x = rng.dirichlet(np.ones(m), size=25_000)
            y, _, _ = volterra_step(A, x)
            assert np.all(y <= 2 * x + 1e-12)
