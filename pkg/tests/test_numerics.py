import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dcsi.errors import ContractError, SingularBasisError, SingularMatrixError
from dcsi.numerics import phase_align, proj_perp, real_embedding, sin2_real_angle, solve_small

e1 = np.array([1, 0], dtype=complex)
e2 = np.array([0, 1], dtype=complex)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def cvecs(k):
    return st.tuples(arrays(float, k, elements=finite), arrays(float, k, elements=finite)).map(
        lambda p: p[0] + 1j * p[1])


class TestProjPerp:
    def test_orthogonal_input_unchanged(self):
        np.testing.assert_allclose(proj_perp(e1, e2), e2)

    def test_input_in_span_vanishes(self):
        np.testing.assert_allclose(proj_perp(e1, e1), 0, atol=1e-15)

    def test_diagonal_direction(self):
        a = np.array([1, 1]) / math.sqrt(2)
        out = proj_perp(a, e1)
        np.testing.assert_allclose(out, [0.5, -0.5], atol=1e-15)
        assert abs(np.vdot(a, out)) < 1e-15

    def test_rank_deficient_basis(self):
        A = np.array([[1, 2], [1, 2], [0, 0]], dtype=complex)
        with pytest.raises(SingularBasisError):
            proj_perp(A, np.ones(3))

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            proj_perp(np.ones(3), np.ones(2))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_projector_properties(self, s):
        rng = np.random.default_rng(s)
        A = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
        x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        p = proj_perp(A, x)
        scale = np.linalg.norm(x) * np.linalg.norm(A, axis=0)
        assert np.all(np.abs(A.conj().T @ p) <= 1e-10 * scale)
        np.testing.assert_allclose(proj_perp(A, p), p, atol=1e-10 * np.linalg.norm(x))
        lhs = np.linalg.norm(x) ** 2
        rhs = np.linalg.norm(p) ** 2 + np.linalg.norm(x - p) ** 2
        assert abs(lhs - rhs) <= 1e-10 * lhs


class TestSolveSmall:
    def test_identity(self):
        b = np.array([1 + 2j, -3, 0.5j])
        np.testing.assert_allclose(solve_small(np.eye(3), b), b)

    def test_diagonal(self):
        np.testing.assert_allclose(solve_small(np.diag([2.0, 4.0]), [2.0, 4.0]), [1, 1])

    def test_random_residual(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            M = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)) + 3 * np.eye(4)
            b = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            y = solve_small(M, b)
            assert np.linalg.norm(M @ y - b) <= 1e-9 * np.linalg.norm(b)

    def test_needs_pivoting(self):
        M = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(solve_small(M, [2.0, 3.0]), [3.0, 2.0])

    def test_matrix_rhs(self):
        M = np.array([[2.0, 1.0], [1.0, 3.0]])
        np.testing.assert_allclose(M @ solve_small(M, np.eye(2)), np.eye(2), atol=1e-15)

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            solve_small(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 1.0])

    def test_not_square(self):
        with pytest.raises(ContractError):
            solve_small(np.ones((2, 3)), [1.0, 1.0])


class TestPhaseAlign:
    def test_already_aligned(self):
        np.testing.assert_allclose(phase_align([1, 1j]), [1, 1j])

    def test_rotation(self):
        out = phase_align([1j, 1])
        np.testing.assert_allclose(out, [1, -1j], atol=1e-15)

    def test_sign_flip(self):
        np.testing.assert_allclose(phase_align([-2, 0]), [2, 0])

    def test_zero_first_entry_uses_largest(self):
        out = phase_align([0, 0.1j, -3])
        assert out[2].real > 0 and abs(out[2].imag) < 1e-15
        assert abs(np.linalg.norm(out) - np.linalg.norm([0, 0.1, 3])) < 1e-12

    def test_zero_vector(self):
        with pytest.raises(ContractError):
            phase_align([0, 0])

    @settings(max_examples=100, deadline=None)
    @given(cvecs(3))
    def test_norm_preserved_and_first_real(self, x):
        if np.linalg.norm(x) == 0:
            return
        out = phase_align(x)
        assert abs(np.linalg.norm(out) - np.linalg.norm(x)) <= 1e-12 * max(1.0, np.linalg.norm(x))
        if abs(x[0]) >= 1e-14 * np.linalg.norm(x):
            assert out[0].real >= 0 and abs(out[0].imag) <= 1e-12 * abs(out[0])


class TestSin2:
    def test_identical(self):
        assert sin2_real_angle(e1, e1) == 0.0

    def test_orthogonal(self):
        assert sin2_real_angle(e1, e2) == pytest.approx(1.0)

    def test_thirty_degrees(self):
        th = math.pi / 6
        assert sin2_real_angle(e1, [math.cos(th), math.sin(th)]) == pytest.approx(0.25, abs=1e-15)

    def test_embedding_layout(self):
        np.testing.assert_allclose(real_embedding(np.array([1, 2 + 3j, 4 - 5j])), [1, 2, 4, 3, -5])

    def test_not_unit(self):
        with pytest.raises(ContractError):
            sin2_real_angle([2, 0], e1)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_symmetric(self, s):
        rng = np.random.default_rng(s)
        u = phase_align(rng.standard_normal(3) + 1j * rng.standard_normal(3))
        v = phase_align(rng.standard_normal(3) + 1j * rng.standard_normal(3))
        u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
        assert sin2_real_angle(u, v) == sin2_real_angle(v, u)
        assert 0.0 <= sin2_real_angle(u, v) <= 1.0
