import numpy as np
import pytest

import linfmor as lm
from linfmor.errors import DimensionMismatch, SingularPencil
from linfmor.system import (pack, param_length, poles, reduced_transfer_eval,
                            shifted_solve, transfer_eval, unpack)

from conftest import make_reduced, make_stable_system


def siso(a=-1.0, e=1.0, b=1.0, c=1.0, d=0.0):
    return lm.DescriptorSystem([[e]], [[a]], [[b]], [[c]], [[d]])


class TestTransferEval:
    def test_one_pole_at_zero(self):
        assert transfer_eval(siso(), 0.0) == pytest.approx(1.0)

    def test_zero_input_map_returns_d(self):
        rng = np.random.default_rng(0)
        sys = make_stable_system(rng, 4, 2, 3, d_scale=1.0)
        sys = lm.DescriptorSystem(sys.E, sys.A, np.zeros((4, 2)), sys.C, sys.D)
        for s in (0.0, 2j, 1 + 3j):
            assert np.allclose(transfer_eval(sys, s), sys.D)

    def test_matches_adjugate_inverse_3x3(self):
        # independent oracle: explicit cofactor inverse of the 3x3 pencil
        rng = np.random.default_rng(1)
        sys = make_stable_system(rng, 3, 1, 1)
        s = 2j
        T = s * sys.E - sys.A

        def cof(M, i, j):
            sub = np.delete(np.delete(M, i, axis=0), j, axis=1)
            return (-1) ** (i + j) * (sub[0, 0] * sub[1, 1] - sub[0, 1] * sub[1, 0])

        adj = np.array([[cof(T, j, i) for j in range(3)] for i in range(3)])
        Hexp = sys.C @ (adj / np.linalg.det(T)) @ sys.B + sys.D
        H = transfer_eval(sys, s)
        assert np.abs(H - Hexp).max() <= 1e-12 * max(1.0, np.abs(Hexp).max())

    def test_pole_raises_singular_pencil(self):
        sys = siso(a=1.0)  # pole at s = 1
        with pytest.raises(SingularPencil):
            transfer_eval(sys, 1.0)

    def test_conjugate_symmetry(self):
        rng = np.random.default_rng(2)
        sys = make_stable_system(rng, 6, 2, 2, e_mode="general", d_scale=0.3)
        for w in (0.3, 1.7, 12.0):
            assert np.allclose(transfer_eval(sys, -1j * w), transfer_eval(sys, 1j * w).conj())

    def test_solve_residual_small(self):
        rng = np.random.default_rng(3)
        sys = make_stable_system(rng, 8, 3, 2)
        for s in (0.5j, 2.0 + 1.0j):
            X = shifted_solve(sys, s, sys.B)
            res = np.linalg.norm((s * sys.E - sys.A) @ X - sys.B)
            bound = 1e-10 * (np.linalg.norm(sys.A) + abs(s) * np.linalg.norm(sys.E)) * np.linalg.norm(X)
            assert res <= max(bound, 1e-13)


class TestReducedTransferEval:
    def test_scalar_system(self):
        red = lm.ReducedSystem([-1.0], [], [], [1.0], [[1.0]], [[1.0]], [[0.0]])
        assert reduced_transfer_eval(red, 0.0) == pytest.approx(1.0)

    def test_zero_b_returns_d(self):
        rng = np.random.default_rng(4)
        red = make_reduced(rng, 3, 2, 2)
        red = lm.ReducedSystem(red.a_diag, red.a_sub, red.a_sup, red.e_diag,
                               np.zeros((3, 2)), red.C_red, red.D_red)
        for s in (0.0, 0.7j, 1 + 1j):
            assert np.allclose(reduced_transfer_eval(red, s), red.D_red)

    @pytest.mark.parametrize("r", [1, 2, 4, 7])
    def test_matches_dense_assembly(self, r):
        rng = np.random.default_rng(5 + r)
        red = make_reduced(rng, r, 2, 3)
        s = 0.7j
        T = s * red.E_matrix() - red.A_matrix()
        Hexp = red.C_red @ np.linalg.solve(T, red.B_red.astype(complex)) + red.D_red
        H = reduced_transfer_eval(red, s)
        assert np.abs(H - Hexp).max() <= 1e-12 * max(1.0, np.abs(Hexp).max())

    def test_pole_raises(self):
        red = lm.ReducedSystem([1.0], [], [], [1.0], [[1.0]], [[1.0]], [[0.0]])
        with pytest.raises(SingularPencil):
            reduced_transfer_eval(red, 1.0)


class TestErrorSigma:
    def test_identical_transfer_gives_zero(self):
        red = lm.ReducedSystem([-1.0, -2.0], [0.1, 0.0][:1], [0.2, 0.0][:1], [1.0, 1.0],
                               [[1.0], [0.5]], [[1.0, -0.3]], [[0.1]])
        full = red.to_descriptor()
        for w in (0.0, 0.9, 4.2):
            trip = lm.error_sigma(full, red, w)
            assert trip.sigma <= 1e-13

    def test_static_error_at_zero(self):
        full = siso()
        red = lm.ReducedSystem([-1.0], [], [], [1.0], [[0.0]], [[0.0]], [[0.0]])
        trip = lm.error_sigma(full, red, 0.0)
        assert trip.sigma == pytest.approx(1.0)
        assert trip.u[0] == pytest.approx(1.0)
        assert trip.v[0] == pytest.approx(1.0)

    def test_matches_direct_svd(self):
        rng = np.random.default_rng(6)
        full = make_stable_system(rng, 10, 2, 3, d_scale=0.5)
        red = make_reduced(rng, 3, 2, 3)
        w = 1.0
        trip = lm.error_sigma(full, red, w)
        M = transfer_eval(full, 1j * w) - reduced_transfer_eval(red, 1j * w)
        sig = np.linalg.svd(M, compute_uv=False)
        assert abs(trip.sigma - sig[0]) <= 1e-12 * max(1.0, sig[0])
        # consistent unit pair
        assert np.linalg.norm(trip.u) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(trip.v) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(M @ trip.v - trip.sigma * trip.u) <= 1e-10 * np.linalg.norm(M)
        assert np.linalg.norm(M.conj().T @ trip.u - trip.sigma * trip.v) <= 1e-10 * np.linalg.norm(M)

    def test_symmetric_in_omega(self):
        rng = np.random.default_rng(7)
        full = make_stable_system(rng, 5, 2, 2)
        red = make_reduced(rng, 2, 2, 2)
        for w in (0.4, 2.3):
            a = lm.error_sigma(full, red, w).sigma
            b = lm.error_sigma(full, red, -w).sigma
            assert a == pytest.approx(b, rel=1e-12)


class TestPoles:
    def test_diagonal(self):
        sys = lm.DescriptorSystem(np.eye(2), np.diag([-1.0, -2.0]), np.ones((2, 1)),
                                  np.ones((1, 2)), [[0.0]])
        finite, ninf = poles(sys)
        assert ninf == 0
        assert sorted(finite.real) == pytest.approx([-2.0, -1.0])

    def test_rotation_spectrum(self):
        sys = lm.DescriptorSystem(np.eye(2), [[0.0, 1.0], [-1.0, 0.0]], np.ones((2, 1)),
                                  np.ones((1, 2)), [[0.0]])
        finite, _ = poles(sys)
        assert sorted(finite.imag) == pytest.approx([-1.0, 1.0], abs=1e-12)
        assert np.abs(finite.real).max() <= 1e-12

    def test_matches_standard_form(self):
        rng = np.random.default_rng(8)
        sys = make_stable_system(rng, 9, 1, 1, e_mode="general")
        finite, ninf = poles(sys)
        assert ninf == 0
        expected = np.linalg.eigvals(np.linalg.solve(sys.E, sys.A))
        got = np.sort_complex(finite)
        exp = np.sort_complex(expected)
        assert np.abs(got - exp).max() <= 1e-10 * max(1.0, np.abs(exp).max())

    def test_singular_e_counts_infinite(self):
        E = np.diag([1.0, 0.0])
        A = np.diag([-1.0, 1.0])
        sys = lm.DescriptorSystem(E, A, np.ones((2, 1)), np.ones((1, 2)), [[0.0]])
        finite, ninf = poles(sys)
        assert ninf == 1
        assert finite == pytest.approx([-1.0])


class TestPacking:
    def test_scalar_layout(self):
        red = lm.ReducedSystem([2.0], [], [], [3.0], [[4.0]], [[5.0]], [[6.0]])
        assert pack(red).tolist() == [2.0, 3.0, 4.0, 5.0, 6.0]

    def test_length_formula(self):
        assert param_length(2, 1, 1) == 11
        rng = np.random.default_rng(9)
        red = make_reduced(rng, 2, 1, 1)
        assert pack(red).size == 11

    def test_round_trip_bitwise(self):
        rng = np.random.default_rng(10)
        red = make_reduced(rng, 5, 2, 3)
        back = unpack(pack(red), 5, 2, 3)
        for name in ("a_diag", "a_sub", "a_sup", "e_diag", "B_red", "C_red", "D_red"):
            assert np.array_equal(getattr(back, name), getattr(red, name))
        x = pack(red)
        assert np.array_equal(pack(unpack(x, 5, 2, 3)), x)

    def test_structure_preserved(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(param_length(4, 2, 1))
        red = unpack(x, 4, 2, 1)
        A = red.A_matrix()
        assert np.allclose(A - np.triu(np.tril(A, 1), -1), 0.0)
        assert np.allclose(red.E_matrix(), np.diag(np.diag(red.E_matrix())))

    def test_wrong_length_rejected(self):
        with pytest.raises(DimensionMismatch):
            unpack(np.zeros(7), 2, 1, 1)


class TestValidation:
    def test_irregular_pencil_rejected(self):
        with pytest.raises(SingularPencil):
            lm.DescriptorSystem(np.zeros((2, 2)), np.diag([1.0, 0.0]),
                                np.ones((2, 1)), np.ones((1, 2)), [[0.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            lm.DescriptorSystem(np.eye(2), np.eye(3), np.ones((2, 1)), np.ones((1, 2)), [[0.0]])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            lm.DescriptorSystem([[np.nan]], [[-1.0]], [[1.0]], [[1.0]], [[0.0]])
