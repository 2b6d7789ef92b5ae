import numpy as np
import pytest

import linfmor as lm
from linfmor.linf import LinfOptions
from linfmor.objective import error_curve, full_error, gradient_from_triplet, reduced_objective
from linfmor.system import pack, unpack

from conftest import augmented_error_system, make_reduced, make_stable_system

OPTS = LinfOptions(grid_points=512)


def siso(a=-1.0, e=1.0, b=1.0, c=1.0, d=0.0):
    return lm.DescriptorSystem([[e]], [[a]], [[b]], [[c]], [[d]])


def static_red(r, m, p, d):
    """Reduced system whose transfer function is the constant d (B = 0)."""
    return lm.ReducedSystem(-np.ones(r), np.zeros(r - 1), np.zeros(r - 1), np.ones(r),
                            np.zeros((r, m)), np.zeros((p, r)), np.atleast_2d(d))


class TestGradientFormula:
    def test_unit_scalars_give_minus_one_on_d(self):
        red = static_red(1, 1, 1, 0.0)
        g = gradient_from_triplet(red, 0.0, np.array([1.0 + 0j]), np.array([1.0 + 0j]))
        # layout: [a | e | B | C | D]
        assert g[-1] == pytest.approx(-1.0)

    def test_e_block_vanishes_at_zero_frequency(self):
        rng = np.random.default_rng(30)
        red = make_reduced(rng, 3, 2, 2)
        u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        g = gradient_from_triplet(red, 0.0, u, v)
        r = red.r
        e_block = g[3 * r - 2:4 * r - 2]
        assert np.all(e_block == 0.0)

    def test_matches_central_differences(self):
        rng = np.random.default_rng(31)
        n, r, m, p = 12, 3, 2, 2
        small = make_stable_system(rng, n, m, p, d_scale=0.1)
        red = make_reduced(rng, r, m, p)
        ev = reduced_objective(small, red, opts=OPTS)

        x0 = pack(red)
        h = 1e-6

        def F(x):
            return reduced_objective(small, unpack(x, r, m, p), opts=OPTS).value

        for i in range(x0.size):
            xp = x0.copy()
            xm = x0.copy()
            xp[i] += h
            xm[i] -= h
            fd = (F(xp) - F(xm)) / (2 * h)
            scale = max(abs(fd), 1e-8)
            assert abs(ev.gradient[i] - fd) / scale <= 1e-6, f"component {i}"


class TestReducedObjective:
    def test_value_is_peak_of_error_curve(self):
        rng = np.random.default_rng(32)
        small = make_stable_system(rng, 8, 2, 2)
        red = make_reduced(rng, 2, 2, 2)
        ev = reduced_objective(small, red, opts=OPTS)
        sigma = error_curve(small, red)
        assert ev.value == pytest.approx(float(sigma(np.array([ev.omega_star]))[0]), rel=1e-10)
        assert ev.value >= 0.0
        assert ev.gradient.size == lm.param_length(2, 2, 2)

    def test_scaling_invariance(self):
        rng = np.random.default_rng(33)
        small = make_stable_system(rng, 8, 2, 2)
        red = make_reduced(rng, 3, 2, 2)
        alpha = 3.7
        scaled = lm.ReducedSystem(red.a_diag, red.a_sub, red.a_sup, red.e_diag,
                                  red.B_red * alpha, red.C_red / alpha, red.D_red)
        a = reduced_objective(small, red, opts=OPTS).value
        b = reduced_objective(small, scaled, opts=OPTS).value
        assert a == pytest.approx(b, rel=1e-12)

    def test_matches_augmented_realization(self):
        rng = np.random.default_rng(34)
        full = make_stable_system(rng, 9, 2, 2, d_scale=0.4)
        red = make_reduced(rng, 3, 2, 2)
        direct = full_error(full, red, opts=OPTS)
        aug = augmented_error_system(full, red)
        sigma = error_curve(aug, static_red(1, 2, 2, np.zeros((2, 2))))
        finite, _ = lm.poles(aug)
        res = lm.linf_norm(sigma, opts=OPTS, pole_imag=np.abs(finite.imag))
        assert direct.value == pytest.approx(res.value, rel=1e-10)


class TestFullError:
    def test_exact_representation_gives_zero(self):
        rng = np.random.default_rng(35)
        dense = make_stable_system(rng, 3, 2, 2, d_scale=0.2)
        red = lm.to_canonical(dense.A, dense.E, dense.B, dense.C, dense.D)
        res = full_error(dense, red, opts=OPTS)
        assert res.value <= 1e-10

    def test_half_gain_static_fit(self):
        # |1/(i w + 1) - 1/2| = 1/2 at every frequency; tie broken toward 0
        full = siso()
        red = static_red(1, 1, 1, 0.5)
        res = full_error(full, red, opts=OPTS)
        assert res.value == pytest.approx(0.5, rel=1e-10)
        assert res.omega_star == 0.0
        assert res.degenerate

    def test_iss_initial_bt_error(self):
        from conftest import require_benchmark
        iss = require_benchmark("iss")
        bt, _ = lm.balanced_truncation(iss, 12)
        red = lm.to_canonical(bt.A, bt.E, bt.B, bt.C, bt.D)
        res = full_error(iss, red, opts=LinfOptions(grid_points=4096))
        assert res.value == pytest.approx(0.004470060020, rel=1e-6)
