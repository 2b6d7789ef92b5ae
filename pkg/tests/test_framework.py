import numpy as np
import pytest
import scipy.linalg as sla

import linfmor as lm
from linfmor.framework import FrameworkOptions, StabilityOptions, local_optimality_probe, reduce
from linfmor.linf import LinfOptions
from linfmor.objective import full_error
from linfmor.optimize import BfgsOptions, spectral_abscissa

from conftest import make_stable_system, require_benchmark

FAST_LINF = LinfOptions(grid_points=384)


def padded_low_order_system(rng, r, extra, m=1, p=1):
    """Order r+extra system whose transfer function has exact order r."""
    core = make_stable_system(rng, r, m, p, d_scale=0.2)
    junk = -1.0 - rng.random(extra)  # stable but disconnected states
    A = sla.block_diag(core.A, np.diag(junk))
    E = np.eye(r + extra)
    B = np.vstack([core.B, np.zeros((extra, m))])
    C = np.hstack([core.C, np.zeros((p, extra))])
    return lm.DescriptorSystem(E, A, B, C, core.D)


class TestReduce:
    def test_exactly_representable(self):
        rng = np.random.default_rng(80)
        full = padded_low_order_system(rng, 3, 5)
        rep = reduce(full, FrameworkOptions(r=3, tol=1e-8, linf=FAST_LINF))
        assert rep.error <= 1e-8
        assert rep.termination == "converged"
        assert len(rep.rows) <= 3

    def test_trace_and_report_invariants(self):
        rng = np.random.default_rng(81)
        full = make_stable_system(rng, 24, 2, 2)
        opts = FrameworkOptions(r=4, tol=1e-8, linf=FAST_LINF)
        rep = reduce(full, opts)
        errors = [row.error for row in rep.rows]
        orders = [row.small_order for row in rep.rows]
        assert all(e >= 0 for e in errors)
        assert all(b >= a for a, b in zip(orders, orders[1:]))
        # error trace non-increasing once minimization kicks in
        assert all(b <= a * (1 + 1e-9) for a, b in zip(errors[1:], errors[2:]))
        assert rep.termination in ("converged", "max-outer", "stagnation")
        # final reported error reproduces under an independent evaluation
        recomputed = full_error(full, rep.reduced, opts=opts.linf).value
        assert rep.error == pytest.approx(recomputed, rel=1e-10)
        # improves on the initial estimate and respects the Hankel bound
        assert rep.error <= errors[0] * (1 + 1e-12)
        assert rep.hankel is not None
        assert rep.error >= rep.hankel[4] * (1 - 1e-9)

    def test_interpolation_identity_after_refine(self):
        rng = np.random.default_rng(82)
        full = make_stable_system(rng, 20, 1, 1)
        rep = reduce(full, FrameworkOptions(r=3, tol=1e-8, linf=FAST_LINF))
        checked = 0
        for row in rep.rows:
            if row.model_error_after_refine is not None:
                assert row.model_error_after_refine == pytest.approx(row.error, rel=1e-6)
                checked += 1
        assert checked >= 1

    def test_dominant_pole_init(self):
        rng = np.random.default_rng(83)
        full = make_stable_system(rng, 18, 1, 1)
        rep = reduce(full, FrameworkOptions(r=2, tol=1e-6, linf=FAST_LINF,
                                            init_mode="dominant-poles"))
        assert rep.init_mode_used == "dominant-poles"
        assert rep.hankel is None
        assert rep.error >= 0

    def test_bt_falls_back_for_singular_e(self):
        rng = np.random.default_rng(84)
        core = make_stable_system(rng, 8, 1, 1)
        # descriptor padding: one algebraic state, singular E
        E = sla.block_diag(core.E, np.zeros((1, 1)))
        A = sla.block_diag(core.A, np.eye(1))
        B = np.vstack([core.B, np.ones((1, 1))])
        C = np.hstack([core.C, np.ones((1, 1))])
        full = lm.DescriptorSystem(E, A, B, C, core.D)
        rep = reduce(full, FrameworkOptions(r=2, tol=1e-6, linf=FAST_LINF))
        assert rep.init_mode_used == "dominant-poles"
        assert any("balanced truncation unavailable" in note for note in rep.notes)

    def test_stability_constrained_mode(self):
        rng = np.random.default_rng(85)
        full = make_stable_system(rng, 14, 1, 1)
        beta = -1e-3
        opts = FrameworkOptions(r=2, tol=1e-6, linf=FAST_LINF,
                                stability=StabilityOptions(beta=beta),
                                bfgs=BfgsOptions(tol=1e-6, max_iters=150))
        rep = reduce(full, opts)
        assert spectral_abscissa(rep.reduced).alpha <= beta
        assert rep.constraint_trace is not None
        assert all(a < beta for a in rep.constraint_trace)

    def test_r_must_be_smaller_than_n(self):
        rng = np.random.default_rng(86)
        full = make_stable_system(rng, 4, 1, 1)
        with pytest.raises(ValueError):
            reduce(full, FrameworkOptions(r=4))


class TestLocalOptimalityProbe:
    def test_no_large_decrease_at_converged_point(self):
        rng = np.random.default_rng(87)
        full = make_stable_system(rng, 16, 1, 1)
        opts = FrameworkOptions(r=2, tol=1e-8, linf=FAST_LINF)
        rep = reduce(full, opts)
        base, worst = local_optimality_probe(full, rep.reduced, deltas=(0.05, 0.1),
                                             opts=FAST_LINF)
        assert base == pytest.approx(rep.error, rel=1e-9)
        assert worst <= opts.tol * base


class TestIssReproduction:
    def test_iss_r12_trace(self):
        iss = require_benchmark("iss")
        opts = FrameworkOptions(r=12, tol=1e-8, linf=LinfOptions(grid_points=2048))
        rep = reduce(iss, opts)
        assert rep.error == pytest.approx(0.0022516, rel=0.05)
        assert len(rep.rows) <= 11
        errors = [row.error for row in rep.rows]
        assert errors[0] == pytest.approx(0.004470060020, rel=1e-4)
        assert all(b <= a * (1 + 1e-6) for a, b in zip(errors[1:], errors[2:]))
