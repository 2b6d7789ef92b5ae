"""Outer loop: alternate reduced-objective minimization, full-error
maximization, convergence check, subspace expansion, and refinement.

Each sweep minimizes the peak error against the current small projected
model (warm-started from the previous sweep's optimum), measures the true
error of the candidate against the full model, and, unless two consecutive
true errors agree to the prescribed tolerance, expands the projection basis
at the true-error maximizer and re-anchors the small model.  Iteration 0
skips the minimization and goes straight to the full-error evaluation of
the initial estimate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (InitFailure, Infeasible, NoFinite, SingularE,
                     SingularPencil, Unbounded, UnstableSystem)
from .initialization import balanced_truncation, dominant_poles, initial_subspaces, to_canonical
from .linf import LinfOptions
from .objective import full_error, reduced_objective
from .optimize import BfgsOptions, barrier_objective, bfgs_minimize, spectral_abscissa
from .projection import ProjectionBasis, expansion_directions, orthonormalize_append, petrov_galerkin, refine
from .system import DescriptorSystem, ReducedSystem, frequency_response, pack, param_length, poles, unpack


@dataclass(frozen=True)
class StabilityOptions:
    """Asymptotic-stability constraint: spectral abscissa <= beta < 0."""

    beta: float
    mu_schedule: tuple = (1e-2, 1e-3, 1e-4)

    def __post_init__(self):
        if not self.beta < 0:
            raise ValueError("beta must be negative")


@dataclass(frozen=True)
class FrameworkOptions:
    r: int
    tol: float = 1e-6
    max_outer: int = 30
    init_mode: str = "balanced-truncation"
    stability: StabilityOptions | None = None
    linf: LinfOptions = field(default_factory=LinfOptions)
    bfgs: BfgsOptions | None = None
    max_refine: int = 10
    ell: int | None = None

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.init_mode not in ("balanced-truncation", "dominant-poles"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")


@dataclass
class IterationRow:
    iteration: int
    error: float
    omega_star: float
    small_order: int
    bfgs_iters: int | None = None
    bfgs_fevals: int | None = None
    refine_count: int | None = None
    model_error_after_refine: float | None = None


@dataclass
class ReductionReport:
    """Per-iteration trace plus the final reduced model and diagnostics."""

    rows: list
    reduced: ReducedSystem
    error: float
    omega_star: float
    termination: str
    timings: dict
    init_mode_used: str
    hankel: np.ndarray | None = None
    constraint_trace: list | None = None
    notes: list = field(default_factory=list)


def _interpolatory_estimate(full: DescriptorSystem, r: int) -> ReducedSystem:
    q = max(1, math.ceil(r / (4 * full.m)))
    basis = initial_subspaces(full, q, min_dim=r - 1)
    trimmed = ProjectionBasis(basis.V[:, :r], basis.W[:, :r])
    small = petrov_galerkin(full, trimmed)
    return to_canonical(small.A, small.E, small.B, small.C, small.D)


def _initial_estimate(full, opts, notes):
    mode = opts.init_mode
    hankel = None
    if mode == "balanced-truncation":
        try:
            bt, hankel = balanced_truncation(full, opts.r)
            return to_canonical(bt.A, bt.E, bt.B, bt.C, bt.D), hankel, mode
        except (UnstableSystem, SingularE) as exc:
            notes.append(f"balanced truncation unavailable ({exc}); falling back to dominant poles")
            mode = "dominant-poles"
    return _interpolatory_estimate(full, opts.r), hankel, mode


def _ensure_feasible(red: ReducedSystem, beta: float, notes) -> ReducedSystem:
    ce = spectral_abscissa(red)
    if ce.alpha < beta:
        return red
    shift = ce.alpha - beta + 0.05 * max(1.0, abs(beta))
    notes.append(f"initial abscissa {ce.alpha:.3g} >= beta; shifted poles left by {shift:.3g}")
    return ReducedSystem(red.a_diag - shift * red.e_diag, red.a_sub, red.a_sup,
                         red.e_diag, red.B_red, red.C_red, red.D_red)


def _minimize_reduced(small, red, opts: FrameworkOptions, hints, resp_small,
                      pole_imag_small, constraint_trace):
    dims = (red.r, red.m, red.p)
    bopts = opts.bfgs if opts.bfgs is not None else BfgsOptions(tol=opts.tol)
    zeros = np.zeros(param_length(*dims))

    def guard(fun, x):
        cand = unpack(x, *dims)
        try:
            ev = fun(cand)
        except (SingularPencil, Unbounded, NoFinite, Infeasible, np.linalg.LinAlgError):
            return np.inf, zeros
        return ev.value, ev.gradient

    if opts.stability is None:
        def f(x):
            return guard(lambda cand: reduced_objective(
                small, cand, opts=opts.linf, hints=hints,
                response=resp_small, pole_imag=pole_imag_small), x)

        x_best, trace = bfgs_minimize(f, pack(red), bopts)
        return unpack(x_best, *dims), trace.n_iters, trace.n_fevals

    beta = opts.stability.beta
    x = pack(red)
    iters = evals = 0
    for mu in opts.stability.mu_schedule:
        def f(x, mu=mu):
            return guard(lambda cand: barrier_objective(
                small, cand, mu, beta, opts=opts.linf, hints=hints,
                response=resp_small, pole_imag=pole_imag_small), x)

        def track(_it, xk, _fk, _H):
            if constraint_trace is not None:
                constraint_trace.append(spectral_abscissa(unpack(xk, *dims)).alpha)

        x, trace = bfgs_minimize(f, x, bopts, callback=track)
        iters += trace.n_iters
        evals += trace.n_fevals
    return unpack(x, *dims), iters, evals


def reduce(full: DescriptorSystem, opts: FrameworkOptions) -> ReductionReport:
    """Run the subspace loop and return the full per-iteration report.

    The returned reduced system is the best iterate measured by the true
    error; with a stability constraint configured, its spectral abscissa
    satisfies alpha <= beta.
    """
    if not opts.r < full.n:
        raise ValueError(f"target order r={opts.r} must be smaller than n={full.n}")
    timings = {"init": 0.0, "minimize": 0.0, "full-error": 0.0, "expand": 0.0, "refine": 0.0}
    notes = []
    t0 = time.perf_counter()

    red, hankel, mode_used = _initial_estimate(full, opts, notes)
    if opts.stability is not None:
        red = _ensure_feasible(red, opts.stability.beta, notes)

    mval = max(full.m, full.p)
    ell = opts.ell if opts.ell is not None else (7 if full.m == 1 and full.p == 1 else 3)
    ell = max(ell, math.floor(opts.r / (4 * mval)) + 1)
    try:
        basis = initial_subspaces(full, ell, min_dim=opts.r)
    except InitFailure:
        # non-minimal systems can saturate below r; proceed with what exists
        basis = initial_subspaces(full, ell, min_dim=0)
        notes.append(f"seed basis saturated at dimension {basis.k} <= r={opts.r}")
    small = petrov_galerkin(full, basis)

    resp_full = frequency_response(full)
    finite, _ = poles(full)
    pole_imag_full = np.abs(finite.imag)
    seeds = [abs(dp.lam.imag) for dp in dominant_poles(full, 10)]
    timings["init"] = time.perf_counter() - t0

    rows = []
    constraint_trace = [] if opts.stability is not None else None
    prev_err = None
    prev_maximizers = np.zeros(0)
    best = None  # (error, red, omega)
    termination = "max-outer"
    zero_streak = 0

    for it in range(opts.max_outer + 1):
        bfgs_iters = bfgs_fevals = None
        if it >= 1:
            t = time.perf_counter()
            resp_small = frequency_response(small)
            fin_small, _ = poles(small)
            hints = tuple(prev_maximizers) + tuple(seeds)
            red, bfgs_iters, bfgs_fevals = _minimize_reduced(
                small, red, opts, hints, resp_small, np.abs(fin_small.imag), constraint_trace)
            timings["minimize"] += time.perf_counter() - t

        t = time.perf_counter()
        res = full_error(full, red, opts=opts.linf,
                         hints=tuple(prev_maximizers) + tuple(seeds),
                         response=resp_full, pole_imag=pole_imag_full)
        timings["full-error"] += time.perf_counter() - t
        err = res.value
        rows.append(IterationRow(iteration=it, error=err, omega_star=res.omega_star,
                                 small_order=small.n, bfgs_iters=bfgs_iters,
                                 bfgs_fevals=bfgs_fevals))
        if best is None or err < best[0]:
            best = (err, red, res.omega_star)

        # relative agreement of two consecutive true errors; an absolute
        # floor covers exactly-representable cases where err is noise-level
        zero_floor = 1e-12 * max(1.0, rows[0].error)
        if it >= 1 and (abs(err - prev_err) <= opts.tol * max(err, 1e-300) or err <= zero_floor):
            termination = "converged"
            break
        if it == opts.max_outer:
            termination = "max-outer"
            break

        t = time.perf_counter()
        grown = orthonormalize_append(basis, *expansion_directions(full, res.omega_star))
        added = grown.k - basis.k
        timings["expand"] += time.perf_counter() - t
        zero_streak = zero_streak + 1 if added == 0 else 0
        if zero_streak >= 2:
            termination = "stagnation"
            break
        basis = grown

        # tight subset of the maximizer cluster drives the refinement check
        tight = res.maximizers[res.maximizer_values >= (1.0 - 10.0 * opts.tol) * err] \
            if res.maximizers.size else res.maximizers
        t = time.perf_counter()
        rr = refine(full, basis, red, res.omega_star, opts.tol, maximizers=tight,
                    max_rounds=opts.max_refine, linf_opts=opts.linf)
        timings["refine"] += time.perf_counter() - t
        basis, small = rr.basis, rr.small
        rows[-1].refine_count = rr.count
        rows[-1].model_error_after_refine = rr.model_value
        if not rr.converged:
            notes.append(f"refinement cap reached at iteration {it} (omega gap unresolved)")

        prev_err = err
        prev_maximizers = res.maximizers

    err_best, red_best, omega_best = best
    return ReductionReport(rows=rows, reduced=red_best, error=err_best,
                           omega_star=omega_best, termination=termination,
                           timings=timings, init_mode_used=mode_used, hankel=hankel,
                           constraint_trace=constraint_trace, notes=notes)


def local_optimality_probe(full: DescriptorSystem, red: ReducedSystem,
                           deltas=(0.05, 0.1), opts: LinfOptions | None = None,
                           response=None, pole_imag=None):
    """Largest error decrease over single-entry perturbations of the model.

    Perturbs every free parameter by +-delta for each delta and returns
    ``(base_error, max_decrease)``; a locally optimal model never admits a
    decrease beyond solver tolerance.
    """
    if response is None:
        response = frequency_response(full)
    if pole_imag is None:
        finite, _ = poles(full)
        pole_imag = np.abs(finite.imag)
    base = full_error(full, red, opts=opts, response=response, pole_imag=pole_imag)
    x0 = pack(red)
    dims = (red.r, red.m, red.p)
    worst = 0.0
    for i in range(x0.size):
        for delta in deltas:
            for sign in (1.0, -1.0):
                x = x0.copy()
                x[i] += sign * delta
                try:
                    val = full_error(full, unpack(x, *dims), opts=opts,
                                     hints=(base.omega_star,), response=response,
                                     pole_imag=pole_imag).value
                except (SingularPencil, Unbounded, NoFinite):
                    continue
                worst = max(worst, base.value - val)
    return base.value, worst
