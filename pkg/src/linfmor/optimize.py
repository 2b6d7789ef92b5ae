"""Nonsmooth-aware BFGS, weak Wolfe line search, and stability constraints.

Max-type objectives like the peak error are typically not differentiable at
their minimizers, so the quasi-Newton loop here never requires the gradient
norm to vanish.  Termination happens when the line search fails to make
sufficient progress or when the relative decrease between consecutive
iterates stalls below ``decrease_eps * tol``.  The curvature side of the
Wolfe conditions is the weak (one-sided) variant for the same reason.

Asymptotic stability of a reduced candidate is the condition that the
spectral abscissa of its pencil stays below a prescribed negative bound;
:func:`spectral_abscissa` provides the constraint value and gradient and
:func:`barrier_objective` folds it into the objective through a logarithmic
barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (DecompositionFailure, Infeasible, LineSearchFailure,
                     NonFiniteObjective)
from .objective import ObjectiveEval, reduced_objective
from .system import ReducedSystem


@dataclass(frozen=True)
class BfgsOptions:
    max_iters: int = 1000
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    decrease_eps: float = 0.1
    tol: float = 1e-6
    ls_max_steps: int = 50

    def __post_init__(self):
        if not (0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0):
            raise ValueError("need 0 < c1 < c2 < 1")
        if not (0.0 < self.decrease_eps < 0.5):
            raise ValueError("decrease_eps must lie in (0, 0.5)")


@dataclass
class BfgsTrace:
    """Per-iteration record: objective value, gradient norm, accepted step."""

    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    n_iters: int = 0
    n_fevals: int = 0
    termination: str = ""


def weak_wolfe_linesearch(phi, phi0, dphi0, c1=1e-4, c2=0.9, max_steps=50):
    """Find t with phi(t) <= phi(0) + c1 t phi'(0) and phi'(t) >= c2 phi'(0).

    ``phi`` maps a step to ``(value, slope)``.  Uses bisection with
    expansion: an upper bound shrinks on sufficient-decrease violations, a
    lower bound grows on curvature violations.  Returns
    ``(t, value, slope, n_evals)`` or raises LineSearchFailure, which for
    nonsmooth objectives signals convergence rather than a defect.
    """
    if not dphi0 < 0:
        raise LineSearchFailure("not a descent direction")
    lo, hi = 0.0, math.inf
    t = 1.0
    for k in range(max_steps):
        val, slope = phi(t)
        if not np.isfinite(val) or not np.isfinite(slope) or val > phi0 + c1 * t * dphi0:
            hi = t
        elif slope < c2 * dphi0:
            lo = t
        else:
            return t, val, slope, k + 1
        t = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * t
    raise LineSearchFailure(f"no weak Wolfe step within {max_steps} trials")


def bfgs_minimize(f, x0, opts: BfgsOptions | None = None, callback=None):
    """Minimize f(x) -> (value, gradient) with inverse-BFGS updates.

    The inverse Hessian approximation starts as the identity, is rescaled by
    s'y/y'y after the first accepted step, and skips any update whose
    curvature s'y is not safely positive.  Returns ``(x_best, trace)`` where
    ``x_best`` is the best iterate seen.
    """
    opts = opts or BfgsOptions()
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    fx, g = f(x)
    if not np.isfinite(fx):
        raise NonFiniteObjective(f"objective is {fx} at the starting point")
    trace = BfgsTrace()
    trace.n_fevals = 1
    trace.values.append(float(fx))
    trace.grad_norms.append(float(np.linalg.norm(g)))
    best_x, best_f = x.copy(), fx
    H = np.eye(n)
    scaled = False
    trace.termination = "max-iters"

    for it in range(opts.max_iters):
        if not np.all(np.isfinite(g)):
            trace.termination = "gradient-non-finite"
            break
        d = -H @ g
        slope = float(g @ d)
        if slope >= 0.0:
            H = np.eye(n)
            d = -g
            slope = -float(g @ g)
            if slope >= -1e-300:
                trace.termination = "stationary"
                break

        g_cell = [g]

        def phi(t):
            val, grad = f(x + t * d)
            g_cell[0] = grad
            return val, float(grad @ d) if np.all(np.isfinite(grad)) else np.nan

        try:
            t, f_new, _, evals = weak_wolfe_linesearch(
                phi, fx, slope, opts.wolfe_c1, opts.wolfe_c2, opts.ls_max_steps)
        except LineSearchFailure:
            trace.n_iters = it
            trace.termination = "line-search"
            break
        trace.n_fevals += evals
        g_new = g_cell[0]
        s = t * d
        y = g_new - g
        x = x + s
        f_prev = fx
        fx, g = f_new, g_new
        sy = float(s @ y)
        yy = float(y @ y)
        if not scaled and sy > 0 and yy > 1e-150:
            H *= sy / yy
            scaled = True
        if sy > max(1e-12 * np.linalg.norm(s) * np.linalg.norm(y), 1e-150):
            # H <- (I - rho s y') H (I - rho y s') + rho s s'
            rho = 1.0 / sy
            Hy = H @ y
            H -= rho * (np.outer(s, Hy) + np.outer(Hy, s))
            H += (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
        if fx < best_f:
            best_f, best_x = fx, x.copy()
        trace.values.append(float(fx))
        trace.grad_norms.append(float(np.linalg.norm(g)))
        trace.steps.append(float(t))
        trace.n_iters = it + 1
        if callback is not None:
            callback(it, x, fx, H)
        if abs(f_prev - fx) <= opts.decrease_eps * opts.tol * max(abs(fx), 1e-300):
            trace.termination = "decrease"
            break

    return best_x, trace


@dataclass(frozen=True)
class ConstraintEval:
    """Spectral abscissa of the reduced pencil with its gradient.

    ``grad`` covers the structured blocks [a_diag | a_sub | a_sup | e_diag]
    (length 4r-2); ``degenerate`` is set when the rightmost eigenvalue is
    not unique up to conjugation, in which case the gradient is unreliable.
    """

    alpha: float
    rightmost: complex
    grad: np.ndarray
    feasible_margin: float | None
    degenerate: bool


def spectral_abscissa(red: ReducedSystem, beta: float | None = None) -> ConstraintEval:
    """Largest real part of the finite pencil eigenvalues, with gradient.

    The gradient uses left/right eigenvectors of the rightmost eigenvalue
    normalized so that u* E_red v = 1; entries follow the tridiagonal /
    diagonal sparsity of the reduced parameterization.
    """
    A = red.A_matrix()
    E = red.E_matrix()
    try:
        w, vl, vr = sla.eig(A, E, left=True, right=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise DecompositionFailure("pencil eigenvalue computation failed") from exc
    finite = np.isfinite(w)
    if not finite.any():
        raise DecompositionFailure("pencil has no finite eigenvalues")
    idx_fin = np.where(finite)[0]
    wf = w[idx_fin]
    alpha = float(wf.real.max())
    # representative rightmost eigenvalue, preferring the Im >= 0 member
    near = idx_fin[wf.real >= alpha - 1e-12 * max(1.0, abs(alpha))]
    pick = near[np.argsort(-w[near].imag, kind="stable")[0]]
    lam = complex(w[pick])
    same = np.abs(wf - lam) <= 1e-8 * max(1.0, abs(lam))
    conj_pair = np.abs(wf - np.conj(lam)) <= 1e-8 * max(1.0, abs(lam))
    others = wf[~(same | conj_pair)]
    degenerate = bool(others.size and np.any(others.real >= alpha - 1e-10))

    u = vl[:, pick]
    v = vr[:, pick]
    c = np.conj(u) @ (E @ v)
    r = red.r
    grad = np.zeros(4 * r - 2)
    if abs(c) < 1e-14 * max(1.0, np.linalg.norm(u) * np.linalg.norm(v)):
        degenerate = True
    else:
        u = u / np.conj(c)
        uv = np.conj(u) * v
        grad_adiag = uv.real
        grad_asub = (np.conj(u)[1:] * v[:-1]).real
        grad_asup = (np.conj(u)[:-1] * v[1:]).real
        grad_ediag = -(lam * uv).real
        grad = np.concatenate([grad_adiag, grad_asub, grad_asup, grad_ediag])
    margin = None if beta is None else float(beta - alpha)
    return ConstraintEval(alpha=alpha, rightmost=lam, grad=grad,
                          feasible_margin=margin, degenerate=degenerate)


def barrier_objective(small, red: ReducedSystem, mu: float, beta: float,
                      opts=None, hints=(), response=None, pole_imag=None) -> ObjectiveEval:
    """Log-barrier lift of the peak-error objective under alpha < beta.

    Value is F_r(red) - mu * log(beta - alpha); the gradient adds
    mu / (beta - alpha) times the abscissa gradient on the A/E blocks.
    Raises Infeasible when the candidate is not strictly feasible.
    """
    if mu <= 0:
        raise ValueError("barrier parameter mu must be positive")
    ce = spectral_abscissa(red, beta)
    if not ce.alpha < beta:
        raise Infeasible(f"spectral abscissa {ce.alpha:.6g} >= beta {beta:.6g}")
    base = reduced_objective(small, red, opts=opts, hints=hints,
                             response=response, pole_imag=pole_imag)
    margin = beta - ce.alpha
    value = base.value - mu * math.log(margin)
    grad = base.gradient.copy()
    nhead = 4 * red.r - 2
    grad[:nhead] += (mu / margin) * ce.grad
    return ObjectiveEval(value=value, omega_star=base.omega_star, gradient=grad,
                         degenerate=base.degenerate or ce.degenerate,
                         maximizers=base.maximizers,
                         maximizer_values=base.maximizer_values)
