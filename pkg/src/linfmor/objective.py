"""Values and gradients of the peak error between two transfer functions.

The objective of interest is the largest singular value of
H_ref(i omega) - H_red(i omega), maximized over omega >= 0, where the
reference side is either the full model or a projected small model.  At a
smooth evaluation point (unique maximizer, simple top singular value) the
gradient with respect to the reduced system's free entries comes from the
singular-pair sensitivity of the maximum singular value; at nonsmooth points
the same formula yields one subgradient generator, flagged ``degenerate``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DecompositionFailure
from .linf import LinfOptions, LinfResult, linf_norm
from .system import (DescriptorSystem, ReducedSystem, as_response, error_sigma,
                     frequency_response, poles, reduced_response)


@dataclass(frozen=True)
class ObjectiveEval:
    """One evaluation of the peak-error objective.

    ``gradient`` follows the frozen parameter-vector layout.  ``degenerate``
    is set when the maximizer cluster has more than one member or the top
    singular value is (numerically) multiple; the gradient is then only a
    subgradient.
    """

    value: float
    omega_star: float
    gradient: np.ndarray
    degenerate: bool
    maximizers: np.ndarray
    maximizer_values: np.ndarray


def error_curve(ref, red):
    """Vectorized omega -> sigma_max(H_ref(i omega) - H_red(i omega))."""
    ra = as_response(ref)
    rb = as_response(red)

    def sigma(omegas):
        M = ra(omegas) - rb(omegas)
        return np.linalg.svd(M, compute_uv=False)[..., 0]

    return sigma


def _reduced_pole_imag(red: ReducedSystem):
    try:
        w = sla.eigvals(red.A_matrix(), red.E_matrix())
    except (sla.LinAlgError, ValueError):
        return np.zeros(0)
    w = w[np.isfinite(w)]
    return np.abs(w.imag)


def gradient_from_triplet(red: ReducedSystem, omega: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Assemble the packed objective gradient from a singular pair at omega.

    Uses the auxiliary vectors ut = u* C_red (i omega E_red - A_red)^{-1}
    and vt = (i omega E_red - A_red)^{-1} B_red v; the blocks are, with o
    the entrywise product,

    - d/da_diag = -Re(ut o vt), shifted variants for the off-diagonals,
    - d/de_diag = -omega * Im(ut o vt),
    - d/dB = -Re(ut^T v^T), d/dC = -Re(conj(u) vt^T), d/dD = -Re(conj(u) v^T).
    """
    T = 1j * omega * red.E_matrix() - red.A_matrix()
    try:
        ut = np.linalg.solve(T.T, red.C_red.T @ u.conj())
        vt = np.linalg.solve(T, red.B_red @ v)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(f"reduced pencil singular at the maximizer omega={omega}") from exc
    prod = ut * vt
    g_adiag = -prod.real
    g_asub = -(ut[1:] * vt[:-1]).real
    g_asup = -(ut[:-1] * vt[1:]).real
    g_ediag = -omega * prod.imag
    gB = -np.real(np.outer(ut, v))
    gC = -np.real(np.outer(u.conj(), vt))
    gD = -np.real(np.outer(u.conj(), v))
    return np.concatenate([g_adiag, g_asub, g_asup, g_ediag,
                           gB.flatten(order="F"), gC.flatten(order="F"), gD.flatten(order="F")])


def reduced_objective(small: DescriptorSystem, red: ReducedSystem,
                      opts: LinfOptions | None = None, hints=(),
                      response=None, pole_imag=None) -> ObjectiveEval:
    """Peak error against a small reference model, with gradient.

    ``response`` may carry a prebuilt provider for ``small`` (the reference
    side is fixed during a minimization, so building it once pays off);
    ``pole_imag`` likewise caches |Im| of the reference poles used to seed
    and cap the frequency grid.  Pole imaginary parts of ``red`` are always
    merged into the sample hints so that peaks near its resonances are seen.
    """
    if small.m != red.m or small.p != red.p:
        raise ValueError("reference and reduced systems must share (m, p)")
    resp_small = response if response is not None else frequency_response(small)
    resp_red = reduced_response(red)
    if pole_imag is None:
        finite, _ = poles(small)
        pole_imag = np.abs(finite.imag)
    sigma = error_curve(resp_small, resp_red)
    all_hints = tuple(hints) + tuple(_reduced_pole_imag(red))
    res = linf_norm(sigma, hints=all_hints, opts=opts, pole_imag=pole_imag)
    trip = error_sigma(resp_small, resp_red, res.omega_star)
    grad = gradient_from_triplet(red, res.omega_star, trip.u, trip.v)
    return ObjectiveEval(
        value=res.value,
        omega_star=res.omega_star,
        gradient=grad,
        degenerate=res.degenerate or trip.degenerate,
        maximizers=res.maximizers,
        maximizer_values=res.maximizer_values,
    )


def full_error(full: DescriptorSystem, red: ReducedSystem,
               opts: LinfOptions | None = None, hints=(),
               response=None, pole_imag=None) -> LinfResult:
    """Peak error of the reduced model against the full one.

    Returns the full LinfResult (value, argmax, near-global maximizer
    cluster); the cluster feeds the refinement check and termination tests.
    """
    if full.m != red.m or full.p != red.p:
        raise ValueError("full and reduced systems must share (m, p)")
    resp_full = response if response is not None else frequency_response(full)
    if pole_imag is None:
        finite, _ = poles(full)
        pole_imag = np.abs(finite.imag)
    sigma = error_curve(resp_full, reduced_response(red))
    all_hints = tuple(hints) + tuple(_reduced_pole_imag(red))
    return linf_norm(sigma, hints=all_hints, opts=opts, pole_imag=pole_imag)
