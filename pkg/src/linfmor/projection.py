"""Two-sided projection bases and Hermite interpolation on the imaginary axis.

The large model is compressed onto a pair of equal-dimension orthonormal
bases (V, W) by restricting the state to span(V) and forcing the residual
orthogonal to span(W).  Appending, for a frequency omega, the real and
imaginary parts of

    K^{-1} B  and  K^{-1} E K^{-1} B,          K = i omega E - A,

to V (and the corresponding adjoint solves to W) makes the projected
transfer function match the full one at i omega together with its first
three derivatives.  One LU factorization of K is shared by all solves,
including the adjoint ones.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import DimensionMismatch, SingularPencil
from .linf import LinfOptions, linf_norm
from .objective import error_curve
from .system import (DescriptorSystem, ReducedSystem, frequency_response,
                     poles, reduced_response)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ProjectionBasis:
    """Orthonormal bases V, W of equal dimension for two-sided projection."""

    V: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if V.shape != W.shape:
            raise DimensionMismatch(f"V and W must have equal shapes, got {V.shape} vs {W.shape}")
        if V.shape[1] > V.shape[0]:
            raise DimensionMismatch("basis dimension exceeds the state dimension")
        for name, M in (("V", V), ("W", W)):
            if M.size:
                defect = np.max(np.abs(M.T @ M - np.eye(M.shape[1])))
                if defect > 1e-10:
                    raise ValueError(f"{name} columns not orthonormal (defect {defect:.2e})")
            object.__setattr__(self, name, M)

    @property
    def k(self) -> int:
        return self.V.shape[1]

    @staticmethod
    def empty(n: int) -> "ProjectionBasis":
        return ProjectionBasis(np.zeros((n, 0)), np.zeros((n, 0)))


def petrov_galerkin(full: DescriptorSystem, basis: ProjectionBasis) -> DescriptorSystem:
    """Project onto the basis pair: (W'EV, W'AV, W'B, CV, D)."""
    if basis.V.shape[0] != full.n:
        raise DimensionMismatch("basis rows do not match the system order")
    V, W = basis.V, basis.W
    return DescriptorSystem(W.T @ full.E @ V, W.T @ full.A @ V, W.T @ full.B, full.C @ V, full.D)


def _shifted_lu(full: DescriptorSystem, omega: float):
    K = 1j * omega * full.E - full.A
    anorm = np.linalg.norm(K, 1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(K)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularPencil(f"i*omega*E - A could not be factored at omega={omega}") from exc
    rc, info = lapack.zgecon(lu[0], anorm)
    if info != 0 or not np.isfinite(rc) or rc < _EPS:
        raise SingularPencil(f"i*omega*E - A numerically singular at omega={omega}")
    return lu


def expansion_directions(full: DescriptorSystem, omega: float):
    """Direction blocks whose span yields Hermite interpolation at i*omega.

    Returns real matrices (Vt, Wt) with equal column counts.  For m == p
    these are the 4m / 4p columns of the first- and second-level solves; for
    m != p the narrower block is padded with first-level solves at slightly
    perturbed frequencies so that both sides stay the same width.
    """
    omega = float(omega)
    lu = _shifted_lu(full, omega)
    B = full.B.astype(complex)
    CH = full.C.conj().T.astype(complex)
    X1 = sla.lu_solve(lu, B)
    X2 = sla.lu_solve(lu, full.E @ X1)
    Y1 = sla.lu_solve(lu, CH, trans=2)
    Y2 = sla.lu_solve(lu, full.E.T @ Y1, trans=2)
    Vt = np.hstack([X1.real, X2.real, X1.imag, X2.imag])
    Wt = np.hstack([Y1.real, Y2.real, Y1.imag, Y2.imag])

    m, p = full.m, full.p
    if m != p:
        delta = 1e-3 * max(1.0, abs(omega))
        j = 1
        while Vt.shape[1] != Wt.shape[1]:
            for sign in (+1.0, -1.0):
                if Vt.shape[1] == Wt.shape[1]:
                    break
                lu_j = _shifted_lu(full, omega + sign * j * delta)
                if Vt.shape[1] < Wt.shape[1]:
                    X = sla.lu_solve(lu_j, B)
                    extra = np.hstack([X.real, X.imag])[:, :Wt.shape[1] - Vt.shape[1]]
                    Vt = np.hstack([Vt, extra])
                else:
                    Y = sla.lu_solve(lu_j, CH, trans=2)
                    extra = np.hstack([Y.real, Y.imag])[:, :Vt.shape[1] - Wt.shape[1]]
                    Wt = np.hstack([Wt, extra])
            j += 1
    return Vt, Wt


def orthonormalize_append(basis: ProjectionBasis, Vt, Wt,
                          passes: int = 3, drop_tol: float = 1e-10) -> ProjectionBasis:
    """Grow the basis pair by new direction blocks, keeping orthonormality.

    The projection X <- X - V (V'X) is applied ``passes`` times to fight
    cancellation when the new directions are nearly contained in the span;
    the surviving block is then orthonormalized internally.  A column pair
    is dropped from BOTH sides whenever either member falls below
    ``drop_tol`` times its original norm, so V and W keep equal widths.
    """
    Vt = np.atleast_2d(np.asarray(Vt, dtype=float))
    Wt = np.atleast_2d(np.asarray(Wt, dtype=float))
    if Vt.shape != Wt.shape:
        raise DimensionMismatch(f"direction blocks must have equal shape, got {Vt.shape} vs {Wt.shape}")
    if Vt.shape[0] != basis.V.shape[0]:
        raise DimensionMismatch("direction rows do not match the basis")
    orig_v = np.linalg.norm(Vt, axis=0)
    orig_w = np.linalg.norm(Wt, axis=0)
    X = Vt.copy()
    Y = Wt.copy()
    for _ in range(passes):
        if basis.k:
            X -= basis.V @ (basis.V.T @ X)
            Y -= basis.W @ (basis.W.T @ Y)
    new_v, new_w = [], []
    for j in range(X.shape[1]):
        xv = X[:, j].copy()
        yw = Y[:, j].copy()
        for _ in range(2):
            for q in new_v:
                xv -= (q @ xv) * q
            for q in new_w:
                yw -= (q @ yw) * q
        nv = np.linalg.norm(xv)
        nw = np.linalg.norm(yw)
        if nv <= drop_tol * max(orig_v[j], 1e-300) or nw <= drop_tol * max(orig_w[j], 1e-300):
            continue
        new_v.append(xv / nv)
        new_w.append(yw / nw)
    if not new_v:
        return basis
    V = np.hstack([basis.V] + [c[:, None] for c in new_v])
    W = np.hstack([basis.W] + [c[:, None] for c in new_w])
    return ProjectionBasis(V, W)


@dataclass
class RefineResult:
    basis: ProjectionBasis
    small: DescriptorSystem
    count: int
    converged: bool
    omega_model: float
    model_value: float


def refine(full: DescriptorSystem, basis: ProjectionBasis, red: ReducedSystem,
           omega_r: float, tol: float, maximizers=(), max_rounds: int = 10,
           linf_opts: LinfOptions | None = None, omega_floor: float = 1e-8) -> RefineResult:
    """Re-anchor the small model so its error peak agrees with the full one.

    Repeatedly maximizes the model error curve sigma_max(H_small - H_red)
    and, while the full-error maximizer(s) fail to be global maximizers of
    the model curve up to ``tol``, expands the basis at the model-curve
    maximizer.  Acceptance is either by location (the model maximizer lands
    within ``tol`` relative of a target) or by value (the model curve at
    some target reaches its global maximum up to ``tol`` relative); the
    latter matters for near-equioscillating error curves whose maximizer
    location is ill-determined while the interpolation identity already
    holds.  When ``max_rounds`` expansions do not suffice the result is
    flagged ``converged=False`` and the best small system is kept.
    """
    targets = np.unique(np.concatenate([[float(omega_r)], np.asarray(list(maximizers), dtype=float)]))
    small = petrov_galerkin(full, basis)
    count = 0
    omega_model = float(omega_r)
    model_value = np.nan
    for _ in range(max_rounds + 1):
        finite, _ = poles(small)
        sigma = error_curve(frequency_response(small), reduced_response(red))
        res = linf_norm(sigma, hints=tuple(targets), opts=linf_opts,
                        pole_imag=np.abs(finite.imag))
        omega_model = res.omega_star
        model_value = res.value
        gap = np.min(np.abs(omega_model - targets) / np.maximum(np.abs(targets), omega_floor))
        at_targets = float(np.max(sigma(targets)))
        if gap <= tol or at_targets >= (1.0 - tol) * model_value:
            return RefineResult(basis, small, count, True, omega_model, model_value)
        if count == max_rounds:
            break
        basis = orthonormalize_append(basis, *expansion_directions(full, omega_model))
        small = petrov_galerkin(full, basis)
        count += 1
    return RefineResult(basis, small, count, False, omega_model, model_value)
