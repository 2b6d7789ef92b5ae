"""Starting points: dominant poles, seed subspaces, balanced truncation,
and conversion of a dense order-r model to the structured canonical form.

A pole is "dominant" when its residue norm relative to its decay rate makes
it stick out of the frequency response; the metric used is
||R||_2 / |Re lambda| with R the rank-one residue of the eigentriplet.  Seed
subspaces interpolate the full model at the imaginary parts of the most
dominant poles.  Balanced truncation supplies both an initial reduced
estimate and the Hankel singular values, whose (r+1)-th value lower-bounds
any order-r approximation error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (DefectiveEigenstructure, DimensionMismatch, InitFailure,
                     SingularE, UnstableSystem)
from .projection import ProjectionBasis, expansion_directions, orthonormalize_append
from .system import DescriptorSystem, ReducedSystem

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class DominantPole:
    lam: complex
    dominance: float
    residue_norm: float


def dominant_poles(full: DescriptorSystem, k: int) -> list[DominantPole]:
    """Top-k dominant poles, one representative per conjugate pair, Im >= 0.

    Dominance of an eigentriplet (lambda, x, y) is ||R||_2 / |Re lambda|
    with the residue R = (C x)(y* B) / (y* E x).  Poles with Re >= 0 have no
    finite decay rate; they are excluded with a warning.
    """
    try:
        w, vl, vr = sla.eig(full.A, full.E, left=True, right=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise InitFailure("eigentriplet computation failed") from exc
    out = []
    n_unstable = 0
    for i in range(w.size):
        lam = w[i]
        if not np.isfinite(lam):
            continue
        if lam.imag < -1e-12 * max(1.0, abs(lam)):
            continue  # conjugate partner carries the same metric
        if lam.real >= 0:
            n_unstable += 1
            continue
        x = vr[:, i]
        y = vl[:, i]
        denom = np.conj(y) @ (full.E @ x)
        if abs(denom) < 1e-300:
            continue
        res_norm = float(np.linalg.norm(full.C @ x) * np.linalg.norm(np.conj(y) @ full.B) / abs(denom))
        out.append(DominantPole(complex(lam), res_norm / abs(lam.real), res_norm))
    if n_unstable:
        warnings.warn(f"excluded {n_unstable} pole(s) with nonnegative real part from dominance ranking",
                      RuntimeWarning, stacklevel=2)
    out.sort(key=lambda dp: (-dp.dominance, dp.lam.imag, dp.lam.real))
    return out[:k]


def initial_subspaces(full: DescriptorSystem, ell: int, min_dim: int = 0) -> ProjectionBasis:
    """Seed basis interpolating H at the imaginary parts of dominant poles.

    Uses the ``ell`` most dominant poles, continuing down the ranking (and
    deduplicating interpolation frequencies) until the basis dimension
    exceeds ``min_dim``.
    """
    ranked = dominant_poles(full, full.n)
    if not ranked:
        raise InitFailure("no stable poles available for subspace seeding")
    basis = ProjectionBasis.empty(full.n)
    used = []
    for i, dp in enumerate(ranked):
        freq = abs(dp.lam.imag)
        if any(abs(freq - u) <= 1e-12 * max(1.0, u) for u in used):
            continue
        basis = orthonormalize_append(basis, *expansion_directions(full, freq))
        used.append(freq)
        if len(used) >= ell and basis.k > min_dim:
            break
    if basis.k <= min_dim:
        raise InitFailure(f"seed basis dimension {basis.k} did not exceed {min_dim}")
    return basis


def _psd_factor(P: np.ndarray) -> np.ndarray:
    """Factor L with P = L L' for a (numerically) PSD matrix."""
    P = 0.5 * (P + P.T)
    try:
        return sla.cholesky(P, lower=True)
    except sla.LinAlgError:
        vals, vecs = sla.eigh(P)
        vals = np.clip(vals, 0.0, None)
        return vecs * np.sqrt(vals)


def balanced_truncation(full: DescriptorSystem, r: int):
    """Balance-and-truncate to order r; also returns all Hankel values.

    Dense only: requires an invertible E and an asymptotically stable
    system.  The two Lyapunov equations are solved with the dense
    Schur-based solver; the square-root method then balances the grammians
    and truncates.  Returns ``(DescriptorSystem of order r, hankel)``.
    """
    n = full.n
    if not (1 <= r <= n):
        raise DimensionMismatch(f"target order r={r} out of range for n={n}")
    if np.linalg.cond(full.E) > 1.0 / (1e4 * _EPS):
        raise SingularE("balanced truncation requires an invertible E")
    As = sla.solve(full.E, full.A)
    Bs = sla.solve(full.E, full.B)
    ev = sla.eigvals(As)
    if np.max(ev.real) >= 0:
        raise UnstableSystem(f"system not asymptotically stable (max Re pole = {np.max(ev.real):.3g})")
    P = sla.solve_continuous_lyapunov(As, -Bs @ Bs.T)
    Q = sla.solve_continuous_lyapunov(As.T, -full.C.T @ full.C)
    Lp = _psd_factor(P)
    Lq = _psd_factor(Q)
    U, hankel, Vt = sla.svd(Lq.T @ Lp)
    s_r = hankel[:r]
    if s_r[-1] <= 1e3 * _EPS * hankel[0]:
        warnings.warn("truncated Hankel values are at noise level; reduced model may be unbalanced",
                      RuntimeWarning, stacklevel=2)
    s_half = 1.0 / np.sqrt(np.maximum(s_r, 1e-300))
    T = Lp @ Vt[:r].T * s_half
    Tl = (s_half[:, None] * U[:, :r].T) @ Lq.T
    bt = DescriptorSystem(np.eye(r), Tl @ As @ T, Tl @ Bs, full.C @ T, full.D)
    return bt, hankel


def to_canonical(Ahat, Ehat, Bhat, Chat, Dhat) -> ReducedSystem:
    """Convert a dense order-r model to tridiagonal-A / identity-E form.

    Builds a real block-diagonal matrix with the pencil's eigenvalues (2x2
    blocks [[a, b], [-b, a]] for a +- ib pairs, scalars for real ones) and
    chains the two eigendecompositions, matched by sorting both eigenvalue
    sets lexicographically by (Re, Im).  The transfer function is preserved.
    """
    Ahat = np.asarray(Ahat, dtype=float)
    Ehat = np.asarray(Ehat, dtype=float)
    Bhat = np.atleast_2d(np.asarray(Bhat, dtype=float))
    Chat = np.atleast_2d(np.asarray(Chat, dtype=float))
    Dhat = np.atleast_2d(np.asarray(Dhat, dtype=float))
    r = Ahat.shape[0]
    try:
        M = sla.solve(Ehat, Ahat)
        Bs = sla.solve(Ehat, Bhat)
    except sla.LinAlgError as exc:
        raise SingularE("canonical conversion requires an invertible E") from exc
    lam, V = sla.eig(M)
    if np.linalg.cond(V) > 1e10:
        raise DefectiveEigenstructure("eigenvector basis too ill-conditioned; poles not semi-simple")

    # real block-diagonal carrier of the spectrum (pairs come consecutively
    # from the real eigensolver, positive imaginary part first)
    T2 = np.zeros((r, r))
    i = 0
    while i < r:
        li = lam[i]
        if abs(li.imag) <= 1e-12 * max(1.0, abs(li)):
            T2[i, i] = li.real
            i += 1
        else:
            a, b = li.real, abs(li.imag)
            T2[i:i + 2, i:i + 2] = [[a, b], [-b, a]]
            i += 2
    lam2, V2 = sla.eig(T2)

    order1 = np.lexsort((lam.imag, lam.real))
    order2 = np.lexsort((lam2.imag, lam2.real))
    V = V[:, order1]
    V2 = V2[:, order2]

    B0 = V2 @ sla.solve(V, Bs.astype(complex))
    C0 = (Chat.astype(complex) @ V) @ np.linalg.inv(V2)
    imag_level = max(np.abs(B0.imag).max(initial=0.0), np.abs(C0.imag).max(initial=0.0))
    scale = max(np.abs(B0).max(initial=1.0), np.abs(C0).max(initial=1.0), 1.0)
    if imag_level > 1e-6 * scale:
        raise DefectiveEigenstructure(f"canonical factors not real (imag level {imag_level:.2e})")
    return ReducedSystem(
        a_diag=np.diag(T2).copy(),
        a_sub=np.diag(T2, -1).copy() if r > 1 else np.zeros(0),
        a_sup=np.diag(T2, 1).copy() if r > 1 else np.zeros(0),
        e_diag=np.ones(r),
        B_red=B0.real,
        C_red=C0.real,
        D_red=Dhat,
    )
