"""Descriptor-system data model and frequency-domain evaluation.

A full-order model is a real matrix quintuple (E, A, B, C, D) with transfer
function H(s) = C (sE - A)^{-1} B + D.  Reduced-order candidates carry a
structured parameterization (tridiagonal A part, diagonal E part) whose free
entries are exchanged with the optimizer through a flat parameter vector with
the fixed layout::

    [a_diag | a_sub | a_sup | e_diag | vec(B) | vec(C) | vec(D)]

where ``vec`` stacks columns.  The layout is frozen: gradient assembly and
quasi-Newton state depend on it.

Frequency sweeps work through *response providers*: callables mapping an
array of frequencies ``omega`` to the stacked values ``H(i omega)`` of shape
``(len(omega), p, m)``.  Anything that needs the response of "some system"
accepts a provider, so a full model and a projected small model are
interchangeable.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import DecompositionFailure, DimensionMismatch, SingularPencil

_EPS = np.finfo(float).eps

# dense eigen-solves beyond this order are refused / warned about
_POLES_HARD_LIMIT = 20000
_POLES_WARN_LIMIT = 2000


def _as_matrix(M, name, dtype=float):
    M = np.asarray(M, dtype=dtype)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {M.shape}")
    return M


@dataclass(frozen=True)
class DescriptorSystem:
    """Dense real descriptor system E x' = A x + B u, y = C x + D u.

    The pencil s*E - A must be regular; this is checked probabilistically at
    construction by testing invertibility at two random complex points.
    ``n = 0`` is permitted and describes the static system H(s) = D.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    probe_seed: int = 7

    def __post_init__(self):
        E = _as_matrix(self.E, "E")
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n) or E.shape != (n, n):
            raise DimensionMismatch(f"A and E must be square and equal-sized, got {A.shape}, {E.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected n={n}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C has {C.shape[1]} columns, expected n={n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(f"D has shape {D.shape}, expected ({C.shape[0]}, {B.shape[1]})")
        for name, M in (("E", E), ("A", A), ("B", B), ("C", C), ("D", D)):
            if M.size and not np.all(np.isfinite(M)):
                raise ValueError(f"{name} contains non-finite entries")
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        if n > 0:
            self._check_regular()

    def _check_regular(self):
        rng = np.random.default_rng(self.probe_seed)
        ok = 0
        for _ in range(4):
            s = (0.5 + rng.random()) * np.exp(2j * np.pi * rng.random())
            if _rcond(s * self.E - self.A) > _EPS:
                ok += 1
                if ok == 2:
                    return
        raise SingularPencil("pencil s*E - A appears singular (regularity probe failed)")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class ReducedSystem:
    """Structured order-r system: tridiagonal A part, diagonal E part.

    Free entries: the three A diagonals, the E diagonal, and dense B, C, D.
    """

    a_diag: np.ndarray
    a_sub: np.ndarray
    a_sup: np.ndarray
    e_diag: np.ndarray
    B_red: np.ndarray
    C_red: np.ndarray
    D_red: np.ndarray

    def __post_init__(self):
        a_diag = np.atleast_1d(np.asarray(self.a_diag, dtype=float))
        a_sub = np.atleast_1d(np.asarray(self.a_sub, dtype=float)).reshape(-1)
        a_sup = np.atleast_1d(np.asarray(self.a_sup, dtype=float)).reshape(-1)
        e_diag = np.atleast_1d(np.asarray(self.e_diag, dtype=float))
        r = a_diag.size
        if r < 1:
            raise DimensionMismatch("reduced order r must be >= 1")
        if a_sub.size != r - 1 or a_sup.size != r - 1:
            raise DimensionMismatch(f"off-diagonals must have length r-1={r - 1}, got {a_sub.size}, {a_sup.size}")
        if e_diag.size != r:
            raise DimensionMismatch(f"e_diag must have length r={r}, got {e_diag.size}")
        B = _as_matrix(self.B_red, "B_red")
        C = _as_matrix(self.C_red, "C_red")
        D = _as_matrix(self.D_red, "D_red")
        if B.shape[0] != r or C.shape[1] != r or D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch("B_red/C_red/D_red dimensions inconsistent with r, m, p")
        for name, M in (("a_diag", a_diag), ("a_sub", a_sub), ("a_sup", a_sup), ("e_diag", e_diag),
                        ("B_red", B), ("C_red", C), ("D_red", D)):
            if M.size and not np.all(np.isfinite(M)):
                raise ValueError(f"{name} contains non-finite entries")
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def r(self) -> int:
        return self.a_diag.size

    @property
    def m(self) -> int:
        return self.B_red.shape[1]

    @property
    def p(self) -> int:
        return self.C_red.shape[0]

    def A_matrix(self) -> np.ndarray:
        """Assemble the tridiagonal A part as a dense r x r matrix."""
        A = np.diag(self.a_diag)
        if self.r > 1:
            A += np.diag(self.a_sub, -1) + np.diag(self.a_sup, 1)
        return A

    def E_matrix(self) -> np.ndarray:
        return np.diag(self.e_diag)

    def to_descriptor(self) -> DescriptorSystem:
        """View as a dense DescriptorSystem (runs the regularity probe)."""
        return DescriptorSystem(self.E_matrix(), self.A_matrix(), self.B_red, self.C_red, self.D_red)


@dataclass(frozen=True)
class SingularTriplet:
    """Largest singular value of an evaluated error matrix with unit pair.

    ``degenerate`` is set when the two largest singular values coincide to
    1e-12 relative; the triplet then only induces a subgradient.
    """

    sigma: float
    u: np.ndarray
    v: np.ndarray
    degenerate: bool = False


# ---------------------------------------------------------------------------
# parameter vector packing


def param_length(r: int, m: int, p: int) -> int:
    """Number of free entries of an order-r reduced system: 4r-2+rm+pr+pm."""
    return 4 * r - 2 + r * m + p * r + p * m


def pack(red: ReducedSystem) -> np.ndarray:
    """Flatten a ReducedSystem into the frozen parameter-vector layout."""
    return np.concatenate([
        red.a_diag, red.a_sub, red.a_sup, red.e_diag,
        red.B_red.flatten(order="F"),
        red.C_red.flatten(order="F"),
        red.D_red.flatten(order="F"),
    ])


def unpack(x: np.ndarray, r: int, m: int, p: int) -> ReducedSystem:
    """Inverse of :func:`pack` for the given dimensions."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != param_length(r, m, p):
        raise DimensionMismatch(f"parameter vector has length {x.size}, expected {param_length(r, m, p)}")
    pos = 0

    def take(k):
        nonlocal pos
        out = x[pos:pos + k]
        pos += k
        return out

    a_diag = take(r)
    a_sub = take(r - 1)
    a_sup = take(r - 1)
    e_diag = take(r)
    B = take(r * m).reshape((r, m), order="F")
    C = take(p * r).reshape((p, r), order="F")
    D = take(p * m).reshape((p, m), order="F")
    return ReducedSystem(a_diag, a_sub, a_sup, e_diag, B, C, D)


# ---------------------------------------------------------------------------
# pointwise transfer-function evaluation


def _rcond(M: np.ndarray) -> float:
    """Reciprocal 1-norm condition estimate of a dense matrix via LU."""
    M = np.ascontiguousarray(M, dtype=complex)
    anorm = np.linalg.norm(M, 1) if M.size else 1.0
    lu, piv, info = lapack.zgetrf(M)
    if info != 0:
        return 0.0
    rc, info = lapack.zgecon(lu, anorm)
    return float(rc) if info == 0 else 0.0


def shifted_solve(sys: DescriptorSystem, s: complex, rhs: np.ndarray) -> np.ndarray:
    """Solve (s E - A) X = rhs with a singularity check.

    Raises SingularPencil when the factorization reports a reciprocal
    condition estimate below machine epsilon, which signals that ``s`` is
    numerically a pole of the system.
    """
    n = sys.n
    if n == 0:
        return np.zeros((0, rhs.shape[1]), dtype=complex)
    T = s * sys.E - sys.A
    anorm = np.linalg.norm(T, 1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(T)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularPencil(f"factorization of sE - A failed at s={s}") from exc
    rc, info = lapack.zgecon(lu, anorm)
    if info != 0 or not np.isfinite(rc) or rc < _EPS:
        raise SingularPencil(f"sE - A numerically singular at s={s} (rcond={rc:.2e})")
    return sla.lu_solve((lu, piv), np.asarray(rhs, dtype=complex))


def transfer_eval(sys: DescriptorSystem, s: complex) -> np.ndarray:
    """Evaluate H(s) = C (sE - A)^{-1} B + D via one dense solve."""
    if sys.n == 0:
        return sys.D.astype(complex)
    X = shifted_solve(sys, s, sys.B)
    return sys.C @ X + sys.D


def reduced_transfer_eval(red: ReducedSystem, s: complex) -> np.ndarray:
    """Evaluate the reduced transfer function at one point.

    Uses the tridiagonal LU of s*E_red - A_red, so the cost is O(r m).
    """
    r = red.r
    d = s * red.e_diag - red.a_diag
    dl = (-red.a_sub).astype(complex)
    du = (-red.a_sup).astype(complex)
    d = d.astype(complex)
    if r <= 2:  # tridiagonal LAPACK path needs r >= 3
        T = np.diag(d)
        if r == 2:
            T[1, 0] = dl[0]
            T[0, 1] = du[0]
        if _rcond(T) < _EPS:
            raise SingularPencil(f"s*E_red - A_red numerically singular at s={s}")
        X = np.linalg.solve(T, red.B_red.astype(complex))
        return red.C_red @ X + red.D_red
    # 1-norm of the tridiagonal matrix, by columns
    col = np.abs(d).copy()
    col[:-1] += np.abs(dl)
    col[1:] += np.abs(du)
    anorm = float(col.max())
    dl_f, d_f, du_f, du2, ipiv, info = lapack.zgttrf(dl, d, du)
    if info != 0:
        raise SingularPencil(f"s*E_red - A_red singular at s={s}")
    rc, info = lapack.zgtcon(dl_f, d_f, du_f, du2, ipiv, anorm)
    if info != 0 or not np.isfinite(rc) or rc < _EPS:
        raise SingularPencil(f"s*E_red - A_red numerically singular at s={s} (rcond={rc:.2e})")
    X, info = lapack.zgttrs(dl_f, d_f, du_f, du2, ipiv, red.B_red.astype(complex))
    if info != 0:
        raise SingularPencil(f"tridiagonal solve failed at s={s}")
    return red.C_red @ X + red.D_red


# ---------------------------------------------------------------------------
# response providers (vectorized frequency sweeps)


def _thread_count() -> int:
    raw = os.environ.get("LINF_MOR_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _dense_response(sys: DescriptorSystem):
    E, A, B, C, D = sys.E, sys.A, sys.B, sys.C, sys.D
    n = sys.n
    if n == 0:
        return lambda omegas: np.broadcast_to(D.astype(complex), (len(np.atleast_1d(omegas)),) + D.shape).copy()
    chunk = max(1, int(4.0e7 / (16 * n * n)))

    def _eval_chunk(w):
        T = 1j * w[:, None, None] * E - A
        X = np.linalg.solve(T, B[None].astype(complex))
        return C @ X + D

    def response(omegas):
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        pieces = [w[i:i + chunk] for i in range(0, len(w), chunk)]
        workers = _thread_count()
        if workers > 1 and len(pieces) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outs = list(pool.map(_eval_chunk, pieces))
        else:
            outs = [_eval_chunk(piece) for piece in pieces]
        return np.concatenate(outs, axis=0)

    return response


def _modal_response(sys: DescriptorSystem):
    """Diagonalized evaluator H(iw) = Ct diag(1/(iw - lam)) Bt + D, or None.

    Requires an invertible E and a well-conditioned eigenbasis; accuracy is
    verified against direct solves at probe frequencies before use.
    """
    n = sys.n
    if n == 0:
        return None
    if _rcond(sys.E) < 1e4 * _EPS:
        return None
    try:
        As = sla.solve(sys.E, sys.A)
        Bs = sla.solve(sys.E, sys.B)
        lam, V = sla.eig(As)
        Ct = sys.C @ V
        Bt = sla.solve(V, Bs.astype(complex))
    except sla.LinAlgError:
        return None
    D = sys.D

    def response(omegas):
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        den = 1.0 / (1j * w[:, None] - lam[None, :])
        return np.einsum("pk,wk,km->wpm", Ct, den, Bt) + D

    # verify against the dense path at a few frequencies
    scale = max(1.0, float(np.max(np.abs(lam.imag))) if n else 1.0)
    probes = np.array([0.0, 0.37 * scale, 1.11 * scale])
    try:
        direct = np.stack([transfer_eval(sys, 1j * w) for w in probes])
    except SingularPencil:
        return None
    got = response(probes)
    err = np.linalg.norm(got - direct) / max(np.linalg.norm(direct), 1e-30)
    if not np.isfinite(err) or err > 1e-9:
        return None
    return response


def frequency_response(sys: DescriptorSystem):
    """Build a vectorized response provider for a full/projected system.

    Prefers a one-time diagonalization (cheap per-frequency evaluation,
    verified against direct solves); falls back to chunked batched dense
    solves when E is singular or the eigenbasis is ill-conditioned.
    """
    resp = _modal_response(sys)
    if resp is not None:
        return resp
    return _dense_response(sys)


def reduced_response(red: ReducedSystem):
    """Vectorized response provider for a ReducedSystem (batched solves)."""
    A = red.A_matrix()
    Ed = np.diag(red.e_diag)
    B = red.B_red.astype(complex)
    C, D = red.C_red, red.D_red

    def response(omegas):
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        T = 1j * w[:, None, None] * Ed - A
        X = np.linalg.solve(T, B[None])
        return C @ X + D

    return response


def as_response(obj):
    """Coerce a system or provider into a response provider."""
    if isinstance(obj, DescriptorSystem):
        return frequency_response(obj)
    if isinstance(obj, ReducedSystem):
        return reduced_response(obj)
    if callable(obj):
        return obj
    raise TypeError(f"cannot interpret {type(obj).__name__} as a frequency-response provider")


# ---------------------------------------------------------------------------


def error_sigma(full_eval, red, omega: float) -> SingularTriplet:
    """Largest singular value (with unit singular pair) of the error matrix.

    Evaluates H_full(i omega) - H_red(i omega) where either side may be a
    DescriptorSystem, a ReducedSystem or a response provider, and returns the
    dominant singular triplet.  When the top two singular values coincide to
    1e-12 relative the triplet is flagged ``degenerate``: it is then only one
    subgradient generator among many.
    """
    omega = float(omega)
    if not np.isfinite(omega):
        raise ValueError("omega must be finite")
    w = np.array([omega])
    M = as_response(full_eval)(w)[0] - as_response(red)(w)[0]
    if not np.all(np.isfinite(M)):
        raise SingularPencil(f"error matrix non-finite at omega={omega}")
    try:
        U, s, Vh = np.linalg.svd(M)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure("SVD of error matrix failed") from exc
    degenerate = s.size > 1 and (s[0] - s[1]) <= 1e-12 * max(s[0], 1e-300)
    return SingularTriplet(float(s[0]), U[:, 0].copy(), Vh[0].conj().copy(), degenerate)


def poles(sys: DescriptorSystem):
    """Finite generalized eigenvalues of the pencil (A, E).

    Returns ``(finite, n_infinite)`` where infinite eigenvalues (from a
    singular E) are filtered out and counted.
    """
    n = sys.n
    if n > _POLES_HARD_LIMIT:
        raise DimensionMismatch(f"dense pole computation refused for n={n} > {_POLES_HARD_LIMIT}")
    if n > _POLES_WARN_LIMIT:
        warnings.warn(f"dense pole computation for n={n} may be slow", RuntimeWarning, stacklevel=2)
    if n == 0:
        return np.zeros(0, dtype=complex), 0
    try:
        w = sla.eigvals(sys.A, sys.E)
    except (sla.LinAlgError, ValueError) as exc:
        raise DecompositionFailure("generalized eigenvalue computation failed") from exc
    finite = w[np.isfinite(w)]
    return finite, int(n - finite.size)
