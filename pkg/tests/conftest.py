import math
import os
from pathlib import Path

import numpy as np
import pytest

from linfmor.system import DescriptorSystem, ReducedSystem, transfer_eval


def make_stable_system(rng, n, m, p, margin=0.5, e_mode="identity", d_scale=0.0):
    """Random asymptotically stable descriptor system."""
    A = rng.standard_normal((n, n))
    A -= (np.abs(np.linalg.eigvals(A).real).max() + margin) * np.eye(n)
    if e_mode == "identity":
        E = np.eye(n)
    elif e_mode == "general":
        E = np.eye(n) + 0.3 * rng.standard_normal((n, n))
        A = E @ A  # keeps eig(E^{-1}A) = eig(A untouched) stable
    else:
        raise ValueError(e_mode)
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = d_scale * rng.standard_normal((p, m))
    return DescriptorSystem(E, A, B, C, D)


def make_reduced(rng, r, m, p, stable=True):
    shift = 0.5 + rng.random(r) if stable else rng.standard_normal(r)
    return ReducedSystem(
        a_diag=-shift if stable else shift,
        a_sub=0.3 * rng.standard_normal(max(r - 1, 0)),
        a_sup=0.3 * rng.standard_normal(max(r - 1, 0)),
        e_diag=1.0 + 0.2 * rng.random(r),
        B_red=rng.standard_normal((r, m)),
        C_red=rng.standard_normal((p, r)),
        D_red=0.1 * rng.standard_normal((p, m)),
    )


def ring_derivatives(evaluate, s0, orders, rho, nodes=64):
    """Derivatives of an analytic matrix function via Cauchy-ring quadrature.

    ``evaluate`` maps a complex point to a matrix; spectrally accurate as
    long as the nearest singularity is well outside the radius ``rho``.
    """
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    samples = np.stack([evaluate(s0 + rho * np.exp(1j * t)) for t in theta])
    coeffs = np.fft.fft(samples, axis=0) / nodes
    return {j: math.factorial(j) * coeffs[j] / rho ** j for j in orders}


def augmented_error_system(full: DescriptorSystem, red: ReducedSystem) -> DescriptorSystem:
    """Block realization whose transfer function is H_full - H_red."""
    n, r = full.n, red.r
    E = np.zeros((n + r, n + r))
    A = np.zeros((n + r, n + r))
    E[:n, :n] = full.E
    E[n:, n:] = red.E_matrix()
    A[:n, :n] = full.A
    A[n:, n:] = red.A_matrix()
    B = np.vstack([full.B, red.B_red])
    C = np.hstack([full.C, -red.C_red])
    D = full.D - red.D_red
    return DescriptorSystem(E, A, B, C, D)


def sys_response_scalar(sys):
    return lambda s: transfer_eval(sys, s)


# ---------------------------------------------------------------------------
# optional public benchmark systems


def _benchmark_roots():
    roots = []
    env = os.environ.get("LINF_MOR_BENCHMARKS")
    if env:
        roots.append(Path(env))
    roots.append(Path(__file__).resolve().parent.parent / "benchmarks")
    return roots


def load_benchmark(name):
    """Load benchmarks/<name>/{A,B,C[,D][,E]}.mtx if present, else None."""
    import scipy.io
    import scipy.sparse

    for root in _benchmark_roots():
        d = root / name
        if not (d / "A.mtx").exists():
            continue

        def rd(f):
            M = scipy.io.mmread(str(f))
            return M.toarray() if scipy.sparse.issparse(M) else np.asarray(M, dtype=float)

        A = rd(d / "A.mtx")
        B = rd(d / "B.mtx")
        C = rd(d / "C.mtx")
        n = A.shape[0]
        E = rd(d / "E.mtx") if (d / "E.mtx").exists() else np.eye(n)
        D = rd(d / "D.mtx") if (d / "D.mtx").exists() else np.zeros((C.shape[0], B.shape[1]))
        return DescriptorSystem(E, A, B, C, D)
    return None


def require_benchmark(name):
    sys = load_benchmark(name)
    if sys is None:
        pytest.skip(f"benchmark '{name}' not available (set LINF_MOR_BENCHMARKS or add benchmarks/{name}/)")
    return sys
