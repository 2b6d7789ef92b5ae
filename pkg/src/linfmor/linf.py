"""Global maximization of a scalar frequency curve over omega >= 0.

The oracle samples sigma(omega) on a composite grid (caller hints, a
logarithmic sweep plus omega = 0, and a short equispaced seed derived from
pole imaginary parts when available), locates discrete local maxima, and
polishes each one with safeguarded parabolic interpolation falling back to
golden sections.  All brackets are refined in lockstep so that one round
costs a single vectorized call of ``sigma``.

``sigma`` must accept an ndarray of frequencies and return an ndarray of
values.  Everything here is deterministic: identical inputs and options
yield identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BracketInvalid, NoFinite, SingularPencil, Unbounded

_EPS = np.finfo(float).eps
_GOLD = 0.3819660112501051


@dataclass(frozen=True)
class LinfOptions:
    """Tuning knobs for the norm oracle."""

    grid_points: int = 2048
    omega_cap: float | None = None
    refine_tol: float = 1e-10
    cluster_rel: float = 1e-4
    max_refine_iters: int = 100

    def __post_init__(self):
        if self.grid_points < 16:
            raise ValueError("grid_points must be >= 16")
        if not (0.0 < self.refine_tol < 1.0):
            raise ValueError("refine_tol must lie in (0, 1)")
        if not (0.0 < self.cluster_rel < 1.0):
            raise ValueError("cluster_rel must lie in (0, 1)")


@dataclass(frozen=True)
class LinfResult:
    """Norm value with the argmax and the cluster of near-global maximizers.

    ``maximizers`` holds every refined maximizer whose value is within
    ``cluster_rel`` (relative) of the best one, sorted ascending, with the
    matching values in ``maximizer_values``.  ``degenerate`` flags more than
    one near-global maximizer.
    """

    value: float
    omega_star: float
    maximizers: np.ndarray
    degenerate: bool
    maximizer_values: np.ndarray


def _build_grid(hints, pole_imag, opts: LinfOptions):
    hints = np.asarray(list(hints), dtype=float) if len(hints) else np.zeros(0)
    hints = hints[np.isfinite(hints)]
    hints = np.clip(hints, 0.0, None)
    scale = None
    if pole_imag is not None and len(pole_imag):
        scale = float(np.max(np.abs(pole_imag)))
    cap = opts.omega_cap
    if cap is None:
        if scale is not None:
            cap = 10.0 * max(1.0, scale)
        elif hints.size:
            cap = 10.0 * max(1.0, float(hints.max()))
        else:
            cap = 1e4
    if hints.size:
        cap = max(cap, 1.1 * float(hints.max()))
    lo = cap * 1e-9
    pts = [np.zeros(1), np.logspace(np.log10(lo), np.log10(cap), opts.grid_points), hints]
    if scale is not None and scale > 0:
        pts.append(np.clip(np.linspace(-0.1, 2.0 * scale, 15), 0.0, None))
    grid = np.unique(np.concatenate(pts))
    return grid


def _sample(sigma, omegas):
    """Evaluate the curve, mapping pointwise pole hits to +inf."""
    try:
        vals = np.asarray(sigma(omegas), dtype=float).reshape(-1)
        if vals.size == omegas.size:
            return vals
    except (SingularPencil, np.linalg.LinAlgError):
        pass
    vals = np.empty(omegas.size)
    for i, wi in enumerate(omegas):
        try:
            vals[i] = float(np.asarray(sigma(np.array([wi]))).reshape(-1)[0])
        except (SingularPencil, np.linalg.LinAlgError):
            vals[i] = np.inf
    return vals


def _candidate_indices(vals):
    """Indices of discrete local maxima, with plateau runs represented by
    their first and last index (covers constant curves and flat tops)."""
    n = vals.size
    mask = np.zeros(n, dtype=bool)
    if n == 1:
        mask[0] = True
    else:
        mask[0] = vals[0] >= vals[1]
        mask[-1] = vals[-1] >= vals[-2]
        if n > 2:
            interior = (vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])
            mask[1:-1] = interior
    idx = np.where(mask)[0]
    if idx.size == 0:
        idx = np.array([int(np.argmax(vals))])
    reps = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i == prev + 1:
            prev = i
            continue
        reps.extend({start, prev})
        start = prev = i
    reps.extend({start, prev})
    return np.unique(np.array(sorted(reps), dtype=int))


def _refine_brackets(sigma, a, b, x, fx, refine_tol, max_iters):
    """Lockstep Brent-style maximization of sigma inside brackets [a, b].

    ``x`` are interior (or boundary) starting points with known values
    ``fx``.  Returns the per-bracket incumbent (location, value); the
    incumbent never decreases.  One vectorized call of sigma per round.
    """
    a = np.asarray(a, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    x = np.asarray(x, dtype=float).copy()
    g = -np.asarray(fx, dtype=float)  # minimize g = -sigma
    w = x.copy()
    v = x.copy()
    gw = g.copy()
    gv = g.copy()
    d = np.zeros_like(x)
    e = np.zeros_like(x)
    best_x = x.copy()
    best_f = -g.copy()
    active = np.ones(x.size, dtype=bool)

    for _ in range(max_iters):
        idx = np.where(active)[0]
        if idx.size == 0:
            break
        xm = 0.5 * (a[idx] + b[idx])
        tol1 = 0.25 * refine_tol * np.maximum(1.0, np.abs(x[idx])) + 1e-300
        tol2 = 2.0 * tol1
        done = np.abs(x[idx] - xm) <= tol2 - 0.5 * (b[idx] - a[idx])
        active[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            continue
        xm = 0.5 * (a[idx] + b[idx])
        tol1 = 0.25 * refine_tol * np.maximum(1.0, np.abs(x[idx])) + 1e-300
        tol2 = 2.0 * tol1

        xi, wi, vi = x[idx], w[idx], v[idx]
        gi, gwi, gvi = g[idx], gw[idx], gv[idx]
        rr = (xi - wi) * (gi - gvi)
        qq = (xi - vi) * (gi - gwi)
        pp = (xi - vi) * qq - (xi - wi) * rr
        qq = 2.0 * (qq - rr)
        pp = np.where(qq > 0, -pp, pp)
        qq = np.abs(qq)
        etemp = e[idx]
        accept = (np.abs(e[idx]) > tol1) & (qq != 0) \
            & (np.abs(pp) < np.abs(0.5 * qq * etemp)) \
            & (pp > qq * (a[idx] - xi)) & (pp < qq * (b[idx] - xi))
        d_par = np.where(qq != 0, pp / np.where(qq == 0, 1.0, qq), 0.0)
        u_par = xi + d_par
        near_edge = ((u_par - a[idx]) < tol2) | ((b[idx] - u_par) < tol2)
        d_par = np.where(near_edge, np.copysign(tol1, xm - xi), d_par)
        e_gold = np.where(xi >= xm, a[idx] - xi, b[idx] - xi)
        d_gold = _GOLD * e_gold
        e[idx] = np.where(accept, d[idx], e_gold)
        d[idx] = np.where(accept, d_par, d_gold)
        step = np.where(np.abs(d[idx]) >= tol1, d[idx], np.copysign(tol1, d[idx]))
        u = xi + step

        gu = -_sample(sigma, u)
        gu = np.where(np.isfinite(gu), gu, np.inf)

        improved = gu <= gi
        a[idx] = np.where(improved & (u >= xi), xi, np.where(~improved & (u < xi), u, a[idx]))
        b[idx] = np.where(improved & (u < xi), xi, np.where(~improved & (u >= xi), u, b[idx]))
        # point shuffles (Brent bookkeeping)
        v[idx] = np.where(improved, wi, v[idx])
        gv[idx] = np.where(improved, gwi, gv[idx])
        w[idx] = np.where(improved, xi, w[idx])
        gw[idx] = np.where(improved, gi, gw[idx])
        x[idx] = np.where(improved, u, x[idx])
        g[idx] = np.where(improved, gu, g[idx])
        second = ~improved & ((gu <= gwi) | (wi == xi))
        third = ~improved & ~second & ((gu <= gvi) | (vi == xi) | (vi == wi))
        v[idx] = np.where(second, w[idx], np.where(third, u, v[idx]))
        gv[idx] = np.where(second, gw[idx], np.where(third, gu, gv[idx]))
        w[idx] = np.where(second, u, w[idx])
        gw[idx] = np.where(second, gu, gw[idx])

        gain = -gu > best_f[idx]
        best_x[idx] = np.where(gain, u, best_x[idx])
        best_f[idx] = np.where(gain, -gu, best_f[idx])

    return best_x, best_f


def _slope_polish(sigma, w0, f0, max_steps=3):
    """Newton-polish a maximizer via the central-difference slope.

    Value-based bracket refinement locates a smooth peak only to about
    sqrt(eps) relative (the curve is flat there); driving the slope to zero
    recovers the location to near machine precision, which downstream
    gradient assembly and maximizer comparisons rely on.  Returns a
    (location, value) pair whose value never falls below ``f0``.
    """
    scale = max(1.0, abs(w0))
    h = 6e-6 * scale
    if not np.isfinite(f0) or w0 < 2.0 * h:
        return w0, f0  # boundary peak: the location is exact already
    best_w, best_f = w0, f0
    w = w0
    for _ in range(max_steps):
        fm, fc, fp = _sample(sigma, np.array([w - h, w, w + h]))
        for wi, fi in ((w - h, fm), (w, fc), (w + h, fp)):
            if np.isfinite(fi) and fi > best_f:
                best_w, best_f = wi, fi
        slope = (fp - fm) / (2.0 * h)
        curv = (fp - 2.0 * fc + fm) / (h * h)
        if not (np.isfinite(slope) and np.isfinite(curv)) or curv >= 0.0:
            break
        step = -slope / curv
        if abs(step) > 0.1 * scale or w + step <= 0.0:
            break
        w = w + step
        if abs(step) <= 1e-12 * scale:
            break
    fw = float(_sample(sigma, np.array([w]))[0])
    # prefer the polished location even when its value reads a few ulps
    # below the incumbent (the incumbent rides rounding noise at the top)
    if np.isfinite(fw) and fw >= best_f - 1e-9 * abs(best_f):
        return w, max(fw, best_f)
    return best_w, best_f


def local_max_refine(sigma, bracket, refine_tol: float = 1e-10, max_iters: int = 100):
    """Polish one local maximum inside ``bracket = (lo, mid, hi)``.

    Requires lo < mid < hi with sigma(mid) >= max(sigma(lo), sigma(hi));
    returns ``(omega_hat, sigma(omega_hat))``.  The incumbent value is
    monotone non-decreasing during the iteration.
    """
    lo, mid, hi = (float(t) for t in bracket)
    if not (lo < mid < hi):
        raise BracketInvalid(f"need lo < mid < hi, got {bracket}")
    vals = _sample(sigma, np.array([lo, mid, hi]))
    if not (vals[1] >= vals[0] and vals[1] >= vals[2]):
        raise BracketInvalid("sigma(mid) must dominate the bracket endpoints")
    xs, fs = _refine_brackets(sigma, [lo], [hi], [mid], [vals[1]], refine_tol, max_iters)
    return float(xs[0]), float(fs[0])


def linf_norm(sigma, hints=(), opts: LinfOptions | None = None, pole_imag=None) -> LinfResult:
    """Maximize ``sigma`` over omega >= 0 and report near-global maximizers.

    Parameters
    ----------
    sigma
        Vectorized curve: ndarray of frequencies -> ndarray of values.
    hints
        Extra sample frequencies (previous maximizers, known features).
    pole_imag
        Imaginary parts of nearby system poles; used for the auto frequency
        cap and a short equispaced seed on [0, 2 max|Im pole|].

    Raises
    ------
    Unbounded
        Samples blow past 1/eps times the median (pole on the axis).
    NoFinite
        Every sample was non-finite.
    """
    opts = opts or LinfOptions()
    grid = _build_grid(hints, pole_imag, opts)
    vals = _sample(sigma, grid)

    finite = np.isfinite(vals)
    if not finite.any():
        raise NoFinite("no finite samples on the frequency grid")
    fin_vals = vals[finite]
    med = float(np.median(fin_vals))
    if not finite.all():
        raise Unbounded("non-finite samples on the grid suggest a pole on the imaginary axis")
    if med > 0 and float(fin_vals.max()) > med / _EPS:
        raise Unbounded("sampled values exceed 1/eps times the median level")

    reps = _candidate_indices(vals)
    if reps.size > 256:
        order = np.argsort(-vals[reps], kind="stable")[:256]
        top = reps[order]
        if int(np.argmax(vals)) not in top:
            top = np.append(top, int(np.argmax(vals)))
        reps = np.unique(top)
    lo = grid[np.maximum(reps - 1, 0)]
    hi = grid[np.minimum(reps + 1, grid.size - 1)]
    xs, fs = _refine_brackets(sigma, lo, hi, grid[reps], vals[reps],
                              opts.refine_tol, opts.max_refine_iters)

    # merge refined points that collapsed onto the same maximizer
    order = np.argsort(xs, kind="stable")
    xs, fs = xs[order], fs[order]
    keep_x, keep_f = [], []
    for xi, fi in zip(xs, fs):
        if keep_x and abs(xi - keep_x[-1]) <= 1e2 * opts.refine_tol * max(1.0, abs(xi)):
            if fi > keep_f[-1]:
                keep_x[-1], keep_f[-1] = xi, fi
        else:
            keep_x.append(xi)
            keep_f.append(fi)
    xs = np.array(keep_x)
    fs = np.array(keep_f)

    # slope-polish the leading maximizers: bracket refinement leaves a
    # sqrt(eps) location fuzz that gradient assembly downstream would inherit
    order = np.argsort(-fs, kind="stable")
    top = float(fs[order[0]])
    for j in order[:8]:
        if fs[j] >= (1.0 - 1e-6) * top:
            xs[j], fs[j] = _slope_polish(sigma, float(xs[j]), float(fs[j]))

    # omega = 0 (always on the grid) stands in for any refined point it ties
    # at rounding level, so plateau curves report the canonical omega = 0
    sigma0 = float(vals[0]) if grid[0] == 0.0 else -np.inf
    best = float(fs.max())
    if sigma0 >= best - 1e-12 * abs(best) and xs[0] != 0.0:
        xs = np.concatenate([[0.0], xs])
        fs = np.concatenate([[sigma0], fs])
    near = fs >= (1.0 - opts.cluster_rel) * best if best > 0 else np.ones_like(fs, dtype=bool)
    maximizers = xs[near]
    maxvals = fs[near]
    # argmax of value; values within a rounding-level window count as tied
    # and the tie goes to the smallest frequency
    tied = maxvals >= best - 1e-12 * abs(best)
    pick = int(np.argmin(maximizers[tied]))
    return LinfResult(
        value=best,
        omega_star=float(maximizers[tied][pick]),
        maximizers=maximizers,
        degenerate=maximizers.size > 1,
        maximizer_values=maxvals,
    )
