"""
Steady-state absorptive optical bistability.

The state equation relates the normalized output X to the normalized input Y for
cooperativity C and normalized cavity detuning d:

    Y = X * [(1 + 2 C chi(X))^2 + d^2]
    chi(X) = 3 ln[(1 + sqrt(1 + 8X/3)) / 2] / (2X)

Everything here is dimensionless. Root finding never iterates open-ended: the
monotone pieces of Y(X) are bracketed by the turning points and refined by
bisection in log X, so the reported number of roots is exact.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

LOWER, UPPER, UNSTABLE = "lower", "upper", "unstable"

# chi is 0/0 at the origin; below this X use the Taylor series
CHI_SERIES_CUTOFF = 1e-4
_CHI_SERIES = (1.0, -1.0, 40 / 27, -70 / 27, 224 / 45)
_DCHI_SERIES = (-1.0, 80 / 27, -70 / 9, 896 / 45)

_GRID_POINTS = 256
_GOLDEN_ITERS = 60
_BISECT_ITERS = 80
_DEGENERATE_RTOL = 1e-12


def _poly(x, coeffs):
    out = np.zeros_like(x)
    for a in reversed(coeffs):
        out = out * x + a
    return out


def _nonneg(x, what="x"):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError(f"{what} must be >= 0")
    return x


def _chi(x):
    # unchecked core of chi; x is a float array with x >= 0
    x = np.asarray(x, dtype=float)
    small = x < CHI_SERIES_CUTOFF
    if not small.any():
        s = np.sqrt(1 + 8 * x / 3)
        return 1.5 * np.log1p((8 * x / 3) / (2 * (1 + s))) / x
    xs = np.where(small, CHI_SERIES_CUTOFF, x)
    s = np.sqrt(1 + 8 * xs / 3)
    big = 1.5 * np.log1p((8 * xs / 3) / (2 * (1 + s))) / xs
    return np.where(small, _poly(x, _CHI_SERIES), big)


def chi(x):
    """Saturation factor chi(X); chi(0) = 1, strictly decreasing, range (0, 1]."""
    out = _chi(_nonneg(x))
    return out if out.ndim else float(out)


def _x_chi_prime(x):
    """X * chi'(X) = -chi + 2 / (s (1 + s)), with the series near the origin."""
    x = np.asarray(x, dtype=float)
    small = x < CHI_SERIES_CUTOFF
    if not small.any():
        s = np.sqrt(1 + 8 * x / 3)
        return -_chi(x) + 2 / (s * (1 + s))
    xs = np.where(small, CHI_SERIES_CUTOFF, x)
    s = np.sqrt(1 + 8 * xs / 3)
    big = -_chi(xs) + 2 / (s * (1 + s))
    return np.where(small, x * _poly(x, _DCHI_SERIES), big)


def chi_prime(x):
    x = _nonneg(x)
    small = x < CHI_SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    out = np.where(small, _poly(x, _DCHI_SERIES), _x_chi_prime(xs) / xs)
    return out if out.ndim else float(out)


def input_for_output(x, coop, d=0.0):
    """Normalized input Y that produces normalized output X."""
    x = _nonneg(x)
    out = x * ((1 + 2 * coop * chi(x)) ** 2 + d * d)
    return out if np.ndim(out) else float(out)


def slope(x, coop, d=0.0):
    """Analytic dY/dX."""
    x = _nonneg(x)
    u = 1 + 2 * coop * chi(x)
    out = u * u + d * d + 4 * coop * u * _x_chi_prime(x)
    return out if np.ndim(out) else float(out)


def _slope_ln(lnx, coop, d):
    x = np.exp(lnx)
    u = 1 + 2 * coop * _chi(x)
    return u * u + d * d + 4 * coop * u * _x_chi_prime(x)


def _Y(x, coop, d):
    return x * ((1 + 2 * coop * _chi(x)) ** 2 + d * d)


def _bisect(fn, lo, hi, n=_BISECT_ITERS):
    """Vectorized bisection for a sign change of fn on [lo, hi] (fn(lo) <= 0 < fn(hi) or reverse)."""
    flo = fn(lo)
    for _ in range(n):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


@dataclass
class TurningArrays:
    exists: np.ndarray
    xa: np.ndarray
    ya: np.ndarray
    xb: np.ndarray
    yb: np.ndarray


def turning_arrays(coop, d=0.0):
    """Turning points for an array of cooperativities (vectorized core).

    dY/dX, seen as a function of ln X, has a single deep minimum followed by a
    shallow positive bump, so it has either no zero or exactly two. The minimum
    is located on a coarse grid, polished by golden section, and the two zeros
    are then bisected on either side of it.
    """
    coop = np.atleast_1d(np.asarray(coop, dtype=float))
    d = np.broadcast_to(np.asarray(d, dtype=float), coop.shape)
    n = coop.shape[0]
    lo = np.full(n, np.log(1e-3))
    hi = np.log(1e3 * (1 + coop))

    t = np.linspace(0.0, 1.0, _GRID_POINTS)
    grid = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    fg = _slope_ln(grid, coop[:, None], d[:, None])
    idx = np.argmin(fg, axis=1)
    rows = np.arange(n)
    interior = (idx > 0) & (idx < _GRID_POINTS - 1)
    a = grid[rows, np.clip(idx - 1, 0, _GRID_POINTS - 1)]
    b = grid[rows, np.clip(idx + 1, 0, _GRID_POINTS - 1)]

    invphi = (np.sqrt(5) - 1) / 2
    for _ in range(_GOLDEN_ITERS):
        x1 = b - invphi * (b - a)
        x2 = a + invphi * (b - a)
        f1 = _slope_ln(x1, coop, d)
        f2 = _slope_ln(x2, coop, d)
        left = f1 < f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
    lnmin = np.where(f1 < f2, x1, x2)
    fmin = np.minimum(f1, f2)
    exists = interior & (fmin < 0)

    fn = lambda z: _slope_ln(z, coop, d)
    ln_xa = _bisect(fn, lo.copy(), lnmin.copy())
    ln_xb = _bisect(fn, lnmin.copy(), hi.copy())
    xa = np.where(exists, np.exp(ln_xa), np.nan)
    xb = np.where(exists, np.exp(ln_xb), np.nan)
    with np.errstate(invalid="ignore"):
        ya = np.where(exists, _Y(np.nan_to_num(xa, nan=1.0), coop, d), np.nan)
        yb = np.where(exists, _Y(np.nan_to_num(xb, nan=1.0), coop, d), np.nan)
    return TurningArrays(exists, xa, ya, xb, yb)


def turning_points(coop, d=0.0):
    """Return ((x_a, y_a), (x_b, y_b)) with y_a > y_b, or None below threshold.

    (x_a, y_a) ends the lower branch (up-switch input on a rising ramp);
    (x_b, y_b) ends the upper branch (down-switch input on a falling ramp).
    """
    if coop < 0:
        raise ValueError("coop must be >= 0")
    tp = turning_arrays([coop], d)
    if not tp.exists[0]:
        return None
    return (float(tp.xa[0]), float(tp.ya[0])), (float(tp.xb[0]), float(tp.yb[0]))


@dataclass
class OperatingPoint:
    x: float
    y: float
    coop: float
    d: float
    branch: str
    degenerate: bool = False

    @property
    def stable(self):
        return self.branch != UNSTABLE


_TINY_Y = 1e-200


def _root_on(y, coop, d, lo, hi):
    """Root of Y(X) = y on a monotone bracket [lo, hi] (vectorized, log-space bisection).

    Below _TINY_Y the linear response is exact to rounding and is returned directly.
    """
    y = np.asarray(y, dtype=float)
    tiny = y < _TINY_Y
    lo = np.log(np.maximum(lo, 1e-300))
    hi = np.log(np.maximum(hi, 1e-300))
    fn = lambda z: _Y(np.exp(z), coop, d) - y
    x = np.exp(_bisect(fn, lo, hi))
    if np.any(tiny):
        x = np.where(tiny, y / ((1 + 2 * np.asarray(coop)) ** 2 + d * d), x)
    return x


def _lower_bracket_lo(y, coop, d):
    # Y(x) <= x ((1 + 2C)^2 + d^2), so Y < y here with a factor-2 margin against rounding
    return 0.5 * y / ((1 + 2 * coop) ** 2 + d * d)


def _upper_bracket_hi(y, d):
    # Y(x) >= x (1 + d^2), so Y > y here
    return 2.0 * y / (1 + d * d)


def solve_branches(y, coop, d=0.0):
    """All steady states X for input y, ordered by X, labelled by branch.

    Below threshold the single root is reported as ``upper``: it is the branch
    continuously connected to the empty-cavity response.
    """
    if y < 0:
        raise ValueError("y must be >= 0")
    if coop < 0:
        raise ValueError("coop must be >= 0")
    if y == 0:
        return [OperatingPoint(0.0, 0.0, coop, d, LOWER if turning_points(coop, d) else UPPER)]
    lo = _lower_bracket_lo(y, coop, d)
    hi = _upper_bracket_hi(y, d)
    tp = turning_points(coop, d)
    pt = lambda x, br, deg=False: OperatingPoint(float(x), float(_Y(x, coop, d)), coop, d, br, deg)
    if tp is None:
        return [pt(_root_on(y, coop, d, lo, hi), UPPER)]

    (xa, ya), (xb, yb) = tp
    out = []
    at_a = abs(y - ya) <= _DEGENERATE_RTOL * ya
    at_b = abs(y - yb) <= _DEGENERATE_RTOL * yb
    if at_a:
        out.append(pt(xa, LOWER, True))
    elif y < ya:
        out.append(pt(_root_on(y, coop, d, lo, xa), LOWER))
    if yb < y < ya and not (at_a or at_b):
        out.append(pt(_root_on_decreasing(y, coop, d, xa, xb), UNSTABLE))
    if at_b:
        out.append(pt(xb, UPPER, True))
    elif y > yb:
        out.append(pt(_root_on(y, coop, d, xb, hi), UPPER))
    return out


def _root_on_decreasing(y, coop, d, xa, xb):
    fn = lambda z: y - _Y(np.exp(z), coop, d)
    return np.exp(_bisect(fn, np.log(xa), np.log(xb)))


def bistability_threshold(d=0.0, tol=1e-3):
    """Smallest C for which the S-curve folds, by bisection on C."""
    exists = lambda C: bool(turning_arrays([C], d).exists[0])
    lo, hi = 0.0, 16.0
    while not exists(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if exists(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class SCurve:
    coop: float
    d: float
    samples: list  # (x, y, slope sign)
    turning_points: tuple | None


def s_curve(coop, d=0.0, x_max=None, n=2001):
    x_max = x_max or 1e3 * (1 + coop)
    x = np.concatenate([[0.0], np.logspace(-4, np.log10(x_max), n - 1)])
    y = _Y(x, coop, d)
    sg = np.sign(slope(x, coop, d))
    return SCurve(coop, d, list(zip(x.tolist(), y.tolist(), sg.astype(int).tolist())),
                  turning_points(coop, d))


def _turning_for(uniq, d):
    if uniq.size == 1:
        tp = turning_points_fold(float(uniq[0]), d)
        if tp is None:
            nan = np.array([np.nan])
            return TurningArrays(np.array([False]), nan, nan, nan, nan)
        (xa, ya), (xb, yb) = tp
        return TurningArrays(np.array([True]), np.array([xa]), np.array([ya]), np.array([xb]), np.array([yb]))
    return turning_arrays(uniq, d)


def _branch_labels(y, coop, d, exists, ya, yb, xa, xb, x0):
    n = y.shape[0]
    labels = np.empty(n, dtype=object)
    state = None
    prev_x = 0.0 if x0 is None else x0
    for i in range(n):
        if not exists[i]:
            labels[i] = UPPER
            state = None
            continue
        low_ok = y[i] <= ya[i]
        up_ok = y[i] >= yb[i]
        if low_ok and up_ok:
            if state is None:
                # entering the fold from the monostable side: pick by continuity
                if i > 0 and y[i - 1] > 0:
                    lo_p = _lower_bracket_lo(y[i - 1], coop[i - 1], d)
                    prev_x = float(_root_on(y[i - 1], coop[i - 1], d, lo_p, _upper_bracket_hi(y[i - 1], d)))
                xm = _root_on_decreasing(y[i], coop[i], d, xa[i], xb[i])
                state = LOWER if prev_x < xm else UPPER
        elif low_ok:
            state = LOWER
        else:
            state = UPPER
        labels[i] = state
    return labels


def _branch_roots(y, coop, d, labels, exists, xa, xb):
    x = np.zeros(y.shape)
    pos = y > 0
    lo = _lower_bracket_lo(y, coop, d)
    hi = _upper_bracket_hi(y, d)
    low = pos & (labels == LOWER)
    up = pos & (labels == UPPER)
    # lower piece ends at x_a, upper starts at x_b (monostable: whole range)
    lo_u = np.where(exists, xb, lo)
    hi_l = np.where(exists, xa, hi)
    if np.any(low):
        x[low] = _root_on(y[low], coop[low], d, lo[low], np.minimum(hi_l[low], hi[low]))
    if np.any(up):
        x[up] = _root_on(y[up], coop[up], d, np.maximum(lo_u[up], lo[up]), hi[up])
    return x


def follow_branches(y, coop, d=0.0, x0=None):
    """Quasi-static branch following along a path of (y, C) samples.

    The state stays on its current stable branch while that branch exists and
    jumps to the other stable branch when it ends. ``x0`` (previous output)
    decides the branch when the path enters the bistable region from the
    monostable one; by default the path starts on the branch connected to X=0.

    Returns (x, branch) arrays.
    """
    y = np.asarray(y, dtype=float)
    coop = np.broadcast_to(np.asarray(coop, dtype=float), y.shape).copy()
    uniq, inv = np.unique(coop, return_inverse=True)
    tpu = _turning_for(uniq, d)
    exists = tpu.exists[inv]
    ya, yb, xa, xb = tpu.ya[inv], tpu.yb[inv], tpu.xa[inv], tpu.xb[inv]
    labels = _branch_labels(y, coop, d, exists, ya, yb, xa, xb, x0)
    return _branch_roots(y, coop, d, labels, exists, xa, xb), labels


def sweep_outputs(y, coops, d=0.0):
    """follow_branches for one input path at each of several constant C values.

    Returns an array of shape (len(coops), len(y)); the root solve is shared.
    """
    y = np.asarray(y, dtype=float)
    coops = np.atleast_1d(np.asarray(coops, dtype=float))
    tp = turning_arrays(coops, d)
    m, n = coops.size, y.size
    labels = np.empty((m, n), dtype=object)
    cc = np.repeat(coops[:, None], n, axis=1)
    for k in range(m):
        ck = cc[k]
        rep = lambda a: np.full(n, a[k])
        labels[k] = _branch_labels(y, ck, d, rep(tp.exists), rep(tp.ya), rep(tp.yb), rep(tp.xa), rep(tp.xb), None)
    yy = np.broadcast_to(y, (m, n)).ravel()
    ex = np.repeat(tp.exists, n)
    x = _branch_roots(yy, cc.ravel(), d, labels.ravel(), ex, np.repeat(tp.xa, n), np.repeat(tp.xb, n))
    return x.reshape(m, n)


@dataclass
class HysteresisTrace:
    ramp: np.ndarray
    response: list = field(default_factory=list)  # (y, x, branch)
    switch_up_y: float | None = None
    switch_down_y: float | None = None

    @property
    def switch_ratio(self):
        if self.switch_up_y is None or self.switch_down_y is None:
            return 1.0
        return self.switch_up_y / self.switch_down_y


def _check_ramp(y_ramp):
    y = np.asarray(y_ramp, dtype=float)
    if y.ndim != 1 or y.size < 3:
        raise ValueError("ramp must be a 1-D sequence of at least 3 values")
    if y[0] != 0 or y[-1] != 0:
        raise ValueError("ramp must start and end at 0")
    k = int(np.argmax(y))
    if np.any(np.diff(y[: k + 1]) < 0) or np.any(np.diff(y[k:]) > 0):
        raise ValueError("ramp must rise monotonically and then fall monotonically")
    return y, k


def hysteresis_sweep(coop, d, y_ramp):
    y, _ = _check_ramp(y_ramp)
    x, labels = follow_branches(y, coop, d)
    trace = HysteresisTrace(ramp=y, response=list(zip(y.tolist(), x.tolist(), labels.tolist())))
    tp = turning_points(coop, d)
    if tp is not None:
        for i in range(1, len(y)):
            if labels[i - 1] == LOWER and labels[i] == UPPER:
                trace.switch_up_y = tp[0][1]
            elif labels[i - 1] == UPPER and labels[i] == LOWER:
                trace.switch_down_y = tp[1][1]
    return trace


def fold_coop(x, d=0.0):
    """Cooperativity whose S-curve has a turning point at output X.

    For fixed X, dY/dX = 0 is a quadratic in C,
        4 chi (chi + 2 X chi') C^2 + 4 (chi + X chi') C + (1 + d^2) = 0,
    with exactly one positive root where the leading coefficient is negative
    and none elsewhere. Returns +inf where no C folds at X.
    """
    x = np.asarray(x, dtype=float)
    c = _chi(np.maximum(x, 0.0))
    g = _x_chi_prime(x)
    A = 4 * c * (c + 2 * g)
    B = 4 * (c + g)
    K = 1 + d * d
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(A < 0, (-B - np.sqrt(B * B - 4 * A * K)) / (2 * A), np.inf)
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def _fold_onset():
    # X where the quadratic's leading coefficient changes sign; independent of C and d
    fn = lambda z: chi(np.exp(z)) + 2 * _x_chi_prime(np.exp(z))
    return float(np.exp(brentq(fn, np.log(1e-2), np.log(1e3), xtol=1e-15, rtol=1e-15)))


@lru_cache(maxsize=None)
def fold_cusp(d=0.0):
    """(x_cusp, C_star, y_star): the minimum of the fold locus, where the two turning points merge."""
    lnx0 = np.log(_fold_onset())
    res = minimize_scalar(lambda z: fold_coop(np.exp(z), d), bounds=(lnx0 + 1e-9, lnx0 + 30),
                          method="bounded", options={"xatol": 1e-12})
    x = float(np.exp(res.x))
    C = float(fold_coop(x, d))
    return x, C, float(_Y(x, C, d))


def _fold_y(lnx, d):
    x = np.exp(lnx)
    C = fold_coop(x, d)
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(C), _Y(x, np.where(np.isfinite(C), C, 0.0), d), np.inf)


def turning_points_fold(coop, d=0.0):
    """Turning points for one C from the fold locus: fold_coop(x) = C on each arm.

    Same contract as ``turning_points``; the two roots are bracketed by the fold
    onset, the cusp and the far end of the upper arm, then refined with brentq.
    """
    if coop < 0:
        raise ValueError("coop must be >= 0")
    x_c, c_star, _ = fold_cusp(float(d))
    if not coop > c_star:
        return None
    lnc = np.log(x_c)
    fn = lambda z: fold_coop(np.exp(z), d) - coop
    lo = np.log(_fold_onset()) + 1e-12
    while not fn(lo) > 0:
        lo = 0.5 * (lo + np.log(_fold_onset()))
    hi = lnc + 1.0
    while fn(hi) < 0:
        hi += 1.0
    kw = dict(xtol=1e-14, rtol=4 * np.finfo(float).eps)
    xa = float(np.exp(brentq(fn, lo, lnc, **kw)))
    xb = float(np.exp(brentq(fn, lnc, hi, **kw)))
    return (xa, float(_Y(xa, coop, d))), (xb, float(_Y(xb, coop, d)))


def cooperativity_at_switch(y, d=0.0, branch=UPPER):
    """Cooperativity at which a branch disappears for a fixed input y.

    ``branch="upper"``: solve y_b(C) = y, the C where the high-transmission branch
    ends and the output drops (rising C). ``branch="lower"``: solve y_a(C) = y, the
    C where the low branch ends and the output recovers (falling C).
    Both are found by bisection along the matching arm of the fold locus.
    Accepts scalars or arrays; raises ValueError when y lies below the smallest
    input at which any switching occurs.
    """
    if branch not in (UPPER, LOWER):
        raise ValueError(f"branch must be {UPPER!r} or {LOWER!r}")
    yv = np.atleast_1d(np.asarray(y, dtype=float))
    x_c, c_star, y_star = fold_cusp(float(d))
    if np.any(~(yv >= y_star)):
        raise ValueError(
            f"input y={yv.min():.6g} is below the minimum switching input {y_star:.6g} (C* = {c_star:.4g})"
        )
    lnc = np.log(x_c)
    if branch == UPPER:
        # y_b grows with X along the arm beyond the cusp
        lo = np.full(yv.shape, lnc)
        hi = np.full(yv.shape, lnc + 1.0)
        while True:
            short = _fold_y(hi, d) < yv
            if not np.any(short):
                break
            hi = np.where(short, hi + 1.0, hi)
        fn = lambda z: _fold_y(z, d) - yv
    else:
        # y_a falls with X between the fold onset and the cusp
        lo = np.full(yv.shape, np.log(_fold_onset()))
        hi = np.full(yv.shape, lnc)
        fn = lambda z: yv - _fold_y(z, d)
    lnx = _bisect(fn, lo, hi, n=120)
    out = fold_coop(np.exp(lnx), d)
    return float(out[0]) if np.ndim(y) == 0 else out
