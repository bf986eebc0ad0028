"""
Inverse problems on transmission data.

* fit one cooperativity to an (input, output) power sweep;
* turn the switch times of transit traces at several probe powers into
  samples of C(t), then fit a Gaussian cloud profile to them.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit, minimize_scalar

from . import bistability as bs


class EstimationError(ValueError):
    pass


@dataclass
class SweepDataset:
    points: list  # (p_in [W], p_out [W]) in acquisition order
    d: float
    calibration: object  # transit_sim.Calibration

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if np.any(arr < 0):
            raise ValueError("sweep powers must be >= 0")
        self.points = [tuple(p) for p in arr.tolist()]

    @property
    def p_in(self):
        return np.array([p for p, _ in self.points])

    @property
    def p_out(self):
        return np.array([q for _, q in self.points])


@dataclass
class TimelineSample:
    t: float
    coop: float
    source_power: float
    kind: str  # "down" or "up"


@dataclass
class CloudFit:
    peak_coop: float
    t_center: float
    sigma_t: float
    n_peak: float  # mode-weighted atom number, C_peak / C1
    density: float | None = None  # n_peak / mode volume [m^-3]
    convention: str = "n_peak = C_peak / C1 (mode-weighted); density = n_peak / (pi w^2 L / 4)"

    @property
    def fwhm(self):
        return 2 * np.sqrt(2 * np.log(2)) * self.sigma_t


@dataclass
class CooperativityTimeline:
    samples: list = field(default_factory=list)
    fit: CloudFit | None = None

    @property
    def t(self):
        return np.array([s.t for s in self.samples])

    @property
    def coop(self):
        return np.array([s.coop for s in self.samples])


def _sweep_model(y, coop, d):
    x, _ = bs.follow_branches(y, coop, d)
    return x


def fit_sweep_cooperativity(dataset, c_max=1e5):
    """Least-squares C for an ordered (p_in, p_out) sweep, in log output power.

    The model output at each point comes from following the branches along the
    sweep in acquisition order, so branch assignment is set by the ramp
    direction. Returns (coop, residual) with the residual the summed squared
    log deviation.
    """
    pin, pout = dataset.p_in, dataset.p_out
    if len(pin) < 5:
        raise EstimationError(f"need at least 5 sweep points, got {len(pin)}")
    steps = np.sign(np.diff(pin))
    if not (np.count_nonzero(steps > 0) >= 1 and np.count_nonzero(steps < 0) >= 1):
        raise EstimationError("sweep must contain both a rising and a falling ramp to span both branches")

    cal = dataset.calibration
    y = cal.y_from_power(pin)
    x_data = cal.x_from_power(pout)
    use = (y > 0) & (x_data > 0)
    if np.count_nonzero(use) < 5:
        raise EstimationError("fewer than 5 points with nonzero input and output")
    log_data = np.log(x_data[use])

    def cost(C):
        xm = _sweep_model(y, max(C, 0.0), dataset.d)[use]
        return float(np.sum((np.log(xm) - log_data) ** 2))

    grid = np.concatenate([[0.0], np.logspace(-1, np.log10(c_max), 81)])
    xg = bs.sweep_outputs(y, grid, dataset.d)[:, use]
    costs = np.sum((np.log(xg) - log_data) ** 2, axis=1)
    k = int(np.argmin(costs))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10 * max(hi, 1.0)})
    best, best_cost = (float(res.x), float(res.fun))
    if costs[k] < best_cost:
        best, best_cost = float(grid[k]), float(costs[k])
    return best, best_cost


@dataclass
class SwitchEvents:
    down: list  # crossing times [s]
    up: list
    baseline: float


def _crossing(t, p, i, level):
    # linear interpolation between samples i-1 and i
    p0, p1 = p[i - 1], p[i]
    if p1 == p0:
        return float(t[i])
    return float(t[i - 1] + (level - p0) * (t[i] - t[i - 1]) / (p1 - p0))


def _edge(t, p, start, i, sign):
    # steepest step of the given sign in samples (start, i]; the jump sits mid-interval
    step = sign * np.diff(p[start:i + 1])
    j = start + int(np.argmax(step)) + 1
    return float(0.5 * (t[j - 1] + t[j]))


def detect_switches(trace, high=0.7, low=0.1, baseline=None, n_baseline=50, refine=True):
    """Two-threshold (Schmitt) switch detection on p_out.

    Thresholds are fractions of the pre-transit level (median of the first
    ``n_baseline`` samples unless ``baseline`` is given). A down event fires
    when the output falls below ``low``, an up event when it climbs back
    above ``high``. With ``refine`` the event time is moved back to the
    steepest edge since the previous event: after an up jump the upper branch
    can still sit well below ``high`` while atoms remain in the mode.
    """
    if not 0 < low < high:
        raise ValueError("need 0 < low < high")
    t, p = trace.t, trace.p_out
    if baseline is None:
        baseline = float(np.median(p[:n_baseline]))
    if not baseline > 0:
        raise ValueError("baseline transmission must be > 0")
    lo_lvl, hi_lvl = low * baseline, high * baseline
    on = p[0] >= lo_lvl
    down, up = [], []
    last = 0
    for i in range(1, p.size):
        if on and p[i] < lo_lvl:
            down.append(_edge(t, p, last, i, -1) if refine else _crossing(t, p, i, lo_lvl))
            on, last = False, i
        elif not on and p[i] > hi_lvl:
            up.append(_edge(t, p, last, i, 1) if refine else _crossing(t, p, i, hi_lvl))
            on, last = True, i
    return SwitchEvents(down, up, baseline)


def _power_at(trace, t0):
    return float(np.interp(t0, trace.t, trace.p_in))


def extract_timeline(traces, d, calibration, high=0.7, low=0.1):
    """Cooperativity samples from the switch times of transit traces.

    A down switch marks the end of the high-transmission branch, an up switch
    the end of the low one; each maps to C through the fold condition at the
    probe input.
    """
    timeline = CooperativityTimeline()
    y_star = bs.fold_cusp(float(d))[2]
    for k, tr in enumerate(traces):
        ev = detect_switches(tr, high, low)
        if not ev.down:
            warnings.warn(f"trace {k}: no switch detected, skipped", stacklevel=2)
            continue
        for kind, times, branch in (("down", ev.down, bs.UPPER), ("up", ev.up, bs.LOWER)):
            for t0 in times:
                p = _power_at(tr, t0)
                y = float(calibration.y_from_power(p))
                if y < y_star:
                    warnings.warn(f"trace {k}: input below the switching minimum, {kind} sample skipped",
                                  stacklevel=2)
                    continue
                C = bs.cooperativity_at_switch(y, d, branch)
                timeline.samples.append(TimelineSample(t0, C, p, kind))
    timeline.samples.sort(key=lambda s: s.t)
    return timeline


def _gauss(t, peak, t0, sigma):
    return peak * np.exp(-((t - t0) ** 2) / (2 * sigma**2))


def fit_cloud(timeline, c1, mode_volume=None):
    """Gaussian C(t) fit through the timeline samples (relative weighting)."""
    t, C = timeline.t, timeline.coop
    if t.size < 4:
        raise EstimationError(f"need at least 4 timeline samples, got {t.size}")
    a, b, c0 = np.polyfit(t, np.log(C), 2)
    if a < 0:
        sigma = np.sqrt(-1 / (2 * a))
        t0 = -b / (2 * a)
        peak = np.exp(c0 - b * b / (4 * a))
    else:
        k = int(np.argmax(C))
        peak, t0, sigma = C[k], t[k], max(np.ptp(t) / 2, 1e-6)
    popt, _ = curve_fit(_gauss, t, C, p0=[peak, t0, sigma], sigma=C, maxfev=20000)
    peak, t0, sigma = popt
    fit = CloudFit(
        peak_coop=float(peak),
        t_center=float(t0),
        sigma_t=float(abs(sigma)),
        n_peak=float(peak / c1),
        density=None if mode_volume is None else float(peak / c1 / mode_volume),
    )
    timeline.fit = fit
    return fit
