"""Geodesic flow of a Weyl connection.

Integration uses an explicit adaptive Runge-Kutta pair (scipy's RK45)
with terminal events for the incompleteness detectors: a guard band
around the declared singular set, exact domain-boundary crossings, and a
collapse floor for the local parallel-metric potential (equivalently the
g-speed diagnostic F).  Measured life-times are the event parameter plus
an extrapolated remainder, so a guard band does not bias the estimate.

Symplectic methods were rejected: the Weyl geodesic flow is not
Hamiltonian for the reference metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ArgumentError, IncompleteGeodesicError
from .manifold import ChartMetric, metric_at
from .weyl import WeylStructure, weyl_christoffel

# termination tags
HIT_SINGULAR = "hit-singular-set"
F_COLLAPSE = "F-collapse"
HORIZON = "horizon"
STEP_FAILURE = "step-failure"

# statuses
INCOMPLETE = "incomplete"
COMPLETE_TO_HORIZON = "complete-to-horizon"

POTENTIAL_FLOOR = 1e-5
F_FLOOR = 1e-6
DENSE_SPACING = 1e-3


def g_norm(w: WeylStructure, x: np.ndarray, v: np.ndarray) -> float:
    g = metric_at(w.reference, x)
    return float(np.sqrt(max(v @ g @ v, 0.0)))


def F_value(w: WeylStructure, x: np.ndarray, v: np.ndarray) -> float:
    """F = g(v, v)^(-1/2), the inverse g-speed."""
    return 1.0 / g_norm(w, x, v)


def H_value(w: WeylStructure, x: np.ndarray, v: np.ndarray) -> float:
    """H = theta(v)."""
    return float(w.theta(x) @ v)


@dataclass(frozen=True)
class GeodesicState:
    """A point of the geodesic flow with its F, H diagnostics."""

    x: np.ndarray
    v: np.ndarray
    t: float
    F: float
    H: float
    slope: Optional[float] = None


def make_state(w: WeylStructure, x, v, t: float,
               split: Optional[int] = None) -> GeodesicState:
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    slope = None
    if split is not None:
        g = metric_at(w.reference, x)
        n1 = float(np.sqrt(v[:split] @ g[:split, :split] @ v[:split]))
        n2 = float(np.sqrt(v[split:] @ g[split:, split:] @ v[split:]))
        slope = n1 / n2 if n2 > 0 else None
    return GeodesicState(x=x, v=v, t=t, F=F_value(w, x, v), H=H_value(w, x, v),
                         slope=slope)


class _PiecewiseDense:
    """Dense output glued from consecutive solver segments."""

    def __init__(self):
        self.segments = []  # (t0, t1, sol)

    def add(self, t0, t1, sol):
        self.segments.append((t0, t1, sol))

    @property
    def t_min(self):
        return self.segments[0][0]

    @property
    def t_max(self):
        return self.segments[-1][1]

    def __call__(self, t):
        t = np.asarray(t, float)
        if t.ndim == 0:
            return self._eval_scalar(float(t))
        return np.stack([self._eval_scalar(float(ti)) for ti in t], axis=1)

    def _eval_scalar(self, t):
        for t0, t1, sol in self.segments:
            if t <= t1 or (t0, t1, sol) is self.segments[-1]:
                return sol(min(max(t, t0), t1))
        raise ArgumentError(f"dense output queried outside [{self.t_min}, {self.t_max}]")


@dataclass
class Trajectory:
    """Result of integrating one D-geodesic in a chart."""

    weyl: WeylStructure
    x0: np.ndarray
    v0: np.ndarray
    t_end: float
    termination: str
    sol: _PiecewiseDense
    ts: np.ndarray
    remainder: float = 0.0
    split: Optional[int] = None
    n_steps: int = 0

    def position(self, t: float) -> np.ndarray:
        y = self.sol(t)
        return y[: y.size // 2]

    def velocity(self, t: float) -> np.ndarray:
        y = self.sol(t)
        return y[y.size // 2:]

    def state(self, t: float) -> GeodesicState:
        y = self.sol(t)
        d = y.size // 2
        return make_state(self.weyl, y[:d], y[d:], t, split=self.split)

    def states(self, ts: Sequence[float]) -> list:
        return [self.state(float(t)) for t in ts]

    def grid(self, spacing: float = DENSE_SPACING) -> np.ndarray:
        n = max(int(np.floor(self.t_end / spacing)) + 1, 2)
        return np.linspace(0.0, self.t_end, n)

    @property
    def incomplete(self) -> bool:
        return self.termination in (HIT_SINGULAR, F_COLLAPSE)

    @property
    def lifetime_estimate(self) -> float:
        return self.t_end + self.remainder


@dataclass(frozen=True)
class LifetimeRecord:
    """A classified life-time measurement of one half-geodesic."""

    initial_point: tuple
    initial_vector: tuple
    status: str
    lifetime: float
    termination: str
    horizon: float
    remainder: float = 0.0

    @property
    def censored(self) -> bool:
        return self.status == COMPLETE_TO_HORIZON

    def to_dict(self) -> dict:
        return {
            "point": list(self.initial_point),
            "vector": list(self.initial_vector),
            "status": self.status,
            "lifetime": self.lifetime if not self.censored else None,
            "lifetime_at_least": self.horizon if self.censored else None,
            "termination": self.termination,
        }


def _geodesic_rhs(w: WeylStructure):
    d = w.dim

    def rhs(t, y):
        x = y[:d]
        v = y[d:]
        gamma = weyl_christoffel(w, x)
        acc = -np.einsum("kij,i,j->k", gamma, v, v)
        return np.concatenate([v, acc])

    return rhs


def integrate(w: WeylStructure, x0, v0, t_max: float, tol: float = 1e-9,
              max_step: Optional[float] = None, split: Optional[int] = None,
              potential_floor: float = POTENTIAL_FLOOR) -> Trajectory:
    """Solve the D-geodesic equation until t_max or a termination event.

    Termination events: entering the singular-set guard band, crossing the
    domain boundary, or collapse of the parallel-potential / F diagnostic.
    Step collapse near the singular set is recorded as a termination, not
    raised as a failure.
    """
    chart = w.reference
    x0 = chart.check_point(x0)
    v0 = np.asarray(v0, float)
    if not np.any(v0):
        raise ArgumentError("zero initial velocity")
    if t_max <= 0 or tol <= 0:
        raise ArgumentError("t_max and tol must be positive")

    d = chart.dim
    rhs = _geodesic_rhs(w)

    has_potential = w.exact_potential is not None
    phi0 = w.potential(x0) if has_potential else None
    F0 = F_value(w, x0, v0)

    def ev_margin(t, y):
        return chart.boundary_margin(y[:d])

    ev_margin.terminal = True
    ev_margin.direction = -1

    events = [ev_margin]

    if has_potential:

        def ev_floor(t, y):
            return w.potential(y[:d]) - potential_floor * phi0

        ev_floor.terminal = True
        ev_floor.direction = -1
        events.append(ev_floor)
    else:

        def ev_fcol(t, y):
            return F_value(w, y[:d], y[d:]) - F_FLOOR * F0

        ev_fcol.terminal = True
        ev_fcol.direction = -1
        events.append(ev_fcol)

    nearest = getattr(chart.singular_set, "nearest_point", None) if chart.singular_set else None
    n_base_events = len(events)
    if nearest is not None:
        # Closest-approach event: fires when the track passes abeam of the
        # nearest singular point, so thin guard bands cannot be stepped over.
        def ev_abeam(t, y):
            p = nearest(y[:d])
            return float((y[:d] - p) @ y[d:])

        ev_abeam.terminal = True
        ev_abeam.direction = 1
        events.append(ev_abeam)

    dense = _PiecewiseDense()
    ts_all = []
    t_off = 0.0
    y = np.concatenate([x0, v0])
    termination = HORIZON
    n_steps = 0
    guard = chart.singular_set.guard if chart.singular_set else 0.0

    for _ in range(4096):
        res = solve_ivp(
            rhs, (t_off, t_max), y, method="RK45", rtol=tol, atol=tol * 1e-3,
            dense_output=True, events=events,
            max_step=max_step if max_step else np.inf,
        )
        n_steps += res.t.size
        dense.add(t_off, res.t[-1], res.sol)
        ts_all.append(res.t)
        if res.status == 1:  # an event fired
            fired = [k for k, te in enumerate(res.t_events) if te.size > 0]
            k = fired[0]
            t_off = res.t[-1]
            y = res.y[:, -1]
            if k == 0:
                termination = HIT_SINGULAR
                break
            if k < n_base_events:
                termination = F_COLLAPSE
                break
            # abeam event: terminate only if actually inside the guard band
            prox = chart.singular_set.proximity(y[:d])
            if prox <= guard:
                termination = HIT_SINGULAR
                break
            continue  # resume past a harmless closest approach
        if res.status == 0:
            t_off = res.t[-1]
            y = res.y[:, -1]
            termination = HORIZON
            break
        # status -1: step collapse; record, never raise
        t_off = res.t[-1]
        y = res.y[:, -1]
        termination = STEP_FAILURE
        break

    ts = np.unique(np.concatenate(ts_all))
    t_end = t_off

    remainder = 0.0
    x_end, v_end = y[:d], y[d:]
    if termination in (HIT_SINGULAR, F_COLLAPSE, STEP_FAILURE):
        remainder = _remainder_estimate(w, chart, dense, t_end, x_end, v_end,
                                        termination, phi0, v0, x0)

    return Trajectory(
        weyl=w, x0=x0, v0=v0, t_end=t_end, termination=termination,
        sol=dense, ts=ts, remainder=remainder, split=split, n_steps=n_steps,
    )


def _remainder_estimate(w, chart, dense, t_end, x_end, v_end, termination,
                        phi0, v0, x0) -> float:
    """Affine time left past the termination event.

    Uses the closed-form distance to the singularity when the structure
    declares one (remaining g0-length over the conserved g0-speed), else a
    linear Richardson-style fit of the collapsing F series.
    """
    # boundary exits that are not singular-set hits end exactly at the event
    if termination == HIT_SINGULAR and chart.singular_set is not None:
        prox = chart.singular_set.proximity(x_end)
        if prox > 2.0 * chart.singular_set.guard:
            return 0.0
    if w.delta is not None and w.exact_potential is not None:
        c0 = phi0 * g_norm(w, x0, v0)
        if c0 > 0:
            return float(w.delta(x_end)) / c0
    if chart.singular_set is not None and termination == HIT_SINGULAR:
        sp = g_norm(w, x_end, v_end)
        if sp > 0:
            return chart.singular_set.proximity(x_end) / sp
    # linear fit of F over the last stretch
    window = min(0.1 * t_end, 0.05) if t_end > 0 else 0.0
    if window <= 0:
        return 0.0
    ts = np.linspace(max(0.0, t_end - window), t_end, 8)
    d = x_end.size
    Fs = []
    for t in ts:
        yy = dense(t)
        Fs.append(F_value(w, yy[:d], yy[d:]))
    slope, intercept = np.polyfit(ts, Fs, 1)
    if slope >= 0:
        return 0.0
    root = -intercept / slope
    return float(np.clip(root - t_end, 0.0, 10.0 * window))


def lifetime(w: WeylStructure, x, X, horizon: float, tol: float = 1e-9,
             max_step: Optional[float] = None) -> LifetimeRecord:
    """Measure the life-time of the half-geodesic generated by X.

    Incomplete iff a termination event fires before the horizon; censored
    records are reported complete-to-horizon, never complete.
    """
    if horizon <= 0:
        raise ArgumentError("horizon must be positive")
    traj = integrate(w, x, X, horizon, tol=tol, max_step=max_step)
    if traj.incomplete:
        status = INCOMPLETE
        life = traj.lifetime_estimate
        term = traj.termination
    else:
        status = COMPLETE_TO_HORIZON
        life = horizon
        term = traj.termination
    return LifetimeRecord(
        initial_point=tuple(np.asarray(x, float)),
        initial_vector=tuple(np.asarray(X, float)),
        status=status,
        lifetime=life,
        termination=term,
        horizon=horizon,
        remainder=traj.remainder,
    )


def exp_map(w: WeylStructure, x, X, tol: float = 1e-10) -> np.ndarray:
    """The point gamma(1) on the D-geodesic with gamma(0)=x, gamma'(0)=X."""
    traj = integrate(w, x, X, 1.0, tol=tol)
    if traj.termination != HORIZON:
        raise IncompleteGeodesicError(
            f"geodesic dies at parameter {traj.lifetime_estimate:.6g} < 1",
            lifetime=traj.lifetime_estimate,
        )
    return traj.position(1.0)


def lifetime_bound(w: WeylStructure, eps: float, x, X) -> float:
    """Life-time bound (eps * g(X, X))^(-1/2) for analytically tame structures."""
    if eps <= 0:
        raise ArgumentError("eps must be positive (certify with analytic_tame_check)")
    x = np.asarray(x, float)
    X = np.asarray(X, float)
    g = metric_at(w.reference, x)
    return float(1.0 / np.sqrt(eps * (X @ g @ X)))


# ---------------------------------------------------------------------------
# F/H diagnostic series


@dataclass
class FHSeries:
    """F and H along a trajectory and the first-order system residual."""

    ts: np.ndarray
    F: np.ndarray
    H: np.ndarray
    residual: float  # max |F' - F H| over interior stencil points

    def s2_min_margin(self, eps: float) -> float:
        """min of H' - (2 eps F^-2 - 2 H^2) where the H stencil is trusted."""
        h = self.ts[1] - self.ts[0]
        Hp = _stencil_derivative(self.H, h)
        mask = np.abs(self.H[2:-2]) * h < 0.2
        if not np.any(mask):
            raise ArgumentError("no trusted interior points for the H' stencil")
        margin = Hp - (2.0 * eps / self.F[2:-2] ** 2 - 2.0 * self.H[2:-2] ** 2)
        return float(np.min(margin[mask]))

    def est_violation(self, eps: float) -> float:
        """max of H + sqrt(eps)/F; nonpositive certifies the decay estimate."""
        return float(np.max(self.H + np.sqrt(eps) / self.F))


def _stencil_derivative(f: np.ndarray, h: float) -> np.ndarray:
    """Five-point central first derivative on the interior (drops 2 ends)."""
    return (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)


def fh_series(traj: Trajectory, w: WeylStructure,
              spacing: float = DENSE_SPACING) -> FHSeries:
    """Sample F, H on a uniform grid and difference the first series.

    The residual checks F' = F H; callers with a certified eps follow up
    with ``s2_min_margin`` / ``est_violation``.
    """
    ts = traj.grid(spacing)
    if ts.size < 3:
        raise ArgumentError("trajectory too short for the F/H series (< 3 samples)")
    d = traj.x0.size
    ys = traj.sol(ts)
    F = np.empty(ts.size)
    H = np.empty(ts.size)
    for i in range(ts.size):
        x, v = ys[:d, i], ys[d:, i]
        F[i] = F_value(w, x, v)
        H[i] = H_value(w, x, v)
    h = ts[1] - ts[0]
    if ts.size >= 5:
        Fp = _stencil_derivative(F, h)
        residual = float(np.max(np.abs(Fp - F[2:-2] * H[2:-2])))
    else:
        Fp = (F[2:] - F[:-2]) / (2.0 * h)
        residual = float(np.max(np.abs(Fp - F[1:-1] * H[1:-1])))
    return FHSeries(ts=ts, F=F, H=H, residual=residual)


# ---------------------------------------------------------------------------
# leaf exponentiation on explicit products


def leaf_exponentiation(w: WeylStructure, leaf_points: Sequence[np.ndarray],
                        X: np.ndarray, dist_fn: Callable[[np.ndarray, np.ndarray], float],
                        tol: float = 1e-10) -> float:
    """Isometry residual of p -> exp_p(X) on a sampled leaf patch.

    The metric must be an explicit product and X tangent to the second
    factor with constant components (parallel along the first factor).
    Returns the max relative distortion of pairwise distances.
    """
    pts = [np.asarray(p, float) for p in leaf_points]
    if len(pts) < 2:
        raise ArgumentError("need at least two leaf sample points")
    images = [exp_map(w, p, X, tol=tol) for p in pts]
    worst = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            before = dist_fn(pts[i], pts[j])
            after = dist_fn(images[i], images[j])
            if before > 0:
                worst = max(worst, abs(after - before) / before)
    return worst


def shear_projection_norms(w: WeylStructure, split: int, x0, v1, X,
                           t_max: float, n_samples: int = 64,
                           tol: float = 1e-10) -> tuple:
    """Factor-wise g-norms of the velocity along the shear geodesic.

    The shear geodesic exp_{gamma(t)}(tX) of a product has initial velocity
    v1 + X; its velocity projections on the two factors are parallel, so
    both norm series should be constant (1 and |X| for unit v1).
    """
    v0 = np.asarray(v1, float) + np.asarray(X, float)
    traj = integrate(w, x0, v0, t_max, tol=tol, split=split)
    ts = np.linspace(0.0, traj.t_end, n_samples)
    n1 = np.empty(n_samples)
    n2 = np.empty(n_samples)
    for i, t in enumerate(ts):
        st = traj.state(t)
        g = metric_at(w.reference, st.x)
        n1[i] = np.sqrt(st.v[:split] @ g[:split, :split] @ st.v[:split])
        n2[i] = np.sqrt(st.v[split:] @ g[split:, split:] @ st.v[split:])
    return n1, n2
