"""The surgered rotation cone: a genus-2 fundamental patch with surgery.

Start from the cone z = sqrt(x^2 + y^2).  Inside the band 1 < z < 2, the
two discs cut out by the solid cylinder y^2 + (z - 3/2)^2 <= 1/16 are
replaced by the part of that cylinder's boundary lying inside the cone,
and the junction is smoothed.  The whole construction is the zero set of

    G = u v - c0 B_u(u) B_q(q),   u = z^2 - x^2 - y^2,
                                  q = y^2 + (z - 3/2)^2,  v = q - 1/16,

where B_u, B_q are quintic falling bumps.  Away from the bump supports
the zero set is exactly the cone union the tube, so the surface agrees
with the raw cone outside the larger cylinder q <= 1/8 and carries the
reflections across x = 0 and y = 0 as exact isometries (G depends on x
and y only through their squares).  Scaling by 2 maps the patch in the
band [2^n, 2^{n+1}) onto the next copy; evaluation picks the band from z.

Geodesics are integrated directly in ambient coordinates with the
constrained second-order equation plus a light Baumgarte feedback that
keeps the trajectory on the zero set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ArgumentError, ConstructionError

Z0_R2 = 1.0 / 16.0  # squared radius of the small (surgery) cylinder
Z_R2 = 1.0 / 8.0    # squared radius of the larger (locality) cylinder
TUBE_CENTER = 1.5

# azimuths closer than this to the planes y=0 (phi = 0 or pi) can meet the
# modified zones of deeper bands; outside, a radial descent stays on the
# exact cone forever
CLEAR_SIN_PHI = 0.35


def _fall(s: float, lo: float, hi: float) -> tuple:
    """Quintic falling transition: (value, d/ds, d2/ds2); 1 below lo, 0 above hi."""
    if s <= lo:
        return 1.0, 0.0, 0.0
    if s >= hi:
        return 0.0, 0.0, 0.0
    w = hi - lo
    t = (s - lo) / w
    val = 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    d1 = -30.0 * t * t * (1.0 - t) ** 2 / w
    d2 = -60.0 * t * (1.0 - 3.0 * t + 2.0 * t * t) / (w * w)
    return val, d1, d2


@dataclass(frozen=True)
class SmoothingProfile:
    """Blend parameters for the tube junction.

    c0 sets the rounding size; (u_lo, u_hi) localizes the blend near the
    cone along the tube; (q_lo, q_hi) confines it inside the larger
    cylinder.  Any profile respecting the locality constraints serves.
    """

    c0: float = 0.004
    u_lo: float = 0.5
    u_hi: float = 1.5
    q_lo: float = 0.075
    q_hi: float = 0.115

    def validate(self):
        if not (0 < self.c0 < 0.05):
            raise ConstructionError(f"blend amplitude c0={self.c0} out of range")
        if not (Z0_R2 < self.q_lo < self.q_hi < Z_R2):
            raise ConstructionError(
                "q band must satisfy 1/16 < q_lo < q_hi < 1/8 "
                "(modification confined to the larger cylinder)"
            )
        if not (0 < self.u_lo < self.u_hi):
            raise ConstructionError("u band must satisfy 0 < u_lo < u_hi")
        if self.u_hi >= 25.0 / 16.0:
            raise ConstructionError(
                "u_hi must stay below 25/16 so the waist circles are untouched"
            )


@dataclass(frozen=True)
class Genus2Surface:
    """Implicit fundamental patch plus the doubling homothety."""

    profile: SmoothingProfile = field(default_factory=SmoothingProfile)
    name: str = "genus2"

    # -- band bookkeeping -------------------------------------------------

    @staticmethod
    def band_of(z: float) -> int:
        """Dyadic band index from the height.

        The surface lives in z > 0; the evaluation is made total (clamped
        mirror continuation) so that integrator trial steps past the apex
        stay finite and smooth.
        """
        az = max(abs(float(z)), 1e-30)
        return int(np.clip(np.floor(np.log2(az)), -64.0, 64.0))

    # -- implicit function -----------------------------------------------

    def _raw(self, X: np.ndarray) -> tuple:
        """(G, grad, hess) of the band-0 formula at X (no rescaling)."""
        p = self.profile
        x, y, z = X
        u = z * z - x * x - y * y
        q = y * y + (z - TUBE_CENTER) ** 2
        v = q - Z0_R2
        du = np.array([-2.0 * x, -2.0 * y, 2.0 * z])
        dq = np.array([0.0, 2.0 * y, 2.0 * (z - TUBE_CENTER)])
        Hu = np.diag([-2.0, -2.0, 2.0])
        Hq = np.diag([0.0, 2.0, 2.0])
        bu, bu1, bu2 = _fall(u, p.u_lo, p.u_hi)
        bq, bq1, bq2 = _fall(q, p.q_lo, p.q_hi)
        c0 = p.c0
        G = u * v - c0 * bu * bq
        cu = v - c0 * bu1 * bq
        cq = u - c0 * bu * bq1
        grad = cu * du + cq * dq
        cross = (1.0 - c0 * bu1 * bq1) * (np.outer(du, dq) + np.outer(dq, du))
        hess = (cu * Hu + cq * Hq + cross
                - c0 * bu2 * bq * np.outer(du, du)
                - c0 * bu * bq2 * np.outer(dq, dq))
        return G, grad, hess

    def implicit(self, X: np.ndarray) -> tuple:
        """(G, grad, hess) with the band scaling chosen from z."""
        X = np.asarray(X, float)
        n = self.band_of(X[2])
        s = 2.0 ** (-n)
        G, grad, hess = self._raw(s * X)
        return G, s * grad, (s * s) * hess

    def geodesic_acceleration(self, y: np.ndarray, fb: float) -> tuple:
        """Scalar fast path for the constrained geodesic right-hand side.

        Returns (ax, ay, az) for the state y = (x, y, z, vx, vy, vz); the
        quadratic forms are expanded over the sparse gradients of u and q
        so no matrices are built.
        """
        p = self.profile
        x, yy, z, vx, vy, vz = y
        az = abs(z)
        if az < 1e-30:
            az = 1e-30
        n = np.floor(np.log2(az))
        if n > 64.0:
            n = 64.0
        elif n < -64.0:
            n = -64.0
        s = 2.0 ** (-n)
        xs, ys, zs = x * s, yy * s, z * s
        u = zs * zs - xs * xs - ys * ys
        zc = zs - TUBE_CENTER
        q = ys * ys + zc * zc
        v = q - Z0_R2
        bu, bu1, bu2 = _fall(u, p.u_lo, p.u_hi)
        bq, bq1, bq2 = _fall(q, p.q_lo, p.q_hi)
        c0 = p.c0
        G = u * v - c0 * bu * bq
        cu = v - c0 * bu1 * bq
        cq = u - c0 * bu * bq1
        gx = cu * (-2.0 * xs)
        gy = cu * (-2.0 * ys) + cq * (2.0 * ys)
        gz = cu * (2.0 * zs) + cq * (2.0 * zc)
        duV = -2.0 * xs * vx - 2.0 * ys * vy + 2.0 * zs * vz
        dqV = 2.0 * ys * vy + 2.0 * zc * vz
        VHV = (cu * 2.0 * (vz * vz - vx * vx - vy * vy)
               + cq * 2.0 * (vy * vy + vz * vz)
               + 2.0 * (1.0 - c0 * bu1 * bq1) * duV * dqV
               - c0 * bu2 * bq * duV * duV
               - c0 * bu * bq2 * dqV * dqV)
        gV = gx * vx + gy * vy + gz * vz
        gg = gx * gx + gy * gy + gz * gz
        # grad, hess and G carry band factors s, s^2, 1; fold them into lam
        lam = -s * (VHV + 2.0 * fb * gV / s + fb * fb * G / (s * s)) / gg
        return lam * gx, lam * gy, lam * gz

    def value(self, X) -> float:
        return self.implicit(X)[0]

    def surface_residual(self, X) -> float:
        """Distance-like residual |G| / |grad G|."""
        G, grad, _ = self.implicit(X)
        return abs(G) / max(np.linalg.norm(grad), 1e-30)

    def project(self, X, max_iter: int = 50, tol: float = 1e-13) -> np.ndarray:
        """Newton projection onto the zero set along the gradient."""
        Y = np.asarray(X, float).copy()
        for _ in range(max_iter):
            G, grad, _ = self.implicit(Y)
            gg = grad @ grad
            if gg == 0:
                raise ArgumentError(f"vanishing gradient while projecting {X}")
            step = G / gg * grad
            Y = Y - step
            if np.linalg.norm(step) < tol * max(1.0, np.linalg.norm(Y)):
                return Y
        if self.surface_residual(Y) < 1e-9:
            return Y
        raise ArgumentError(f"projection did not converge from {X}")

    def tangent_basis(self, X) -> tuple:
        """Orthonormal (e1, e2, normal) at a surface point."""
        _, grad, _ = self.implicit(X)
        nrm = grad / np.linalg.norm(grad)
        a = np.array([1.0, 0.0, 0.0])
        if abs(nrm @ a) > 0.9:
            a = np.array([0.0, 1.0, 0.0])
        e1 = a - (a @ nrm) * nrm
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(nrm, e1)
        return e1, e2, nrm

    # -- markers and maps --------------------------------------------------

    @staticmethod
    def symmetry_x(X):
        X = np.asarray(X, float)
        return np.array([-X[0], X[1], X[2]])

    @staticmethod
    def symmetry_y(X):
        X = np.asarray(X, float)
        return np.array([X[0], -X[1], X[2]])

    @staticmethod
    def point_symmetry(X):
        """S = S^x o S^y, the geodesic reflection through its fixed points."""
        X = np.asarray(X, float)
        return np.array([-X[0], -X[1], X[2]])

    @staticmethod
    def homothety(X):
        return 2.0 * np.asarray(X, float)

    @staticmethod
    def homothety_inverse(X):
        return 0.5 * np.asarray(X, float)

    @staticmethod
    def marker_P(n: int = 0) -> np.ndarray:
        """Top of the waist circle of the n-th tube: (0, 0, 7 2^{n-2})."""
        return np.array([0.0, 0.0, 7.0 * 2.0 ** (n - 2)])

    @staticmethod
    def marker_Q(n: int = 1) -> np.ndarray:
        """Bottom of the n-th waist circle: (0, 0, 5 2^{n-2})."""
        return np.array([0.0, 0.0, 5.0 * 2.0 ** (n - 2)])

    @staticmethod
    def waist_circle(n: int, beta: float) -> np.ndarray:
        """The circle k_n in the plane x = 0."""
        c = 3.0 * 2.0 ** (n - 1)
        r = 2.0 ** (n - 2)
        return np.array([0.0, r * np.sin(beta), c + r * np.cos(beta)])

    @staticmethod
    def half_line(sign: float, t: float) -> np.ndarray:
        """The half-lines c^(+/-)(t) = (0, +-t, t)."""
        return np.array([0.0, sign * t, t])

    def in_modified_zone(self, X) -> bool:
        """True where the blend may differ from cone union raw tube."""
        X = np.asarray(X, float)
        n = self.band_of(X[2])
        s = 2.0 ** (-n)
        x, y, z = s * X
        q = y * y + (z - TUBE_CENTER) ** 2
        u = z * z - x * x - y * y
        return (q < self.profile.q_hi) and (u < self.profile.u_hi)

    # -- sampling ----------------------------------------------------------

    def sample_points(self, n: int, seed: int = 0, band: int = 0) -> list:
        """Seeded surface points across cone, tube and blend regions."""
        rng = np.random.default_rng(seed)
        scale = 2.0 ** band
        pts = []
        attempts = 0
        while len(pts) < n and attempts < 50 * n:
            attempts += 1
            kind = rng.integers(3)
            if kind == 0:  # raw cone seed
                z = scale * (1.0 + rng.random())
                phi = 2.0 * np.pi * rng.random()
                seed_pt = np.array([z * np.cos(phi), z * np.sin(phi), z])
            elif kind == 1:  # raw tube seed
                beta = 2.0 * np.pi * rng.random()
                yz = np.array([np.sin(beta), np.cos(beta)]) * np.sqrt(Z0_R2)
                z = TUBE_CENTER + yz[1]
                xmax = np.sqrt(max(z * z - yz[0] ** 2, 0.0))
                x = (2.0 * rng.random() - 1.0) * 0.95 * xmax
                seed_pt = scale * np.array([x, yz[0], z])
            else:  # blend-zone seed, projected
                z = scale * (1.3 + 0.4 * rng.random())
                phi = 0.25 * (2.0 * rng.random() - 1.0)
                if rng.random() < 0.5:
                    phi += np.pi
                seed_pt = np.array([z * np.cos(phi), z * np.sin(phi), z])
            try:
                p = self.project(seed_pt)
            except ArgumentError:
                continue
            if 0.9 * scale < p[2] < 2.2 * scale and self.surface_residual(p) < 1e-10:
                pts.append(p)
        if len(pts) < n:
            raise ArgumentError("surface sampling failed to converge")
        return pts


def build_genus2(profile: Optional[SmoothingProfile] = None) -> Genus2Surface:
    """Construct the fundamental patch; validates the locality constraints."""
    profile = profile or SmoothingProfile()
    profile.validate()
    surf = Genus2Surface(profile=profile)
    # the marked points must land on the zero set exactly
    for pt in (surf.marker_P(0), surf.marker_Q(1), surf.marker_P(1)):
        if abs(surf.value(pt)) > 1e-12:
            raise ConstructionError(f"marker {pt} off the surface; bad profile")
    return surf


# ---------------------------------------------------------------------------
# constrained geodesic integration


@dataclass
class SurfaceTrajectory:
    t_end: float
    outcome: str  # "apex" | "escape" | "horizon" | "failed"
    y_end: np.ndarray
    r_min: float
    L_at_dip: float
    segments: list  # (t0, t1, dense sol on [0, t1 - t0])
    n_dips: int = 0

    def state(self, t: float) -> np.ndarray:
        for t0, t1, sol in self.segments:
            if t <= t1 or (t0, t1, sol) is self.segments[-1]:
                return np.asarray(sol(min(max(t, t0), t1) - t0))
        raise ArgumentError("queried outside the trajectory")

    def position(self, t: float) -> np.ndarray:
        return self.state(t)[:3]


def integrate_surface_geodesic(surface: Genus2Surface, x0, v0, t_max: float,
                               rtol: float = 1e-9, r_capture: float = 1e-4,
                               z_cap: float = 8.0, feedback: float = 8.0,
                               project_start: bool = True) -> SurfaceTrajectory:
    """Unit-speed geodesic of the induced metric, integrated in ambient space.

    The singularity detector is a closest-approach event (sign change of
    X . V), which cannot be stepped over even on exactly straight
    stretches where the error controller grows the step without bound.
    A dip with |X| below r_capture terminates as an apex hit; other dips
    resume.  Escape fires at z > z_cap.  The Baumgarte feedback keeps the
    state on the zero set without altering on-surface dynamics.
    """
    x0 = np.asarray(x0, float)
    if project_start:
        x0 = surface.project(x0)
    v0 = np.asarray(v0, float)
    _, grad0, _ = surface.implicit(x0)
    v0 = v0 - (v0 @ grad0) / (grad0 @ grad0) * grad0
    nv = np.linalg.norm(v0)
    if nv == 0:
        raise ArgumentError("velocity is normal to the surface")
    v0 = v0 / nv
    fb = feedback

    acc = surface.geodesic_acceleration

    def rhs(t, y):
        ax, ay, az = acc(y, fb)
        return np.array([y[3], y[4], y[5], ax, ay, az])

    def ev_closest(t, y):
        return y[0] * y[3] + y[1] * y[4] + y[2] * y[5]

    ev_closest.terminal = True
    ev_closest.direction = 1

    def ev_escape(t, y):
        return float(z_cap - y[2])

    ev_escape.terminal = True
    ev_escape.direction = -1

    y = np.concatenate([x0, v0])
    # micro-nudge so a vanishing X . V at the start is not a spurious event
    y = y + 1e-10 * rhs(0.0, y)

    segments = []
    t_off = 0.0
    outcome = "horizon"
    r_min = np.inf
    L_dip = 0.0
    n_dips = 0
    for _ in range(512):
        res = solve_ivp(rhs, (0.0, t_max - t_off), y, method="RK45",
                        rtol=rtol, atol=rtol * 1e-3, dense_output=True,
                        events=[ev_closest, ev_escape])
        segments.append((t_off, t_off + res.t[-1], res.sol))
        t_off += res.t[-1]
        y = res.y[:, -1]
        if res.status == 1:
            if res.t_events[0].size:  # a closest approach
                n_dips += 1
                r_here = float(np.linalg.norm(y[:3]))
                if r_here < r_min:
                    r_min = r_here
                    L_dip = float(y[0] * y[4] - y[1] * y[3])
                if r_here < r_capture:
                    outcome = "apex"
                    break
                y = y + 1e-10 * rhs(0.0, y)  # step off the event manifold
                continue
            outcome = "escape"
            break
        if res.status == 0:
            outcome = "horizon"
            break
        outcome = "failed"
        break
    if not np.isfinite(r_min):
        # no dip happened; fall back to the sampled minimum
        r3 = np.linalg.norm(res.y[:3, :], axis=0)
        k = int(np.argmin(r3))
        r_min = float(r3[k])
        L_dip = float(res.y[0, k] * res.y[4, k] - res.y[1, k] * res.y[3, k])
    return SurfaceTrajectory(
        t_end=t_off, outcome=outcome, y_end=y, r_min=float(r_min),
        L_at_dip=L_dip, segments=segments, n_dips=n_dips,
    )


def descent_checkpoint(traj: SurfaceTrajectory, r_check: float) -> np.ndarray:
    """State on the final descent where |X| ~ r_check (azimuth diagnostics)."""
    tau = traj.t_end
    lo, hi = max(0.0, tau - 3.0 * r_check), tau
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(traj.position(mid)) > r_check:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(tau, 1.0):
            break
    return traj.state(lo)


def _azimuth_clear(state: np.ndarray) -> bool:
    """Azimuth outside the tube sectors around phi = 0 and pi."""
    X = state[:3]
    rho = np.hypot(X[0], X[1])
    if rho == 0:
        return True
    return abs(X[1]) / rho > CLEAR_SIN_PHI


@dataclass
class BranchMeasurement:
    lifetime: float
    outcome: str
    resumed: int
    drift: float  # |G|/|grad G| residual at the end
    segments: list = field(default_factory=list)  # (t0, t1, dense sol)

    def position(self, t: float) -> np.ndarray:
        for t0, t1, sol in self.segments:
            if t <= t1 or (t0, t1, sol) is self.segments[-1]:
                return np.asarray(sol(min(max(t, t0), t1) - t0))[:3]
        raise ArgumentError("queried outside the measured branch")


def measure_branch(surface: Genus2Surface, x0, v0, horizon: float,
                   rtol: float = 1e-10, r_capture: float = 1e-4,
                   z_cap: float = 16.0, scale: float = 1.0) -> BranchMeasurement:
    """Arc length from x0 along v0 to the singularity (or censoring).

    On an apex capture the remaining length equals the ambient distance to
    the origin (the tail is a straight ray in a tube-free azimuth), which
    is added to the event parameter.
    """
    traj = integrate_surface_geodesic(surface, x0, v0, horizon,
                                      rtol=rtol, r_capture=r_capture, z_cap=z_cap)
    if traj.outcome != "apex":
        return BranchMeasurement(lifetime=traj.t_end, outcome=traj.outcome,
                                 resumed=traj.n_dips,
                                 drift=surface.surface_residual(traj.y_end[:3]),
                                 segments=traj.segments)
    check = descent_checkpoint(traj, 0.01 * scale)
    if not _azimuth_clear(check):
        return BranchMeasurement(lifetime=traj.t_end, outcome="ambiguous",
                                 resumed=traj.n_dips,
                                 drift=surface.surface_residual(check[:3]),
                                 segments=traj.segments)
    remaining = float(np.linalg.norm(traj.y_end[:3]))
    return BranchMeasurement(lifetime=traj.t_end + remaining, outcome="apex",
                             resumed=traj.n_dips,
                             drift=surface.surface_residual(check[:3]),
                             segments=traj.segments)


# ---------------------------------------------------------------------------
# the double-ended witness through P_n


@dataclass(frozen=True)
class WitnessGeodesic:
    found: bool
    band: int
    alpha: float
    T_plus: float
    T_minus: float
    symmetry_defect: float
    diagnostics: dict
    plus: Optional[BranchMeasurement] = None
    minus: Optional[BranchMeasurement] = None

    @property
    def T(self) -> float:
        return 0.5 * (self.T_plus + self.T_minus)


def _direction(alpha: float) -> np.ndarray:
    # tangent plane at P_n is spanned by e_x, e_y (the normal is vertical)
    return np.array([np.cos(alpha), np.sin(alpha), 0.0])


def find_witness(surface: Genus2Surface, band: int = 0, n_scan: int = 64,
                 alpha_range: tuple = (0.03, 1.54), horizon: float = 20.0,
                 scan_rtol: float = 1e-7, final_rtol: float = 1e-10,
                 n_candidates: int = 5, max_bisect: int = 45) -> WitnessGeodesic:
    """Aim a geodesic from P_band at the singularity.

    Directions are seeded in the tangent plane at the fixed point of the
    composed reflection through P_band.  The search refines the deepest
    approach over direction windows; once a window tracks a single
    descent family, bisection on the sign of the angular momentum about
    the cone axis (the side on which the track misses the origin) drives
    the miss below the capture radius.  Every geodesic through P_band is
    branch-symmetric, so the life-time symmetry defect is verified on the
    result rather than searched for.
    """
    scale = 2.0 ** band
    P = surface.marker_P(band)
    hz = horizon * scale
    zc = 5.0 * scale
    rs = 1e-4 * scale
    switch_r = 0.3 * scale  # dip depth below which L-sign bisection is trusted
    n_probes = 0

    def probe(alpha: float, rtol: float = scan_rtol):
        nonlocal n_probes
        n_probes += 1
        return integrate_surface_geodesic(surface, P, _direction(alpha), hz,
                                          rtol=rtol, r_capture=rs, z_cap=zc)

    def measure_both(alpha: float):
        plus = measure_branch(surface, P, _direction(alpha), hz, rtol=final_rtol,
                              r_capture=rs, z_cap=zc, scale=scale)
        if plus.outcome != "apex":
            return None
        minus = measure_branch(surface, P, -_direction(alpha), hz, rtol=final_rtol,
                               r_capture=rs, z_cap=zc, scale=scale)
        if minus.outcome != "apex":
            return None
        return plus, minus

    def bisect(a_lo, L_lo, a_hi, L_hi):
        """L-sign bisection inside one descent family; None if it stalls."""
        lo, hi = a_lo, a_hi
        s_lo = np.sign(L_lo)
        for _ in range(max_bisect):
            mid = 0.5 * (lo + hi)
            tm = probe(mid, scan_rtol if (hi - lo) > 1e-6 else 1e-9)
            if tm.outcome == "apex":
                return mid
            if np.sign(tm.L_at_dip) == s_lo:
                lo = mid
            else:
                hi = mid
            if (hi - lo) < 1e-14:
                return None
        return None

    alphas = list(np.linspace(alpha_range[0], alpha_range[1], n_scan))
    scan = [(a, probe(a)) for a in alphas]
    diagnostics = {"n_scan": n_scan}

    # candidate windows around interior minima of the dip depth
    order = sorted(range(1, len(scan) - 1),
                   key=lambda i: scan[i][1].r_min)
    seen = []
    candidates = []
    for i in order:
        a = scan[i][0]
        if any(abs(a - b) < 2.5 * (alphas[1] - alphas[0]) for b in seen):
            continue
        seen.append(a)
        candidates.append((alphas[i - 1], alphas[i + 1]))
        if len(candidates) >= n_candidates:
            break

    for a_lo0, a_hi0 in candidates:
        window = (a_lo0, a_hi0)
        grid = None
        a_star = None
        for level in range(14):
            gs = np.linspace(window[0], window[1], 9)
            grid = [(a, probe(a)) for a in gs]
            hits = [a for a, tr in grid if tr.outcome == "apex"]
            if hits:
                a_star = hits[0]
                break
            k = int(np.argmin([tr.r_min for _, tr in grid]))
            best_a, best_tr = grid[k]
            if best_tr.r_min < switch_r:
                # adjacent sign change around the best dip
                for i in range(max(k - 1, 0), min(k + 1, len(grid) - 1) + 1):
                    if i + 1 >= len(grid):
                        break
                    (a1, t1), (a2, t2) = grid[i], grid[i + 1]
                    if np.sign(t1.L_at_dip) != np.sign(t2.L_at_dip):
                        a_star = bisect(a1, t1.L_at_dip, a2, t2.L_at_dip)
                        if a_star is not None:
                            break
                if a_star is not None:
                    break
            w = (window[1] - window[0]) / 4.0
            window = (best_a - w, best_a + w)
        if a_star is None:
            continue
        measured = measure_both(a_star)
        if measured is None:
            continue
        plus, minus = measured
        defect = abs(plus.lifetime - minus.lifetime) / plus.lifetime
        diagnostics.update({
            "drift_plus": plus.drift, "drift_minus": minus.drift,
            "n_probes": n_probes,
            "window": (float(a_lo0), float(a_hi0)),
        })
        return WitnessGeodesic(
            found=True, band=band, alpha=float(a_star),
            T_plus=plus.lifetime, T_minus=minus.lifetime,
            symmetry_defect=float(defect), diagnostics=diagnostics,
            plus=plus, minus=minus,
        )
    diagnostics["outcomes"] = [(float(a), tr.outcome, float(tr.r_min))
                               for a, tr in scan]
    diagnostics["n_probes"] = n_probes
    return WitnessGeodesic(found=False, band=band, alpha=np.nan, T_plus=np.nan,
                           T_minus=np.nan, symmetry_defect=np.nan,
                           diagnostics=diagnostics)
