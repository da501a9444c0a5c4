"""Parallel transport, holonomy sampling and reducibility detection.

Transport solves the linear system v' = -Gamma(x)[x', v] along a path
(a dense trajectory or a chart polyline).  Holonomy samples collect
transport matrices of randomized lasso loops at a base point, expressed
in an orthonormal frame of the local parallel metric; invariant-subspace
detection then looks for a symmetric element of the commutant of the
sampled set and splits along its eigenspaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ArgumentError, DomainError
from .geodesic import Trajectory
from .manifold import ChartMetric, curvature_norm, metric_at
from .weyl import WeylStructure, weyl_christoffel

# decomposition labels
TRIVIAL = "trivial"
REDUCIBLE = "reducible"
IRREDUCIBLE = "irreducible-generic"
COMPLEX_CANDIDATE = "complex-structure-preserving-candidate"


def orthonormal_frame(w: WeylStructure, x: np.ndarray,
                      parallel_metric: bool = True) -> np.ndarray:
    """Columns form an orthonormal basis at x (for g0 = phi^2 g if present)."""
    g = metric_at(w.reference, x)
    if parallel_metric and w.exact_potential is not None:
        g = w.potential(x) ** 2 * g
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L.T)


@dataclass(frozen=True)
class TransportResult:
    matrix: np.ndarray  # chart-coordinate matrix T_start -> T_end
    start: np.ndarray
    end: np.ndarray

    def in_frames(self, E_start: np.ndarray, E_end: np.ndarray) -> np.ndarray:
        return np.linalg.solve(E_end, self.matrix @ E_start)


def _transport_ode(w: WeylStructure, x_of, v_of, t0: float, t1: float,
                   tol: float) -> np.ndarray:
    d = w.dim

    def rhs(t, y):
        P = y.reshape(d, d)
        gamma = weyl_christoffel(w, x_of(t))
        A = -np.einsum("kij,i->kj", gamma, v_of(t))
        return (A @ P).ravel()

    res = solve_ivp(rhs, (t0, t1), np.eye(d).ravel(), method="RK45",
                    rtol=tol, atol=tol * 1e-2)
    if res.status != 0:
        raise ArgumentError("transport integration failed")
    return res.y[:, -1].reshape(d, d)


def parallel_transport(w: WeylStructure, path, tol: float = 1e-10) -> TransportResult:
    """Transport the coordinate frame along a trajectory or polyline.

    For closed structures the local parallel metric g0 is preserved within
    integrator tolerance.  Paths through the singular guard band raise.
    """
    chart = w.reference
    if isinstance(path, Trajectory):
        d = chart.dim

        def x_of(t):
            return path.position(t)

        def v_of(t):
            return path.velocity(t)

        P = _transport_ode(w, x_of, v_of, 0.0, path.t_end, tol)
        return TransportResult(matrix=P, start=path.position(0.0),
                               end=path.position(path.t_end))

    pts = [np.asarray(p, float) for p in path]
    if len(pts) < 2:
        raise ArgumentError("polyline needs at least two points")
    for p in pts:
        chart.check_point(p)
    d = chart.dim
    P = np.eye(d)
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a

        def x_of(t, a=a, seg=seg):
            return a + t * seg

        def v_of(t, seg=seg):
            return seg

        P = _transport_ode(w, x_of, v_of, 0.0, 1.0, tol) @ P
    return TransportResult(matrix=P, start=pts[0], end=pts[-1])


def circle_polyline(center: np.ndarray, radius: float, n: int = 24,
                    axes: tuple = (0, 1)) -> list:
    """Closed n-gon around a chart point in the given coordinate plane."""
    center = np.asarray(center, float)
    pts = []
    i, j = axes
    for k in range(n + 1):
        ang = 2.0 * np.pi * k / n
        p = center.copy()
        p[i] += radius * np.cos(ang)
        p[j] += radius * np.sin(ang)
        pts.append(p)
    return pts


def lasso_polyline(base: np.ndarray, waypoint: np.ndarray, radius: float,
                   n: int = 24, axes: tuple = (0, 1)) -> list:
    """Out along a segment, a small circuit, and back: a contractible loop."""
    base = np.asarray(base, float)
    circle = circle_polyline(waypoint, radius, n, axes)
    return [base] + circle + [base]


@dataclass(frozen=True)
class LoopFamilySpec:
    """Randomized lasso loops inside a coordinate region."""

    region_lower: tuple
    region_upper: tuple
    radius_range: tuple = (0.05, 0.3)
    n_circuit: int = 24
    axes_choices: tuple = ((0, 1),)
    seed: int = 0


@dataclass(frozen=True)
class HolonomySample:
    """Transport matrices at a base point in an orthonormal frame."""

    base: tuple
    frame: np.ndarray
    elements: tuple
    loops: tuple  # provenance of each element

    def to_dict(self) -> dict:
        return {
            "base": list(self.base),
            "frame": self.frame.tolist(),
            "elements": [np.asarray(e).tolist() for e in self.elements],
            "loops": list(self.loops),
        }


def holonomy_scan(w: WeylStructure, base, spec: LoopFamilySpec, n: int,
                  tol: float = 1e-10,
                  group_action=None) -> HolonomySample:
    """n transport matrices from randomized lasso loops at the base point.

    Loops are generated within a single chart (contractible, restricted
    holonomy).  With ``group_action`` = (map f, its differential frame
    action) the scan runs in full mode: transport along a path from base
    to f(base) composed with the inverse differential of f.
    """
    base = np.asarray(base, float)
    rng = np.random.default_rng(spec.seed)
    lo = np.asarray(spec.region_lower, float)
    hi = np.asarray(spec.region_upper, float)
    E0 = orthonormal_frame(w, base)
    elements = []
    loops = []
    for k in range(n):
        if group_action is None:
            waypoint = lo + (hi - lo) * rng.random(lo.size)
            r = spec.radius_range[0] + (spec.radius_range[1] - spec.radius_range[0]) * rng.random()
            axes = spec.axes_choices[int(rng.integers(len(spec.axes_choices)))]
            path = lasso_polyline(base, waypoint, r, spec.n_circuit, axes)
            res = parallel_transport(w, path, tol=tol)
            if np.max(np.abs(res.end - base)) > 1e-9:
                raise ArgumentError("lasso loop did not close")
            elements.append(res.in_frames(E0, E0))
            loops.append({"kind": "lasso", "waypoint": waypoint.tolist(),
                          "radius": r, "axes": list(axes)})
        else:
            f_map, f_diff = group_action
            target = np.asarray(f_map(base), float)
            mid = lo + (hi - lo) * rng.random(lo.size)
            path = [base, mid, target] if k > 0 else [base, target]
            res = parallel_transport(w, path, tol=tol)
            # full-holonomy element: transport to f(base), identify back by df
            df = np.asarray(f_diff(base), float)
            M_chart = np.linalg.solve(df, res.matrix)
            elements.append(np.linalg.solve(E0, M_chart @ E0))
            loops.append({"kind": "deck", "via": mid.tolist()})
    return HolonomySample(base=tuple(base), frame=E0,
                          elements=tuple(elements), loops=tuple(loops))


# ---------------------------------------------------------------------------
# invariant subspaces


@dataclass(frozen=True)
class Decomposition:
    dims: tuple
    bases: tuple  # one (d, k) orthonormal column block per subspace
    residual: float
    trivial: bool
    label: str

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "residual": self.residual,
            "trivial": self.trivial,
            "label": self.label,
            "bases": [np.asarray(b).tolist() for b in self.bases],
        }


def _sym_basis(d: int) -> list:
    out = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out


def _skew_basis(d: int) -> list:
    out = []
    for i in range(d):
        for j in range(i + 1, d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            E[j, i] = -1.0
            out.append(E)
    return out


def _commutant(mats: Sequence[np.ndarray], basis: list, rank_tol: float) -> list:
    """Basis of {X in span(basis) : A X = X A for all sampled A}."""
    cols = [np.concatenate([(A @ E - E @ A).ravel() for A in mats]) for E in basis]
    M = np.stack(cols, axis=1)
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rank_tol * max(smax, 1.0)))
    return [sum(c * E for c, E in zip(coef, basis)) for coef in vh[rank:]]


def _subspace_residual(mats, basis_block) -> float:
    P = basis_block @ basis_block.T
    worst = 0.0
    for A in mats:
        worst = max(worst, float(np.max(np.abs((np.eye(P.shape[0]) - P) @ A @ basis_block))))
    return worst


def invariant_subspaces(sample: HolonomySample, tol: float = 1e-4) -> Decomposition:
    """Finest orthogonal decomposition invariant under every sampled element.

    Accumulates the commutant of the sampled matrices over symmetric
    matrices, splits along the eigenspaces of a generic commutant element,
    and verifies invariance of each block within tol.  A degenerate sample
    (all elements close to the identity) reports a single flat factor with
    the trivial-holonomy flag.
    """
    mats = [np.asarray(e, float) for e in sample.elements]
    if len(mats) < 2:
        raise ArgumentError("need at least two sampled elements")
    d = mats[0].shape[0]
    if all(np.max(np.abs(A - np.eye(d))) <= tol for A in mats):
        return Decomposition(dims=(d,), bases=(np.eye(d),), residual=0.0,
                             trivial=True, label=TRIVIAL)
    comm = _commutant(mats, _sym_basis(d), rank_tol=tol * 1e-2)
    if len(comm) <= 1:
        label = IRREDUCIBLE
        if _complex_structure_candidate(mats, tol):
            label = COMPLEX_CANDIDATE
        return Decomposition(dims=(d,), bases=(np.eye(d),), residual=0.0,
                             trivial=False, label=label)
    rng = np.random.default_rng(12345)
    X = sum(float(c) * B for c, B in zip(rng.standard_normal(len(comm)), comm))
    X = 0.5 * (X + X.T)
    evals, evecs = np.linalg.eigh(X)
    spread = max(evals[-1] - evals[0], 1.0)
    # cluster eigenvalues, then merge blocks until every block is invariant
    groups = [[0]]
    for i in range(1, d):
        if evals[i] - evals[i - 1] <= 1e-6 * spread:
            groups[-1].append(i)
        else:
            groups.append([i])
    while True:
        blocks = [evecs[:, idx] for idx in groups]
        residuals = [_subspace_residual(mats, b) for b in blocks]
        if max(residuals) <= tol or len(groups) == 1:
            break
        worst = int(np.argmax(residuals))
        merge_with = worst - 1 if worst > 0 else worst + 1
        a, b = sorted((worst, merge_with))
        groups = groups[:a] + [groups[a] + groups[b]] + groups[b + 1:]
    order = np.argsort([-len(gp) for gp in groups], kind="stable")
    dims = tuple(len(groups[i]) for i in order)
    bases = tuple(evecs[:, groups[i]] for i in order)
    residual = max(_subspace_residual(mats, b) for b in bases)
    label = REDUCIBLE if len(dims) > 1 else IRREDUCIBLE
    return Decomposition(dims=dims, bases=bases, residual=float(residual),
                         trivial=False, label=label)


def _complex_structure_candidate(mats, tol) -> bool:
    """Check for a sampled-commuting J with J^2 = -1 (a U(m) signal)."""
    d = mats[0].shape[0]
    if d % 2 != 0:
        return False
    skew = _commutant(mats, _skew_basis(d), rank_tol=tol * 1e-2)
    for K in skew:
        KK = K @ K
        c = -np.trace(KK) / d
        if c > 0 and np.max(np.abs(KK + c * np.eye(d))) <= tol * max(c, 1.0):
            return True
    return False


# ---------------------------------------------------------------------------
# flatness certificate


@dataclass(frozen=True)
class FlatnessCertificate:
    max_norm: float  # sup over the sample of |R|^2 scale^4
    verdict: bool
    threshold: float = 1e-6

    def to_dict(self) -> dict:
        return {"max_curvature_norm": self.max_norm, "flat": self.verdict,
                "threshold": self.threshold}


def flatness_certificate(obj, region_sample: Sequence[np.ndarray],
                         threshold: float = 1e-6) -> FlatnessCertificate:
    """Sup of the scale-normalized curvature norm over a region sample.

    The verdict is flat when |R|^2 sigma^4 stays below the threshold, with
    sigma the chart's local length scale.
    """
    chart = obj.reference if isinstance(obj, WeylStructure) else obj
    worst = 0.0
    for x in region_sample:
        x = np.asarray(x, float)
        scale = chart.scale(x)
        worst = max(worst, curvature_norm(chart, x) * scale ** 4)
    return FlatnessCertificate(max_norm=float(worst), verdict=worst < threshold,
                               threshold=threshold)
