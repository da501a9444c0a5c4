"""Tameness diagnostics: life-time scans, mu estimation, quasi-linearity.

A structure is tame-consistent when the supremum mu of incomplete
life-times stays equivalent to the distance to the singularity across
scales; a non-tame witness is a divergent ratio family or a double-ended
incomplete geodesic.  Finite sampling cannot decide suprema, so verdicts
use conservative configurable thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ArgumentError
from .geodesic import COMPLETE_TO_HORIZON, INCOMPLETE, LifetimeRecord, lifetime
from .manifold import metric_at
from .weyl import WeylStructure

# verdict labels
TAME_CONSISTENT = "tame-consistent"
NON_TAME_WITNESS = "non-tame-witness"
INCONCLUSIVE = "inconclusive"

SPREAD_NON_TAME = 50.0
SPREAD_TAME = 5.0


def scan_metric_eval(w: WeylStructure, x: np.ndarray) -> np.ndarray:
    """Metric used to unitize scan directions: g0 = phi^2 g when available."""
    g = metric_at(w.reference, x)
    if w.exact_potential is not None:
        g = w.potential(x) ** 2 * g
    return g


def unit_directions(w: WeylStructure, x: np.ndarray, n: int,
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """n unit directions at x (deterministic grid in dimension 2)."""
    g = scan_metric_eval(w, x)
    d = g.shape[0]
    L = np.linalg.cholesky(g)
    if d == 2:
        ang = 2.0 * np.pi * np.arange(n) / n
        u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.linalg.solve(L.T, u.T).T


def direction_at_angle(w: WeylStructure, x: np.ndarray, angle: float) -> np.ndarray:
    """Unit direction at a given angle in an orthonormal frame (dim 2)."""
    g = scan_metric_eval(w, x)
    L = np.linalg.cholesky(g)
    u = np.array([np.cos(angle), np.sin(angle)])
    return np.linalg.solve(L.T, u)


def lifetime_scan(w: WeylStructure, points: Sequence[np.ndarray],
                  directions_per_point: int, horizon: float,
                  seed: int = 0, tol: float = 1e-8,
                  max_step: Optional[float] = None) -> list[LifetimeRecord]:
    """One life-time record per (point, unit direction); deterministic."""
    rng = np.random.default_rng(seed)
    records = []
    for x in points:
        x = np.asarray(x, float)
        for X in unit_directions(w, x, directions_per_point, rng):
            records.append(lifetime(w, x, X, horizon, tol=tol, max_step=max_step))
    return records


@dataclass(frozen=True)
class MuEstimate:
    point: tuple
    value: Optional[float]  # None when censored (no incomplete direction found)
    best_direction: Optional[tuple]
    n_incomplete: int
    refinement_trace: tuple = ()

    @property
    def censored(self) -> bool:
        return self.value is None


def mu_estimate(w: WeylStructure, x, n_directions: int, horizon: float,
                refine: bool = True, refine_levels: int = 10, seed: int = 0,
                tol: float = 1e-8, max_step: Optional[float] = None) -> MuEstimate:
    """Estimate mu(x), the sup of incomplete life-times from x.

    Direction sampling plus local refinement around the worst direction
    (bracket shrinking on the sphere angle in dimension 2).  The estimate
    is monotone nondecreasing under refinement and a lower bound for the
    true supremum.
    """
    x = np.asarray(x, float)
    rng = np.random.default_rng(seed)
    d = w.dim

    def measure(X) -> LifetimeRecord:
        return lifetime(w, x, X, horizon, tol=tol, max_step=max_step)

    best_val = None
    best_dir = None
    best_angle = None
    n_inc = 0
    angles = 2.0 * np.pi * np.arange(n_directions) / n_directions
    if d == 2:
        dirs = [direction_at_angle(w, x, a) for a in angles]
    else:
        dirs = list(unit_directions(w, x, n_directions, rng))
    for k, X in enumerate(dirs):
        rec = measure(X)
        if rec.status == INCOMPLETE:
            n_inc += 1
            if best_val is None or rec.lifetime > best_val:
                best_val = rec.lifetime
                best_dir = X
                best_angle = angles[k] if d == 2 else None
    trace = []
    if best_val is not None and refine and d == 2 and best_angle is not None:
        window = 2.0 * np.pi / n_directions
        a_best = best_angle
        for level in range(refine_levels):
            cand = a_best + window * np.linspace(-1.0, 1.0, 9)
            for a in cand:
                rec = measure(direction_at_angle(w, x, a))
                if rec.status == INCOMPLETE and rec.lifetime > best_val:
                    best_val = rec.lifetime
                    a_best = a
                    best_dir = direction_at_angle(w, x, a)
            window /= 4.0
            trace.append((level, best_val))
    return MuEstimate(
        point=tuple(x),
        value=best_val,
        best_direction=tuple(best_dir) if best_dir is not None else None,
        n_incomplete=n_inc,
        refinement_trace=tuple(trace),
    )


@dataclass(frozen=True)
class QuasiLinearity:
    k1: float
    k2: float
    spread: float


def quasi_linearity_test(values: Sequence[tuple], delta: Sequence[tuple]) -> QuasiLinearity:
    """Ratio bounds of paired positive samples (point, value) / (point, delta).

    k1 = min ratio, k2 = max ratio, spread = k2/k1; a finite stable spread
    across scales is the tame-consistent signal.
    """
    if len(values) != len(delta) or not values:
        raise ArgumentError("values and delta must be nonempty and paired")
    ratios = []
    for (p1, v), (p2, dl) in zip(values, delta):
        if np.max(np.abs(np.asarray(p1, float) - np.asarray(p2, float))) > 1e-9:
            raise ArgumentError(f"mismatched pairing: {p1} vs {p2}")
        if dl <= 0:
            raise ArgumentError("delta samples must be positive")
        ratios.append(v / dl)
    k1 = float(np.min(ratios))
    k2 = float(np.max(ratios))
    return QuasiLinearity(k1=k1, k2=k2, spread=k2 / k1)


def spread_verdict(spread: float) -> str:
    if spread > SPREAD_NON_TAME:
        return NON_TAME_WITNESS
    if spread < SPREAD_TAME:
        return TAME_CONSISTENT
    return INCONCLUSIVE


@dataclass(frozen=True)
class TameReport:
    """mu/delta samples with ratio bounds and a conservative verdict."""

    mu_samples: tuple
    delta_samples: tuple
    ratio_bounds: tuple
    verdict: str
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "mu_samples": [[list(p), v] for p, v in self.mu_samples],
            "delta_samples": [[list(p), v] for p, v in self.delta_samples],
            "ratio_bounds": list(self.ratio_bounds),
            "verdict": self.verdict,
            "witness": self.witness,
        }


def tame_report(w: WeylStructure, points: Sequence[np.ndarray],
                delta_fn: Callable[[np.ndarray], float], n_directions: int,
                horizon: float, seed: int = 0, witness: Optional[dict] = None,
                tol: float = 1e-8) -> TameReport:
    """Assemble mu and delta samples over points into a verdict."""
    mu_samples = []
    delta_samples = []
    for x in points:
        x = np.asarray(x, float)
        est = mu_estimate(w, x, n_directions, horizon, seed=seed, tol=tol)
        if est.censored:
            continue
        mu_samples.append((tuple(x), est.value))
        delta_samples.append((tuple(x), float(delta_fn(x))))
    if not mu_samples:
        return TameReport((), (), (np.nan, np.nan), INCONCLUSIVE, witness)
    ql = quasi_linearity_test(mu_samples, delta_samples)
    verdict = spread_verdict(ql.spread)
    if witness is not None and witness.get("non_tame"):
        verdict = NON_TAME_WITNESS
    return TameReport(tuple(mu_samples), tuple(delta_samples),
                      (ql.k1, ql.k2), verdict, witness)


# ---------------------------------------------------------------------------
# weak tameness probing


@dataclass(frozen=True)
class ProbeRadiusResult:
    radius: float
    found: bool
    witness_vector: Optional[tuple] = None
    witness_lifetime: Optional[float] = None


@dataclass(frozen=True)
class WeakTameProbe:
    base_point: tuple
    base_vector: tuple
    results: tuple

    @property
    def persistent(self) -> bool:
        """True when incomplete vectors were found at every probed radius."""
        return all(r.found for r in self.results)


def weak_tame_probe(w: WeylStructure, x, X, radii: Sequence[float], horizon: float,
                    n_per_radius: int = 24, seed: int = 0,
                    candidates_fn: Optional[Callable[[float], Sequence[np.ndarray]]] = None,
                    horizon_fn: Optional[Callable[[np.ndarray], float]] = None,
                    tol: float = 1e-8) -> WeakTameProbe:
    """Look for incomplete vectors near a complete one, radius by radius.

    A persistent yes down to the smallest radius is evidence that the set
    of incomplete vectors accumulates at X, i.e. a non-weakly-tame signal.
    Candidate vectors come from the aiming oracle when provided, otherwise
    from seeded sampling in the angular cap.
    """
    x = np.asarray(x, float)
    X = np.asarray(X, float)
    g = scan_metric_eval(w, x)
    nX = float(np.sqrt(X @ g @ X))
    X = X / nX
    rng = np.random.default_rng(seed)
    results = []
    for r in radii:
        found = False
        wit = None
        wit_life = None
        if candidates_fn is not None:
            candidates = list(candidates_fn(r))
        else:
            candidates = []
            L = np.linalg.cholesky(g)
            u0 = L.T @ X
            u0 /= np.linalg.norm(u0)
            for _ in range(n_per_radius):
                pert = rng.standard_normal(x.size)
                pert -= (pert @ u0) * u0
                npert = np.linalg.norm(pert)
                if npert == 0:
                    continue
                ang = r * rng.random()
                u = np.cos(ang) * u0 + np.sin(ang) * pert / npert
                candidates.append(np.linalg.solve(L.T, u))
        for Y in candidates:
            Y = np.asarray(Y, float)
            hz = float(horizon_fn(Y)) if horizon_fn is not None else horizon
            rec = lifetime(w, x, Y, hz, tol=tol)
            if rec.status == INCOMPLETE:
                found = True
                wit = tuple(Y)
                wit_life = rec.lifetime
                break
        results.append(ProbeRadiusResult(radius=float(r), found=found,
                                         witness_vector=wit,
                                         witness_lifetime=wit_life))
    return WeakTameProbe(base_point=tuple(x), base_vector=tuple(X),
                         results=tuple(results))
