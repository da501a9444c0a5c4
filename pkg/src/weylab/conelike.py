"""Discrete homothety groups acting on Riemannian spaces.

Group elements are explicit coordinate maps with declared ratios (ratios
are verified against sampled distances, never inferred).  The module
houses the quantitative estimates that make one-point completions work:
the orbit Cauchy contraction, the uniform bound on contracting images,
the word-length bound, weight-1 equivariant extension of functions on a
fundamental domain, and the comparison-ball inclusion check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ArgumentError, CoverageError

Point = np.ndarray
Word = Sequence[tuple]  # [(generator index, integer exponent), ...]


@dataclass(frozen=True)
class Action:
    """A diffeomorphism of the space with a declared homothety ratio."""

    map: Callable[[Point], Point]
    inverse: Callable[[Point], Point]
    ratio: float
    name: str = "h"


@dataclass(frozen=True)
class HomothetyGroup:
    """Finitely many expanding generators acting by homotheties.

    ``dist`` is the geodesic distance of the underlying space (closed form
    on catalog spaces, otherwise a shooting estimate tagged by its
    achieved tolerance).
    """

    generators: tuple[Action, ...]
    dist: Callable[[Point, Point], float]
    base_point: Optional[tuple] = None
    name: str = "group"

    def __post_init__(self):
        if not self.generators:
            raise ArgumentError("a homothety group needs at least one generator")

    def apply(self, word: Word, x: Point) -> Point:
        y = np.asarray(x, float)
        for idx, a in word:
            gen = self.generators[idx]
            step = gen.map if a > 0 else gen.inverse
            for _ in range(abs(int(a))):
                y = np.asarray(step(y), float)
        return y

    def homothety_residual(self, gen_index: int, pairs: Sequence[tuple]) -> float:
        """Max relative deviation of d(h x, h y) from rho d(x, y)."""
        gen = self.generators[gen_index]
        worst = 0.0
        for x, y in pairs:
            d0 = self.dist(np.asarray(x, float), np.asarray(y, float))
            d1 = self.dist(np.asarray(gen.map(np.asarray(x, float)), float),
                           np.asarray(gen.map(np.asarray(y, float)), float))
            if d0 > 0:
                worst = max(worst, abs(d1 - gen.ratio * d0) / (gen.ratio * d0))
        return worst


def normalize_word(word: Word, n_generators: int) -> list:
    """Collect exponents per generator (the group is Abelian)."""
    exps = [0] * n_generators
    for idx, a in word:
        if not (0 <= idx < n_generators):
            raise ArgumentError(f"generator index {idx} out of range")
        exps[idx] += int(a)
    return exps


def ratio(g: HomothetyGroup, word: Word) -> float:
    """The homothety ratio of a word: prod rho_i^{a_i} (a homomorphism)."""
    exps = normalize_word(word, len(g.generators))
    out = 1.0
    for gen, a in zip(g.generators, exps):
        out *= gen.ratio ** a
    return out


def d_x(g: HomothetyGroup, x: Point) -> float:
    """D_x = max over generators of d(x, h_i(x))."""
    x = np.asarray(x, float)
    return max(g.dist(x, np.asarray(h.map(x), float)) for h in g.generators)


def k_bound(g: HomothetyGroup, x: Point) -> float:
    """Uniform bound K_x on d(x, f(x)) over contracting words f.

    K_x = D_x (prod_i rho_i / (rho_i - 1) + 1); generators must expand.
    """
    for h in g.generators:
        if h.ratio <= 1.0:
            raise ArgumentError(f"generator '{h.name}' has ratio {h.ratio} <= 1")
    prod = 1.0
    for h in g.generators:
        prod *= h.ratio / (h.ratio - 1.0)
    return d_x(g, x) * (prod + 1.0)


def word_bound(g: HomothetyGroup, x: Point, exponents: Sequence[int]) -> float:
    """Bound on d(x, (prod h_i^{a_i}) x) for nonnegative exponents a_i."""
    if len(exponents) != len(g.generators):
        raise ArgumentError("one exponent per generator required")
    if any(a < 0 for a in exponents):
        raise ArgumentError("word_bound needs nonnegative exponents")
    out = d_x(g, x)
    for h, a in zip(g.generators, exponents):
        out *= (h.ratio ** (a + 1) - 1.0) / (h.ratio - 1.0)
    return out


def cauchy_contraction(g: HomothetyGroup, x: Point, f: Word, m: int, n: int) -> tuple:
    """Measured d(f^m x, f^n x) against the geometric-series bound.

    bound = d(x, f x) rho(f)^m / (1 - rho(f)); requires rho(f) < 1 and
    m <= n.  Callers assert measured < bound.
    """
    rho = ratio(g, f)
    if rho >= 1.0:
        raise ArgumentError(f"word has ratio {rho} >= 1, not contracting")
    if m > n:
        raise ArgumentError("need m <= n")
    x = np.asarray(x, float)
    xm = x.copy()
    for _ in range(m):
        xm = g.apply(f, xm)
    xn = xm.copy()
    for _ in range(n - m):
        xn = g.apply(f, xn)
    measured = g.dist(xm, xn)
    bound = g.dist(x, g.apply(f, x)) * rho ** m / (1.0 - rho)
    return measured, bound


# ---------------------------------------------------------------------------
# fundamental domains and equivariant extension


@dataclass(frozen=True)
class FundamentalDomain:
    """One orbit representative per point, with a reduction strategy.

    ``reduce`` maps a point to (word, representative) with representative
    = word^{-1} applied to the point lying in the domain.  When absent, a
    greedy ratio-normalization against ``level`` is used (word budget 64).
    """

    contains: Callable[[Point], bool]
    reduce: Optional[Callable[[Point], tuple]] = None
    level: Optional[Callable[[Point], float]] = None
    description: str = ""


def reduce_to_domain(g: HomothetyGroup, omega: FundamentalDomain, x: Point,
                     budget: int = 64) -> tuple:
    """Find a word w with w^{-1}(x) in Omega; raises CoverageError on budget."""
    x = np.asarray(x, float)
    if omega.reduce is not None:
        return omega.reduce(x)
    if omega.contains(x):
        return [], x
    if omega.level is None:
        raise CoverageError("fundamental domain has neither reduce nor level")
    word = []
    y = x.copy()
    for _ in range(budget):
        if omega.contains(y):
            return word, y
        lev = omega.level(y)
        # move the level toward the domain with the first generator that helps
        moved = False
        for idx, h in enumerate(g.generators):
            if lev > 0:
                y2 = np.asarray(h.inverse(y), float)
                if omega.level(y2) < lev:
                    y, moved = y2, True
                    word.append((idx, 1))
                    break
            else:
                y2 = np.asarray(h.map(y), float)
                if omega.level(y2) > lev:
                    y, moved = y2, True
                    word.append((idx, -1))
                    break
        if not moved:
            break
    if omega.contains(y):
        return word, y
    raise CoverageError(
        f"point {x.tolist()} not reducible to the fundamental domain in {budget} steps"
    )


def equivariant_extend(values: Callable[[Point], float], omega: FundamentalDomain,
                       g: HomothetyGroup) -> Callable[[Point], float]:
    """The unique weight-1 equivariant extension of values on Omega.

    psi(f(x)) = rho(f) psi(x) holds by construction; with positive bounded
    values of bounded inverse on Omega, the extension is quasi-linear.
    """

    def psi(x: Point) -> float:
        word, rep = reduce_to_domain(g, omega, x)
        val = float(values(rep))
        if val <= 0:
            raise ArgumentError(f"values must be positive on Omega, got {val}")
        return ratio(g, word) * val

    return psi


# ---------------------------------------------------------------------------
# the singularity model and comparison-ball checks


@dataclass(frozen=True)
class SingularityModel:
    """The one-point completion data of a cone-like space.

    delta is the distance to the singularity; kappa the arc-length
    comparison constant; sigma a quasi-linear local product scale; k1, k2
    the quasi-linearity constants of the configured conformal factor.
    """

    omega_description: str
    delta: Callable[[Point], float]
    kappa: float
    k1: float
    k2: float
    sigma: Optional[Callable[[Point], float]] = None

    def __post_init__(self):
        if not (0.0 < self.kappa < 1.0):
            raise ArgumentError("kappa must lie in (0, 1)")


@dataclass(frozen=True)
class BallCheckResult:
    r_tilde: float
    n_checked: int
    max_g0_dist: float
    ok: bool


def ball_inclusion_check(x: Point, r: float, model: SingularityModel,
                         g_sphere_sampler: Callable[[Point, float], Sequence[Point]],
                         dist_g0: Callable[[Point, Point], float],
                         n: int = 20) -> BallCheckResult:
    """Check the comparison-ball inclusion with r~ = r / (k2 (delta(x) + r)).

    Samples points at g-distance just under r~ from x and verifies each
    has g0-distance below r.
    """
    x = np.asarray(x, float)
    r_tilde = r / (model.k2 * (model.delta(x) + r))
    pts = list(g_sphere_sampler(x, 0.98 * r_tilde))[:n]
    worst = 0.0
    for y in pts:
        worst = max(worst, dist_g0(x, np.asarray(y, float)))
    return BallCheckResult(r_tilde=r_tilde, n_checked=len(pts),
                           max_g0_dist=worst, ok=worst < r)


def admissible_disjointness(model: SingularityModel, safety: float = 0.9) -> tuple:
    """Admissible (rho, q) for the disjoint-ball family along a ray.

    rho < kappa and q < k1 (kappa - rho) / (k2 (rho + 1)).
    """
    rho = safety * model.kappa
    q = safety * model.k1 * (model.kappa - rho) / (model.k2 * (rho + 1.0))
    return rho, min(q, 0.95)


def disjoint_balls_check(gamma: Callable[[float], Point], model: SingularityModel,
                         dist_g0: Callable[[Point, Point], float],
                         rho: Optional[float] = None, q: Optional[float] = None,
                         n_max: int = 10) -> bool:
    """Pairwise disjointness of the balls B_{gamma(q^n)}(rho q^n), n <= n_max."""
    if rho is None or q is None:
        rho0, q0 = admissible_disjointness(model)
        rho = rho if rho is not None else rho0
        q = q if q is not None else q0
    centers = [np.asarray(gamma(q ** n), float) for n in range(1, n_max + 1)]
    radii = [rho * q ** n for n in range(1, n_max + 1)]
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            if dist_g0(centers[i], centers[j]) <= radii[i] + radii[j]:
                return False
    return True


# ---------------------------------------------------------------------------
# two-point distance by geodesic shooting (fallback when no closed form)


def shooting_distance(w, x: Point, y: Point, horizon: float = 20.0,
                      n_restarts: int = 6, tol: float = 1e-8) -> tuple:
    """Upper-bound estimate of d(x, y) by two-point geodesic shooting.

    Returns (distance, achieved_tolerance); the value is an upper bound,
    adequate for violation detection in the inequality checks.
    """
    from scipy.optimize import least_squares

    from .geodesic import integrate

    x = np.asarray(x, float)
    y = np.asarray(y, float)
    d = x.size
    chord = np.linalg.norm(y - x)
    if chord == 0:
        return 0.0, 0.0

    def endpoint_gap(params):
        v = params[:d]
        T = abs(params[d])
        try:
            traj = integrate(w, x, v, max(T, 1e-9), tol=1e-9)
        except Exception:
            return np.full(d, 1e3)
        if traj.termination != "horizon":
            return np.full(d, 1e3)
        return traj.position(traj.t_end) - y

    best = None
    rng = np.random.default_rng(0)
    for k in range(n_restarts):
        v0 = (y - x) / max(chord, 1e-12)
        if k > 0:
            v0 = v0 + 0.3 * rng.standard_normal(d)
        p0 = np.concatenate([v0, [chord * (1.0 + 0.2 * k)]])
        res = least_squares(endpoint_gap, p0, xtol=tol, ftol=tol, gtol=tol)
        gap = float(np.linalg.norm(res.fun))
        if gap < chord * 1e-4:
            from .geodesic import g_norm

            v = res.x[:d]
            T = abs(res.x[d])
            length = g_norm(w, x, v) * T
            if best is None or length < best[0]:
                best = (length, gap)
    if best is None:
        raise ArgumentError(f"shooting failed to connect {x.tolist()} and {y.tolist()}")
    return best
