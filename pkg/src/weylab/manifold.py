"""Chart-based Riemannian metrics with Christoffel symbols and curvature.

A chart is a coordinate box (possibly with a predicate carving out a
sub-domain and a declared singular set) together with a metric evaluator.
Christoffel symbols come either from an analytic closed form attached to
the chart or from central finite differences whose step adapts to the
local length scale; curvature is assembled from derivatives of the
Christoffels.  Everything here is pure and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ArgumentError, ConditioningError, DomainError

Point = np.ndarray

# Relative finite-difference steps.  First derivatives of the metric use
# FD_STEP; derivatives of Christoffels use the larger FD_STEP_OUTER so the
# inner FD noise is not amplified past the curvature tolerances.
FD_STEP = 1e-5
FD_STEP_OUTER = 1e-4
FD_STEP_OUTER_ANALYTIC = 3e-5
COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# domains and singular sets


@dataclass(frozen=True)
class Domain:
    """A coordinate box, optionally refined by a margin predicate.

    ``predicate`` maps a point to a signed margin: positive inside the
    domain, negative outside.  ``lower``/``upper`` may be ``+-inf``.
    """

    dim: int
    lower: tuple = ()
    upper: tuple = ()
    predicate: Optional[Callable[[Point], float]] = None
    description: str = ""

    def _box(self):
        lo = np.array(self.lower if self.lower else [-np.inf] * self.dim, float)
        hi = np.array(self.upper if self.upper else [np.inf] * self.dim, float)
        return lo, hi

    def margin(self, x: Point) -> float:
        """Signed distance-like margin; positive strictly inside."""
        x = np.asarray(x, float)
        lo, hi = self._box()
        m = float(np.min(np.minimum(x - lo, hi - x)))
        if self.predicate is not None:
            m = min(m, float(self.predicate(x)))
        return m

    def contains(self, x: Point) -> bool:
        return self.margin(x) > 0.0


def full_domain(dim: int, description: str = "all coordinates") -> Domain:
    return Domain(dim=dim, description=description)


@dataclass(frozen=True)
class SingularSet:
    """Declared excluded loci (apex, punctures, boundary curves).

    ``proximity`` returns a nonnegative distance-like quantity that
    vanishes on the singular set; integration terminates when it drops
    below ``guard``.
    """

    proximity: Callable[[Point], float]
    guard: float = 1e-6
    description: str = ""


# ---------------------------------------------------------------------------
# the chart type


@dataclass(frozen=True)
class ChartMetric:
    """A coordinate chart with a metric tensor evaluator.

    Fields mirror the data a single chart of a Riemannian manifold needs
    for numerical work: the metric, optional analytic Christoffels, the
    valid domain, the declared singular set and a local length-scale
    estimate used to size finite-difference steps and guard bands.
    """

    dim: int
    metric_eval: Callable[[Point], np.ndarray]
    domain: Domain
    christoffel_eval: Optional[Callable[[Point], np.ndarray]] = None
    singular_set: Optional[SingularSet] = None
    scale_eval: Optional[Callable[[Point], float]] = None
    name: str = "chart"

    def scale(self, x: Point) -> float:
        if self.scale_eval is None:
            return 1.0
        return float(self.scale_eval(np.asarray(x, float)))

    def check_point(self, x: Point) -> Point:
        x = np.asarray(x, float)
        if x.shape != (self.dim,):
            raise ArgumentError(
                f"point of dimension {x.shape} on a {self.dim}-dimensional chart"
            )
        if not self.domain.contains(x):
            raise DomainError(
                f"point {x.tolist()} outside domain of chart '{self.name}'"
                f" ({self.domain.description})",
                point=x,
                predicate=self.domain.description,
            )
        s = self.singular_set
        if s is not None and s.proximity(x) <= s.guard:
            raise DomainError(
                f"point {x.tolist()} inside singular guard band of '{self.name}'"
                f" ({s.description})",
                point=x,
                predicate=s.description,
            )
        return x

    def boundary_margin(self, x: Point) -> float:
        """Margin to the domain boundary and singular guard, whichever is closer."""
        m = self.domain.margin(x)
        if self.singular_set is not None:
            m = min(m, self.singular_set.proximity(x) - self.singular_set.guard)
        return m


# ---------------------------------------------------------------------------
# metric, Christoffels, curvature


def metric_at(chart: ChartMetric, x: Point) -> np.ndarray:
    """Evaluate g(x) after domain checks; returns a symmetric SPD matrix."""
    x = chart.check_point(x)
    g = np.asarray(chart.metric_eval(x), float)
    return 0.5 * (g + g.T)


def _fd_metric_derivatives(chart: ChartMetric, x: Point, h: float) -> np.ndarray:
    """dg[k, i, j] = d g_ij / d x^k by central differences."""
    d = chart.dim
    dg = np.empty((d, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        gp = np.asarray(chart.metric_eval(x + e), float)
        gm = np.asarray(chart.metric_eval(x - e), float)
        dg[k] = (gp - gm) / (2.0 * h)
    return dg


def fd_christoffel(chart: ChartMetric, x: Point, h: Optional[float] = None) -> np.ndarray:
    """Finite-difference Levi-Civita coefficients Gamma[k, i, j].

    The step adapts to the local length scale; cone-like metrics degenerate
    near their singularity, so a fixed step would fail there.
    """
    x = chart.check_point(x)
    if h is None:
        h = FD_STEP * chart.scale(x)
    if chart.boundary_margin(x) < 2.0 * h:
        raise DomainError(
            f"point {x.tolist()} too close to the chart boundary for step {h}",
            point=x,
        )
    g = metric_at(chart, x)
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ConditioningError(
            f"metric condition number {cond:.3e} beyond {COND_LIMIT:.1e} at {x.tolist()}"
        )
    ginv = np.linalg.inv(g)
    dg = _fd_metric_derivatives(chart, x, h)
    # Gamma^k_ij = 1/2 g^{kl} (d_i g_lj + d_j g_li - d_l g_ij)
    gamma = 0.5 * np.einsum(
        "kl,ilj->kij", ginv, dg + np.swapaxes(dg, 0, 2) - np.swapaxes(dg, 0, 1)
    )
    # enforce the lower-index symmetry exactly
    return 0.5 * (gamma + np.swapaxes(gamma, 1, 2))


def christoffel(chart: ChartMetric, x: Point, h: Optional[float] = None) -> np.ndarray:
    """Christoffel symbols Gamma[k, i, j]; analytic when the chart has them."""
    if chart.christoffel_eval is not None and h is None:
        x = chart.check_point(x)
        return np.asarray(chart.christoffel_eval(x), float)
    return fd_christoffel(chart, x, h)


def metric_compatibility_residual(chart: ChartMetric, x: Point) -> float:
    """max_k | nabla_k g | with the chart's Christoffels; near zero for Levi-Civita."""
    x = chart.check_point(x)
    h = FD_STEP * chart.scale(x)
    gamma = christoffel(chart, x)
    dg = _fd_metric_derivatives(chart, x, h)
    nabla = dg - np.einsum("lki,lj->kij", gamma, metric_at(chart, x)) - np.einsum(
        "lkj,il->kij", gamma, metric_at(chart, x)
    )
    return float(np.max(np.abs(nabla)))


def riemann_tensor(chart: ChartMetric, x: Point, h: Optional[float] = None) -> np.ndarray:
    """Fully lowered curvature tensor R[l, k, i, j] at x.

    R^m_{kij} = d_i Gamma^m_jk - d_j Gamma^m_ik
                + Gamma^m_ia Gamma^a_jk - Gamma^m_ja Gamma^a_ik,
    lowered with g in the first slot.
    """
    x = chart.check_point(x)
    if h is None:
        rel = FD_STEP_OUTER_ANALYTIC if chart.christoffel_eval else FD_STEP_OUTER
        h = rel * chart.scale(x)
    if chart.boundary_margin(x) < 2.0 * h:
        raise DomainError(
            f"point {x.tolist()} too close to the chart boundary for step {h}",
            point=x,
        )
    d = chart.dim
    dgamma = np.empty((d, d, d, d))  # dgamma[i, m, a, b] = d_i Gamma^m_ab
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        gp = christoffel(chart, x + e)
        gm = christoffel(chart, x - e)
        dgamma[i] = (gp - gm) / (2.0 * h)
    gamma = christoffel(chart, x)
    riem_up = (
        np.einsum("imjk->mkij", dgamma)
        - np.einsum("jmik->mkij", dgamma)
        + np.einsum("mia,ajk->mkij", gamma, gamma)
        - np.einsum("mja,aik->mkij", gamma, gamma)
    )
    g = metric_at(chart, x)
    return np.einsum("lm,mkij->lkij", g, riem_up)


def curvature_norm(chart: ChartMetric, x: Point, h: Optional[float] = None) -> float:
    """Pointwise squared norm |R|^2 = R_{abcd} R^{abcd} of the Riemann tensor."""
    riem = riemann_tensor(chart, x, h)
    ginv = np.linalg.inv(metric_at(chart, x))
    riem_upper = np.einsum(
        "abcd,ae,bf,cg,dh->efgh", riem, ginv, ginv, ginv, ginv
    )
    return float(np.einsum("abcd,abcd->", riem, riem_upper))


def sectional_curvature(chart: ChartMetric, x: Point, i: int = 0, j: int = 1) -> float:
    """Sectional curvature of the coordinate plane (e_i, e_j)."""
    riem = riemann_tensor(chart, x)
    g = metric_at(chart, x)
    area2 = g[i, i] * g[j, j] - g[i, j] ** 2
    return float(riem[i, j, i, j] / area2)


# ---------------------------------------------------------------------------
# chart constructors


def flat_chart(dim: int = 2, name: str = "flat") -> ChartMetric:
    eye = np.eye(dim)
    zeros = np.zeros((dim, dim, dim))
    return ChartMetric(
        dim=dim,
        metric_eval=lambda x: eye,
        christoffel_eval=lambda x: zeros,
        domain=full_domain(dim),
        name=name,
    )


def scaled_chart(chart: ChartMetric, lam: float) -> ChartMetric:
    """The chart with metric lam^2 g; Christoffels are unchanged."""
    return ChartMetric(
        dim=chart.dim,
        metric_eval=lambda x: lam * lam * np.asarray(chart.metric_eval(x), float),
        christoffel_eval=chart.christoffel_eval,
        domain=chart.domain,
        singular_set=chart.singular_set,
        scale_eval=chart.scale_eval,
        name=f"{chart.name}*{lam}",
    )


def cone_chart(circumference: float = 2.0 * np.pi, apex_guard: float = 1e-6) -> ChartMetric:
    """Metric cone over a circle of the given length, chart (t, phi).

    g = dt^2 + c^2 t^2 dphi^2 with c = circumference / (2 pi); the apex
    t = 0 is the declared singular locus.
    """
    c2 = (circumference / (2.0 * np.pi)) ** 2

    def metric(x):
        t = x[0]
        return np.array([[1.0, 0.0], [0.0, c2 * t * t]])

    def gamma(x):
        t = x[0]
        out = np.zeros((2, 2, 2))
        out[0, 1, 1] = -c2 * t
        out[1, 0, 1] = out[1, 1, 0] = 1.0 / t
        return out

    return ChartMetric(
        dim=2,
        metric_eval=metric,
        christoffel_eval=gamma,
        domain=Domain(dim=2, lower=(0.0, -np.inf), upper=(np.inf, np.inf),
                      description="t > 0"),
        singular_set=SingularSet(
            proximity=lambda x: abs(x[0]), guard=apex_guard, description="cone apex t=0"
        ),
        scale_eval=lambda x: max(abs(x[0]), apex_guard),
        name=f"cone(L={circumference:g})",
    )


def cylinder_chart(circumference: float = 2.0 * np.pi, name: str | None = None) -> ChartMetric:
    """Flat product chart (s, phi) with g = ds^2 + c^2 dphi^2."""
    c2 = (circumference / (2.0 * np.pi)) ** 2
    g = np.array([[1.0, 0.0], [0.0, c2]])
    zeros = np.zeros((2, 2, 2))
    return ChartMetric(
        dim=2,
        metric_eval=lambda x: g,
        christoffel_eval=lambda x: zeros,
        domain=full_domain(2),
        name=name or f"cylinder(L={circumference:g})",
    )


def sphere_chart(radius: float = 1.0, pole_guard: float = 1e-3) -> ChartMetric:
    """Round sphere in polar coordinates (theta, phi), poles excluded."""
    r2 = radius * radius

    def metric(x):
        th = x[0]
        return np.array([[r2, 0.0], [0.0, r2 * np.sin(th) ** 2]])

    def gamma(x):
        th = x[0]
        out = np.zeros((2, 2, 2))
        out[0, 1, 1] = -np.sin(th) * np.cos(th)
        out[1, 0, 1] = out[1, 1, 0] = np.cos(th) / np.sin(th)
        return out

    return ChartMetric(
        dim=2,
        metric_eval=metric,
        christoffel_eval=gamma,
        domain=Domain(dim=2, lower=(0.0, -np.inf), upper=(np.pi, np.inf),
                      description="0 < theta < pi"),
        singular_set=SingularSet(
            proximity=lambda x: min(abs(x[0]), abs(np.pi - x[0])),
            guard=pole_guard,
            description="coordinate poles",
        ),
        name=f"sphere(R={radius:g})",
    )


def product_chart(a: ChartMetric, b: ChartMetric, name: str | None = None) -> ChartMetric:
    """Riemannian product chart; block metric, block Christoffels."""
    da, db = a.dim, b.dim
    d = da + db

    def metric(x):
        g = np.zeros((d, d))
        g[:da, :da] = a.metric_eval(x[:da])
        g[da:, da:] = b.metric_eval(x[da:])
        return g

    gamma_eval = None
    if a.christoffel_eval is not None and b.christoffel_eval is not None:

        def gamma_eval(x):
            out = np.zeros((d, d, d))
            out[:da, :da, :da] = a.christoffel_eval(x[:da])
            out[da:, da:, da:] = b.christoffel_eval(x[da:])
            return out

    def predicate(x):
        return min(a.domain.margin(x[:da]), b.domain.margin(x[da:]))

    sing = None
    parts = [c.singular_set for c in (a, b) if c.singular_set is not None]
    if parts:
        offs = {id(a.singular_set): 0}

        def prox(x):
            vals = []
            if a.singular_set is not None:
                vals.append(a.singular_set.proximity(x[:da]))
            if b.singular_set is not None:
                vals.append(b.singular_set.proximity(x[da:]))
            return min(vals)

        sing = SingularSet(
            proximity=prox,
            guard=max(p.guard for p in parts),
            description=" | ".join(p.description for p in parts),
        )

    def scale(x):
        sa = a.scale(x[:da]) if a.scale_eval else 1.0
        sb = b.scale(x[da:]) if b.scale_eval else 1.0
        return min(sa, sb)

    return ChartMetric(
        dim=d,
        metric_eval=metric,
        christoffel_eval=gamma_eval,
        domain=Domain(dim=d, predicate=predicate, description="product domain"),
        singular_set=sing,
        scale_eval=scale if (a.scale_eval or b.scale_eval) else None,
        name=name or f"{a.name} x {b.name}",
    )


def cone_over_chart(base: ChartMetric, apex_guard: float = 1e-6) -> ChartMetric:
    """Metric cone dt^2 + t^2 g_N over an arbitrary base chart (t first)."""
    db = base.dim
    d = db + 1

    def metric(x):
        t = x[0]
        g = np.zeros((d, d))
        g[0, 0] = 1.0
        g[1:, 1:] = t * t * np.asarray(base.metric_eval(x[1:]), float)
        return g

    gamma_eval = None
    if base.christoffel_eval is not None:

        def gamma_eval(x):
            t = x[0]
            y = x[1:]
            gN = np.asarray(base.metric_eval(y), float)
            gammaN = np.asarray(base.christoffel_eval(y), float)
            out = np.zeros((d, d, d))
            out[0, 1:, 1:] = -t * gN
            for aa in range(db):
                out[1 + aa, 0, 1 + aa] = out[1 + aa, 1 + aa, 0] = 1.0 / t
            out[1:, 1:, 1:] = gammaN
            return out

    def predicate(x):
        return min(x[0], base.domain.margin(x[1:]))

    def prox(x):
        p = abs(x[0])
        if base.singular_set is not None:
            p = min(p, base.singular_set.proximity(x[1:]))
        return p

    return ChartMetric(
        dim=d,
        metric_eval=metric,
        christoffel_eval=gamma_eval,
        domain=Domain(dim=d, predicate=predicate, description="t > 0, base domain"),
        singular_set=SingularSet(proximity=prox, guard=apex_guard,
                                 description="cone apex t=0"),
        scale_eval=lambda x: max(abs(x[0]), apex_guard),
        name=f"cone({base.name})",
    )


# ---------------------------------------------------------------------------
# embedded surfaces


@dataclass(frozen=True)
class SurfaceSymmetry:
    """An ambient isometry mapping the surface to itself.

    ``param_map`` realizes the same map in surface parameters, so that
    immersion(param_map(u)) == ambient_map(immersion(u)).
    """

    ambient_map: Callable[[np.ndarray], np.ndarray]
    param_map: Callable[[np.ndarray], np.ndarray]
    name: str = "symmetry"


@dataclass(frozen=True)
class EmbeddedSurface:
    """A parametric surface in Euclidean space with an atlas of patches."""

    immersion: Callable[[Point], np.ndarray]
    patch_atlas: tuple[Domain, ...]
    symmetry_maps: tuple[SurfaceSymmetry, ...] = ()
    ambient_dim: int = 3
    name: str = "surface"

    def jacobian(self, u: Point, h: float = 1e-6) -> np.ndarray:
        u = np.asarray(u, float)
        k = u.size
        J = np.empty((self.ambient_dim, k))
        for i in range(k):
            e = np.zeros(k)
            e[i] = h
            J[:, i] = (np.asarray(self.immersion(u + e), float)
                       - np.asarray(self.immersion(u - e), float)) / (2.0 * h)
        return J

    def first_fundamental_form(self, u: Point, h: float = 1e-6) -> np.ndarray:
        J = self.jacobian(u, h)
        return J.T @ J


def surface_chart(surface: EmbeddedSurface, patch: int = 0,
                  singular_set: Optional[SingularSet] = None) -> ChartMetric:
    """ChartMetric induced by the first fundamental form of a patch."""
    dom = surface.patch_atlas[patch]
    return ChartMetric(
        dim=dom.dim,
        metric_eval=lambda u: surface.first_fundamental_form(u),
        domain=dom,
        singular_set=singular_set,
        name=f"{surface.name}[{patch}]",
    )


def symmetry_pullback_residual(surface: EmbeddedSurface, sym: SurfaceSymmetry,
                               u: Point) -> float:
    """|sigma^* g - g| at u, where sigma is the symmetry in parameters."""
    u = np.asarray(u, float)
    g = surface.first_fundamental_form(u)
    h = 1e-6
    k = u.size
    Js = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = h
        Js[:, i] = (np.asarray(sym.param_map(u + e), float)
                    - np.asarray(sym.param_map(u - e), float)) / (2.0 * h)
    g_at = surface.first_fundamental_form(np.asarray(sym.param_map(u), float))
    return float(np.max(np.abs(Js.T @ g_at @ Js - g)))
