"""Weyl connections from Lee forms and the analytic tameness functional.

A Weyl structure is stored as a reference metric g together with the Lee
form theta of the connection with respect to g.  The connection
coefficients are the Levi-Civita coefficients of g plus the correction

    theta(X) Y + theta(Y) X - g(X, Y) theta^sharp.

The sign of the last term is fixed so that the parallel-metric identity
D_X g = -2 theta(X) g holds numerically (see ``check_parallel_metric``);
a flipped-sign variant is exposed for the consistency probe.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import ArgumentError
from .manifold import (
    FD_STEP,
    ChartMetric,
    christoffel,
    metric_at,
)

Point = np.ndarray


@dataclass(frozen=True)
class WeylStructure:
    """A reference metric g in the conformal class plus a Lee form theta."""

    reference: ChartMetric
    lee_form: Callable[[Point], np.ndarray]
    closed_flag: bool = True
    exact_potential: Optional[Callable[[Point], float]] = None
    complete_reference: bool = False
    theta_sign: float = -1.0
    delta: Optional[Callable[[Point], float]] = None
    name: str = "weyl"

    @property
    def dim(self) -> int:
        return self.reference.dim

    def theta(self, x: Point) -> np.ndarray:
        return np.asarray(self.lee_form(np.asarray(x, float)), float)

    def potential(self, x: Point) -> float:
        if self.exact_potential is None:
            raise ArgumentError(f"structure '{self.name}' has no exact potential")
        return float(self.exact_potential(np.asarray(x, float)))

    def with_flipped_sign(self) -> "WeylStructure":
        """Variant with the wrong theta^sharp sign, for consistency probes."""
        return replace(self, theta_sign=-self.theta_sign, name=self.name + "(flipped)")


def exact_structure(chart: ChartMetric, name: str | None = None,
                    complete: bool = False) -> WeylStructure:
    """The exact Weyl structure theta = 0 (the Levi-Civita connection)."""
    d = chart.dim
    zero = np.zeros(d)
    return WeylStructure(
        reference=chart,
        lee_form=lambda x: zero,
        closed_flag=True,
        exact_potential=lambda x: 1.0,
        complete_reference=complete,
        name=name or f"exact({chart.name})",
    )


def weyl_christoffel(w: WeylStructure, x: Point) -> np.ndarray:
    """Connection coefficients of D in the reference chart; torsion-free."""
    x = np.asarray(x, float)
    gamma = christoffel(w.reference, x).copy()
    th = w.theta(x)
    g = metric_at(w.reference, x)
    th_sharp = np.linalg.solve(g, th)
    d = w.dim
    eye = np.eye(d)
    gamma += np.einsum("ki,j->kij", eye, th)
    gamma += np.einsum("kj,i->kij", eye, th)
    gamma += w.theta_sign * np.einsum("ij,k->kij", g, th_sharp)
    return gamma


def torsion_residual(w: WeylStructure, x: Point) -> float:
    """Max antisymmetric part of the coefficients in the lower indices."""
    gamma = weyl_christoffel(w, x)
    return float(np.max(np.abs(gamma - np.swapaxes(gamma, 1, 2))))


def _fd_covector_derivative(w: WeylStructure, x: Point) -> np.ndarray:
    """dth[i, j] = d theta_j / d x^i by central differences."""
    d = w.dim
    h = FD_STEP * w.reference.scale(x)
    dth = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        dth[i] = (w.theta(x + e) - w.theta(x - e)) / (2.0 * h)
    return dth


def nabla_theta(w: WeylStructure, x: Point) -> np.ndarray:
    """(nabla theta)[i, j] = nabla_i theta_j for the Levi-Civita connection of g."""
    dth = _fd_covector_derivative(w, x)
    gamma = christoffel(w.reference, x)
    return dth - np.einsum("kij,k->ij", gamma, w.theta(x))


def weyl_covariant_theta(w: WeylStructure, x: Point) -> np.ndarray:
    """(D theta)[i, j] = D_i theta_j with the Weyl coefficients."""
    dth = _fd_covector_derivative(w, x)
    gamma = weyl_christoffel(w, x)
    return dth - np.einsum("kij,k->ij", gamma, w.theta(x))


def closedness_residual(w: WeylStructure, x: Point) -> float:
    """|d theta| at x; should vanish for closed structures."""
    dth = _fd_covector_derivative(w, x)
    return float(np.max(np.abs(dth - dth.T)))


def potential_residual(w: WeylStructure, x: Point) -> float:
    """|d log phi - theta| at x when an exact potential is declared."""
    if w.exact_potential is None:
        raise ArgumentError("no exact potential declared")
    d = w.dim
    h = FD_STEP * w.reference.scale(x)
    grad = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        grad[i] = (np.log(w.potential(x + e)) - np.log(w.potential(x - e))) / (2.0 * h)
    return float(np.max(np.abs(grad - w.theta(x))))


def check_parallel_metric(w: WeylStructure, x: Point) -> float:
    """max_X | D_X g + 2 theta(X) g | over coordinate directions X.

    A near-zero value certifies the sign convention of the theta^sharp term
    together with the closed-structure identity.
    """
    x = np.asarray(x, float)
    d = w.dim
    h = FD_STEP * w.reference.scale(x)
    gamma = weyl_christoffel(w, x)
    th = w.theta(x)
    g = metric_at(w.reference, x)
    res = 0.0
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        dg_i = (metric_at(w.reference, x + e) - metric_at(w.reference, x - e)) / (2 * h)
        Dg_i = dg_i - gamma[:, i, :].T @ g - g @ gamma[:, i, :]
        res = max(res, float(np.max(np.abs(Dg_i + 2.0 * th[i] * g))))
    return res


# ---------------------------------------------------------------------------
# analytic tameness


@dataclass(frozen=True)
class SphereBundleSample:
    """Sampling spec for the unit sphere bundle over a coordinate box."""

    lower: tuple
    upper: tuple
    n_points: int = 100
    n_directions: int = 32
    seed: int = 0


@dataclass(frozen=True)
class AnalyticTameReport:
    epsilon_best: float
    min_margin: float
    violating_point: Optional[tuple] = None
    min_point: Optional[tuple] = None
    min_direction: Optional[tuple] = None
    n_points: int = 0
    n_directions: int = 0

    def to_dict(self) -> dict:
        return {
            "epsilon_best": self.epsilon_best,
            "min_margin": self.min_margin,
            "violating_point": self.violating_point,
            "min_point": self.min_point,
            "min_direction": self.min_direction,
            "n_points": self.n_points,
            "n_directions": self.n_directions,
        }


def _unit_directions(g: np.ndarray, n: int, rng) -> np.ndarray:
    """n directions of g-length 1, as rows; deterministic for dim 2."""
    d = g.shape[0]
    L = np.linalg.cholesky(g)
    if d == 2:
        ang = 2.0 * np.pi * np.arange(n) / n
        u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    # solve L^T X = u so that X^T g X = u^T u = 1
    return np.linalg.solve(L.T, u.T).T


def tame_functional(w: WeylStructure, x: Point, X: np.ndarray) -> float:
    """|theta|^2 g(X, X) + (nabla_X theta)(X) at the point x."""
    g = metric_at(w.reference, x)
    th = w.theta(x)
    th_norm2 = float(th @ np.linalg.solve(g, th))
    A = nabla_theta(w, x)
    return th_norm2 * float(X @ g @ X) + float(X @ A @ X)


def analytic_tame_check(w: WeylStructure, sample: SphereBundleSample) -> AnalyticTameReport:
    """Scan the functional of the analytic tameness inequality.

    epsilon_best is half the minimum over the sampled g-unit sphere bundle of
    |theta|^2 + (nabla_X theta)(X); the structure passes when it is positive.
    The estimate from a finite sample is an upper bound for the true infimum.
    """
    if not w.complete_reference:
        raise ArgumentError(
            "the reference metric must be declared complete by the caller"
        )
    if sample.n_points <= 0 or sample.n_directions <= 0:
        raise ArgumentError("empty sphere-bundle sample")
    rng = np.random.default_rng(sample.seed)
    lo = np.asarray(sample.lower, float)
    hi = np.asarray(sample.upper, float)
    best = np.inf
    best_x = best_X = None
    for _ in range(sample.n_points):
        x = lo + (hi - lo) * rng.random(lo.size)
        g = metric_at(w.reference, x)
        th = w.theta(x)
        th_norm2 = float(th @ np.linalg.solve(g, th))
        A = 0.5 * (nabla_theta(w, x) + nabla_theta(w, x).T)
        dirs = _unit_directions(g, sample.n_directions, rng)
        margins = th_norm2 + np.einsum("ni,ij,nj->n", dirs, A, dirs)
        k = int(np.argmin(margins))
        if margins[k] < best:
            best = float(margins[k])
            best_x, best_X = x.copy(), dirs[k].copy()
    report = AnalyticTameReport(
        epsilon_best=0.5 * best,
        min_margin=best,
        violating_point=(tuple(best_x), tuple(best_X)) if best <= 0 else None,
        min_point=tuple(best_x),
        min_direction=tuple(best_X),
        n_points=sample.n_points,
        n_directions=sample.n_directions,
    )
    return report


def tame2_check(w: WeylStructure, x: Point, X: np.ndarray) -> float:
    """Residual between the two equivalent tameness margins at (x, X).

    One margin uses the Levi-Civita derivative of theta, the other the Weyl
    derivative; the identity
    (D_X theta)(X) + 2 theta(X)^2 = |theta|^2 g(X,X) + (nabla_X theta)(X)
    makes them agree up to finite-difference noise.
    """
    x = np.asarray(x, float)
    X = np.asarray(X, float)
    g = metric_at(w.reference, x)
    th = w.theta(x)
    margin_nabla = tame_functional(w, x, X)
    D = weyl_covariant_theta(w, x)
    margin_weyl = float(X @ D @ X) + 2.0 * float(th @ X) ** 2
    return abs(margin_nabla - margin_weyl)


def conformal_change(w: WeylStructure, factor: Callable[[Point], float],
                     name: str | None = None) -> WeylStructure:
    """Same Weyl connection expressed against g' = e^{2f} g.

    The Lee form transforms as theta' = theta - df; this is the
    transformation rule asserted by the conformal-meaning invariant.
    """
    chart = w.reference

    def metric(x):
        return np.exp(2.0 * factor(x)) * np.asarray(chart.metric_eval(x), float)

    new_chart = ChartMetric(
        dim=chart.dim,
        metric_eval=metric,
        domain=chart.domain,
        christoffel_eval=None,
        singular_set=chart.singular_set,
        scale_eval=chart.scale_eval,
        name=chart.name + "'",
    )

    def lee(x):
        d = chart.dim
        h = FD_STEP * chart.scale(x)
        grad = np.empty(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            grad[i] = (factor(x + e) - factor(x - e)) / (2.0 * h)
        return w.theta(x) - grad

    pot = None
    if w.exact_potential is not None:
        # g0 = phi^2 g = (phi e^{-f})^2 g'
        pot = lambda x: w.potential(x) * np.exp(-factor(x))

    return WeylStructure(
        reference=new_chart,
        lee_form=lee,
        closed_flag=w.closed_flag,
        exact_potential=pot,
        complete_reference=False,
        theta_sign=w.theta_sign,
        delta=w.delta,
        name=name or w.name + "-conformal",
    )
