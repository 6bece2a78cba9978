"""Pointwise laws: the cubic inverse F, the density G and the convexity margin.

``F`` is defined through ``v = F(t**2) * t`` where ``v`` is the root in
``[0, 1/sqrt(3)]`` of ``(1 - v**2) * v = t``.  The domain ends at
``t = sqrt(4/27)`` where the cubic has a double root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discrete_calculus import Placement, ScalarField, VectorField
from .errors import GridMismatch, InvalidSpec, OutOfDomain

INFINITY = math.inf
T_MAX = math.sqrt(4.0 / 27.0)
V_MAX = 1.0 / math.sqrt(3.0)
S_MAX = 4.0 / 27.0
CLAMP = 1e-12

# Taylor coefficients of F(s) = sum binom(3k, k) / (2k + 1) s^k
_F_SERIES = np.array([math.comb(3 * k, k) / (2 * k + 1) for k in range(12)])
_SERIES_CUT = 1e-4


@dataclass(frozen=True)
class GLParameters:
    """Penetration length, Ginzburg-Landau parameter and field scale."""

    lambda_: float
    kappa: float = INFINITY
    mu: float = 1.0

    def __post_init__(self):
        if not (self.lambda_ > 0 and math.isfinite(self.lambda_)):
            raise InvalidSpec("lambda must be positive", field="lambda")
        if not self.kappa > 0:
            raise InvalidSpec("kappa must be positive or INFINITY", field="kappa")
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise InvalidSpec("mu must be nonnegative", field="mu")

    @property
    def is_limit(self) -> bool:
        return math.isinf(self.kappa)

    def require_estimate_regime(self) -> None:
        """Rate estimates in the large-kappa theory need kappa >= max(1, lambda)."""
        if self.kappa < max(1.0, self.lambda_):
            raise InvalidSpec("kappa must be at least max(1, lambda)", field="kappa")

    def with_mu(self, mu: float) -> "GLParameters":
        return GLParameters(self.lambda_, self.kappa, mu)

    def with_kappa(self, kappa: float) -> "GLParameters":
        return GLParameters(self.lambda_, kappa, self.mu)


@dataclass(frozen=True)
class ConstitutivePoint:
    t: float
    v: float
    f_value: float


@dataclass(frozen=True)
class ConvexityMargin:
    margin: float
    delta: float
    positive: bool = True

    @property
    def in_K(self) -> bool:
        return self.positive and self.margin > 0

    @property
    def in_K_closure(self) -> bool:
        return self.positive and self.margin >= 0

    @property
    def in_K_delta(self) -> bool:
        return self.positive and self.margin > self.delta


@dataclass(frozen=True)
class EnergyBreakdown:
    gradient_term: float
    g_term: float
    field_term: float

    @property
    def total(self) -> float:
        return self.gradient_term + self.g_term + self.field_term


def _check_t(t: np.ndarray) -> np.ndarray:
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > T_MAX + CLAMP):
        bad = t[(~np.isfinite(t)) | (t < 0) | (t > T_MAX + CLAMP)]
        raise OutOfDomain("cubic inverse requested outside [0, sqrt(4/27)]", value=float(bad.flat[0]))
    return np.minimum(t, T_MAX)


# within a few ulps of the double root the inverse is ill conditioned
# (dv/dt is infinite there), so such arguments snap to the endpoint
_SNAP = 8 * np.finfo(float).eps * T_MAX


def invert_cubic(t):
    """Root ``v`` in ``[0, 1/sqrt(3)]`` of ``(1 - v**2) v = t``.

    Safeguarded Newton on the bracket ``[0, 1/sqrt(3)]``: whenever a Newton
    step leaves the current bracket the midpoint is taken instead.  Accepts
    scalars or arrays.
    """
    scalar = np.ndim(t) == 0
    t = _check_t(np.atleast_1d(np.asarray(t, dtype=float)))
    lo = np.zeros_like(t)
    hi = np.full_like(t, V_MAX)
    v = np.minimum(t * (1.0 + t * t), V_MAX)
    for _ in range(100):
        g = v - v ** 3 - t
        lo = np.where(g < 0, v, lo)
        hi = np.where(g > 0, v, hi)
        done = np.abs(g) <= 1e-16
        if np.all(done | (hi - lo <= 4e-16)):
            break
        dg = 1.0 - 3.0 * v * v
        with np.errstate(divide="ignore", invalid="ignore"):
            step = v - g / dg
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        v = np.where(done, v, np.where(bad, 0.5 * (lo + hi), step))
    v = np.where(t >= T_MAX - _SNAP, V_MAX, v)
    return float(v[0]) if scalar else v


def F_of(s):
    """F(s) = invert_cubic(sqrt(s)) / sqrt(s), with F(0) = 1."""
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0) or np.any(~np.isfinite(s)):
        raise OutOfDomain("F needs a nonnegative argument")
    t = _check_t(np.sqrt(s))
    out = np.empty_like(s)
    small = s < _SERIES_CUT
    out[small] = np.polynomial.polynomial.polyval(s[small], _F_SERIES)
    big = ~small
    if np.any(big):
        out[big] = invert_cubic(t[big]) / t[big]
    return float(out[0]) if scalar else out


def F_and_derivative(s):
    """Return ``F(s)`` and ``F'(s)`` (infinite at the endpoint)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    F = F_of(s)
    dF = np.empty_like(s)
    small = s < _SERIES_CUT
    dF[small] = np.polynomial.polynomial.polyval(s[small], np.polynomial.polynomial.polyder(_F_SERIES))
    big = ~small
    if np.any(big):
        t = np.sqrt(np.minimum(s[big], S_MAX))
        v = F[big] * t
        den = 1.0 - 3.0 * v * v
        with np.errstate(divide="ignore"):
            # den <= 0 only at the snapped endpoint, where F' is infinite
            dF[big] = np.where(den > 0, (t / np.where(den > 0, den, 1.0) - v) / (2.0 * t ** 3), np.inf)
    return F, dF


def constitutive_point(t: float) -> ConstitutivePoint:
    v = invert_cubic(t)
    return ConstitutivePoint(float(min(t, T_MAX)), v, 1.0 if t == 0 else v / min(t, T_MAX))


def g_density_and_grad(f, A):
    """Density ``|fA|^2 + (1 - f^2)^2 / 2`` and its partial derivatives."""
    f = np.asarray(f, dtype=float)
    A = np.asarray(A, dtype=float)
    a2 = np.sum(A * A, axis=-1)
    G = f * f * a2 + 0.5 * (1.0 - f * f) ** 2
    Gf = 2.0 * (f * f + a2 - 1.0) * f
    GA = 2.0 * (f * f)[..., None] * A if A.ndim > 1 else 2.0 * f * f * A
    return G, Gf, GA


def second_variation_form(f, A, g, B):
    """Quadratic form of the Hessian of G at (f, A) along (g, B)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    w = f[..., None] * B + 2.0 * g[..., None] * A if A.ndim > 1 else f * B + 2.0 * g * A
    return 2.0 * np.sum(w * w, axis=-1) + 6.0 * g * g * (f * f - np.sum(A * A, axis=-1) - 1.0 / 3.0)


def pointwise_margin(f, A):
    f = np.asarray(f, dtype=float)
    A = np.asarray(A, dtype=float)
    return f * f - np.sum(A * A, axis=-1) - 1.0 / 3.0


def node_A_squared(A: VectorField) -> np.ndarray:
    """|A|^2 at the nodes from a FACE field (second order, walls extrapolated)."""
    if A.placement is not Placement.FACE:
        raise GridMismatch("A must live on faces")
    return A.grid.face_to_node @ (A.flat() ** 2)


def convexity_margin(state, delta: float = 0.0) -> ConvexityMargin:
    """Minimum over nodes of ``f^2 - |A|^2 - 1/3``.

    ``state`` is anything exposing ``f`` (NODE scalar) and ``A`` (FACE
    vector), e.g. :class:`~meissner_lab.interior_solver.MeissnerStateFA`.
    """
    f = state.f.flat()
    m = float(np.min(f * f - node_A_squared(state.A) - 1.0 / 3.0))
    return ConvexityMargin(m, float(delta), bool(np.all(f > 0)))


def omega_energy(f: ScalarField, A: VectorField, B_ext: VectorField, params: GLParameters) -> EnergyBreakdown:
    """Discrete energy of a state (f, A) relative to the extension ``B_ext``.

    The gradient term lives on edges, ``f^2 |A|^2`` on faces with the face
    average of ``f^2``, ``(1 - f^2)^2 / 2`` on nodes, and the field term on
    interior edges using the dual curl of ``A``.  The discrete equations of
    the interior solver are the stationarity conditions of this sum (up to
    the wall-node sampling of ``|A|^2``).
    """
    g = f.grid
    if A.grid != g or B_ext.grid != g:
        raise GridMismatch("energy fields live on different grids")
    if f.placement is not Placement.NODE or A.placement is not Placement.FACE or B_ext.placement is not Placement.EDGE:
        raise GridMismatch("energy expects f on NODE, A on FACE and the extension on EDGE")
    fv = f.flat()
    lam = params.lambda_
    grad_term = 0.0
    if not params.is_limit:
        gf = g.grad_op @ fv
        grad_term = (lam / params.kappa) ** 2 * float(np.sum(g.edge_mass * gf * gf))
    f2_face = g.node_to_face @ (fv * fv)
    a = A.flat()
    g_term = float(np.sum(g.face_mass * f2_face * a * a)) + 0.5 * float(np.sum(g.node_mass * (1.0 - fv * fv) ** 2))
    curl_a = (g.curl_op.T @ (g.face_mass * a)) / g.edge_mass
    r = lam * curl_a - B_ext.flat()
    inside = g.interior_edges
    field_term = float(np.sum(g.edge_mass[inside] * r[inside] ** 2))
    return EnergyBreakdown(grad_term, g_term, field_term)
