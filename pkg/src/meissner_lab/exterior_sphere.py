"""Exterior problems outside a sphere of radius R, solved mode by mode.

Fields are expanded in real spherical harmonics ``Y_lm``.  Tangential data on
the sphere uses the bases ``GRAD_S`` (``grad_S Y_lm``) and ``CROSS``
(``rhat x grad_S Y_lm``), both on the unit sphere.  Harmonics are built as
explicit solid-harmonic polynomials ``S_lm(x) = r^l Y_lm(x/r)``, so every
field can be evaluated (and differentiated by complex step) at arbitrary
Cartesian points.

Decaying harmonic modes are ``r^{-(l+1)} Y_lm = r^{-(2l+1)} S_lm``, and the
toroidal field ``r^{-(l+1)} rhat x grad_S Y_lm`` has curl
``l grad(r^{-(l+1)} Y_lm)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from .discrete_calculus import fmt
from .errors import (
    Incompatible,
    InvalidSpec,
    NonGradientData,
    NonzeroFlux,
    NonzeroMean,
    SamplingMismatch,
)

BASES = ("Y", "GRAD_S", "CROSS")
DEFAULT_LMAX = 16


def lm_index(l: int, m: int) -> int:
    return l * l + l + m


def lm_pairs(l_max: int):
    return [(l, m) for l in range(l_max + 1) for m in range(-l, l + 1)]


# ---------------------------------------------------------------------------
# solid harmonic polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Poly3:
    """Polynomial in (x, y, z) stored as exponent rows and coefficients."""

    exps: np.ndarray
    coefs: np.ndarray

    @classmethod
    def from_dict(cls, d: dict) -> "Poly3":
        items = sorted((k, v) for k, v in d.items() if v != 0)
        if not items:
            return cls(np.zeros((0, 3), dtype=int), np.zeros(0))
        return cls(np.array([k for k, _ in items], dtype=int), np.array([v for _, v in items]))

    def __call__(self, x, y, z):
        x, y, z = np.asarray(x), np.asarray(y), np.asarray(z)
        out = np.zeros(np.broadcast(x, y, z).shape, dtype=np.result_type(x, y, z, float))
        for (a, b, c), k in zip(self.exps, self.coefs):
            out = out + k * x ** a * y ** b * z ** c
        return out

    def deriv(self, axis: int) -> "Poly3":
        d = {}
        for e, k in zip(self.exps, self.coefs):
            if e[axis] > 0:
                ne = list(e)
                ne[axis] -= 1
                d[tuple(ne)] = d.get(tuple(ne), 0.0) + k * e[axis]
        return Poly3.from_dict(d)


def _mul(p: dict, q: dict) -> dict:
    out = {}
    for ea, ka in p.items():
        for eb, kb in q.items():
            e = (ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2])
            out[e] = out.get(e, 0.0) + ka * kb
    return out


def _r2_power(k: int) -> dict:
    out = {(0, 0, 0): 1.0}
    r2 = {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0}
    for _ in range(k):
        out = _mul(out, r2)
    return out


@lru_cache(maxsize=None)
def solid_harmonic(l: int, m: int) -> Poly3:
    """Real orthonormal solid harmonic ``r^l Y_lm`` (no Condon-Shortley phase).

    ``m > 0`` carries ``cos(m phi)``, ``m < 0`` carries ``sin(|m| phi)``.
    """
    am = abs(m)
    if am > l:
        raise InvalidSpec("need |m| <= l")
    leg = npleg.leg2poly([0] * l + [1])
    q = nppoly.polyder(leg, am) if am else leg
    zpart = {}
    for j, qj in enumerate(q):
        if qj == 0 or (l - am - j) % 2:
            continue
        term = _mul({(0, 0, j): float(qj)}, _r2_power((l - am - j) // 2))
        for e, v in term.items():
            zpart[e] = zpart.get(e, 0.0) + v
    # (x + i y)^m split into real and imaginary parts
    re, im = {}, {}
    for k in range(am + 1):
        c = float(math.comb(am, k))
        e = (am - k, k, 0)
        if k % 2 == 0:
            re[e] = c * (-1) ** (k // 2)
        else:
            im[e] = c * (-1) ** ((k - 1) // 2)
    norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - am) / math.factorial(l + am))
    if am:
        norm *= math.sqrt(2.0)
    angular = re if m >= 0 else im
    full = _mul(zpart, angular)
    return Poly3.from_dict({e: norm * v for e, v in full.items()})


@lru_cache(maxsize=None)
def _grad_poly(l: int, m: int):
    S = solid_harmonic(l, m)
    return tuple(S.deriv(a) for a in range(3))


def harmonic_values(l: int, m: int, n: np.ndarray):
    """``Y``, ``grad_S Y`` and ``rhat x grad_S Y`` at unit vectors ``n`` (..., 3)."""
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    Y = solid_harmonic(l, m)(x, y, z)
    g = np.stack([p(x, y, z) for p in _grad_poly(l, m)], axis=-1)
    gs = g - l * Y[..., None] * n
    return Y, gs, np.cross(n, gs)


# ---------------------------------------------------------------------------
# quadrature and transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Gauss-Legendre in cos(theta) times uniform longitude; exact to degree 2 l_max."""

    l_max: int
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, l_max: int = DEFAULT_LMAX) -> "SphereQuadrature":
        nt = l_max + 1
        nphi = 2 * l_max + 2
        t, wt = npleg.leggauss(nt)
        phi = 2 * math.pi * np.arange(nphi) / nphi
        T, P = np.meshgrid(t, phi, indexing="ij")
        s = np.sqrt(1 - T * T)
        pts = np.stack([s * np.cos(P), s * np.sin(P), T], axis=-1).reshape(-1, 3)
        w = np.repeat(wt, nphi) * (2 * math.pi / nphi)
        return cls(l_max, pts, w)


@lru_cache(maxsize=8)
def quadrature(l_max: int = DEFAULT_LMAX) -> SphereQuadrature:
    return SphereQuadrature.build(l_max)


@lru_cache(maxsize=8)
def _basis_tables(l_max: int):
    q = quadrature(l_max)
    n = (l_max + 1) ** 2
    Y = np.zeros((n, q.points.shape[0]))
    G = np.zeros((n, q.points.shape[0], 3))
    X = np.zeros_like(G)
    for l, m in lm_pairs(l_max):
        i = lm_index(l, m)
        Y[i], G[i], X[i] = harmonic_values(l, m, q.points)
    return Y, G, X


@dataclass(frozen=True, eq=False)
class SphericalHarmonicCoeffs:
    """Coefficients per (l, m) for the Y, GRAD_S and CROSS bases."""

    l_max: int
    Y: np.ndarray
    GRAD_S: np.ndarray
    CROSS: np.ndarray
    sphere_radius: float = 1.0

    def __post_init__(self):
        n = (self.l_max + 1) ** 2
        for name in BASES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise InvalidSpec(f"{name} needs {n} coefficients")
            if name != "Y" and arr[0] != 0:
                raise InvalidSpec(f"{name} has no l=0 mode")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.sphere_radius > 0:
            raise InvalidSpec("sphere radius must be positive")

    @classmethod
    def zeros(cls, l_max: int = DEFAULT_LMAX, R: float = 1.0) -> "SphericalHarmonicCoeffs":
        n = (l_max + 1) ** 2
        return cls(l_max, np.zeros(n), np.zeros(n), np.zeros(n), R)

    @classmethod
    def single(cls, basis: str, l: int, m: int, value: float = 1.0, l_max: int = DEFAULT_LMAX,
               R: float = 1.0) -> "SphericalHarmonicCoeffs":
        if basis not in BASES:
            raise InvalidSpec(f"unknown basis {basis!r}")
        arrs = {b: np.zeros((l_max + 1) ** 2) for b in BASES}
        arrs[basis][lm_index(l, m)] = value
        return cls(l_max, arrs["Y"], arrs["GRAD_S"], arrs["CROSS"], R)

    def replace(self, **kw) -> "SphericalHarmonicCoeffs":
        d = {"l_max": self.l_max, "Y": self.Y, "GRAD_S": self.GRAD_S, "CROSS": self.CROSS,
             "sphere_radius": self.sphere_radius}
        d.update(kw)
        return SphericalHarmonicCoeffs(**d)

    def get(self, basis: str, l: int, m: int) -> float:
        return float(getattr(self, basis)[lm_index(l, m)])

    def scalar_on_sphere(self, n: np.ndarray) -> np.ndarray:
        out = np.zeros(n.shape[:-1])
        for l, m in lm_pairs(self.l_max):
            c = self.Y[lm_index(l, m)]
            if c:
                out += c * harmonic_values(l, m, n)[0]
        return out

    def tangential_on_sphere(self, n: np.ndarray) -> np.ndarray:
        out = np.zeros(n.shape)
        for l, m in lm_pairs(self.l_max):
            i = lm_index(l, m)
            if self.GRAD_S[i] or self.CROSS[i]:
                _, gs, xs = harmonic_values(l, m, n)
                out += self.GRAD_S[i] * gs + self.CROSS[i] * xs
        return out

    def to_csv(self, comments=()) -> str:
        lines = [f"# {c}" for c in comments]
        lines.append("l,m,basis,value")
        for basis in BASES:
            arr = getattr(self, basis)
            for l, m in lm_pairs(self.l_max):
                v = arr[lm_index(l, m)]
                if v != 0:
                    lines.append(f"{l},{m},{basis},{fmt(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, l_max: int = DEFAULT_LMAX, R: float = 1.0) -> "SphericalHarmonicCoeffs":
        arrs = {b: np.zeros((l_max + 1) ** 2) for b in BASES}
        rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        if not rows or rows[0].strip() != "l,m,basis,value":
            raise InvalidSpec("coefficient CSV needs the header l,m,basis,value")
        for ln in rows[1:]:
            l, m, basis, v = ln.split(",")
            arrs[basis][lm_index(int(l), int(m))] = float(v)
        return cls(l_max, arrs["Y"], arrs["GRAD_S"], arrs["CROSS"], R)


def scalar_transform(values: np.ndarray, l_max: int = DEFAULT_LMAX, R: float = 1.0) -> SphericalHarmonicCoeffs:
    """Y coefficients of samples on :func:`quadrature` points."""
    q = quadrature(l_max)
    Y, _, _ = _basis_tables(l_max)
    c = Y @ (q.weights * values)
    z = np.zeros_like(c)
    return SphericalHarmonicCoeffs(l_max, c, z, z.copy(), R)


def tangential_transform(vectors: np.ndarray, l_max: int = DEFAULT_LMAX, R: float = 1.0) -> SphericalHarmonicCoeffs:
    """GRAD_S and CROSS coefficients of tangential samples (``|grad_S Y_l|^2`` integrates to l(l+1))."""
    q = quadrature(l_max)
    _, G, X = _basis_tables(l_max)
    ll = np.array([l * (l + 1) for l, _ in lm_pairs(l_max)], dtype=float)
    ll[0] = 1.0
    g = np.einsum("kpd,pd,p->k", G, vectors, q.weights) / ll
    x = np.einsum("kpd,pd,p->k", X, vectors, q.weights) / ll
    g[0] = x[0] = 0.0
    return SphericalHarmonicCoeffs(l_max, np.zeros_like(g), g, x, R)


# ---------------------------------------------------------------------------
# exterior solutions
# ---------------------------------------------------------------------------

def _degrees(l_max: int) -> np.ndarray:
    return np.array([l for l, _ in lm_pairs(l_max)], dtype=float)


@dataclass(frozen=True, eq=False)
class ExteriorScalarSolution:
    """phi = sum c_lm r^{-(l+1)} Y_lm outside radius R."""

    coeffs: SphericalHarmonicCoeffs
    flux: float

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return evaluate_scalar(self.coeffs.Y, self.coeffs.l_max, pts)

    def gradient(self, pts: np.ndarray) -> np.ndarray:
        return evaluate_gradient(self.coeffs.Y, self.coeffs.l_max, pts)

    def radial_derivative_coeffs(self, r: float) -> np.ndarray:
        l = _degrees(self.coeffs.l_max)
        return -(l + 1) * self.coeffs.Y * r ** (-(l + 2))


def evaluate_scalar(c: np.ndarray, l_max: int, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    out = np.zeros(r.shape, dtype=r.dtype)
    for l, m in lm_pairs(l_max):
        k = c[lm_index(l, m)]
        if k:
            out = out + k * solid_harmonic(l, m)(x, y, z) * r ** (-(2 * l + 1))
    return out


def evaluate_gradient(c: np.ndarray, l_max: int, pts: np.ndarray) -> np.ndarray:
    """Analytic gradient of sum c r^{-(2l+1)} S_lm."""
    pts = np.asarray(pts)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    out = np.zeros(pts.shape, dtype=pts.dtype)
    for l, m in lm_pairs(l_max):
        k = c[lm_index(l, m)]
        if not k:
            continue
        S = solid_harmonic(l, m)(x, y, z)
        g = np.stack([p(x, y, z) for p in _grad_poly(l, m)], axis=-1)
        out = out + k * (r[..., None] ** (-(2 * l + 1)) * g
                         - (2 * l + 1) * (r ** (-(2 * l + 3)) * S)[..., None] * pts)
    return out


def evaluate_toroidal(c: np.ndarray, l_max: int, pts: np.ndarray) -> np.ndarray:
    """sum c r^{-(l+1)} rhat x grad_S Y_lm = sum c r^{-(2l+1)} x cross grad S_lm."""
    pts = np.asarray(pts)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    out = np.zeros(pts.shape, dtype=pts.dtype)
    for l, m in lm_pairs(l_max):
        k = c[lm_index(l, m)]
        if not k:
            continue
        g = np.stack([p(x, y, z) for p in _grad_poly(l, m)], axis=-1)
        out = out + k * r[..., None] ** (-(2 * l + 1)) * np.cross(pts, g)
    return out


@dataclass(frozen=True, eq=False)
class ExteriorVectorSolution:
    """u = grad(psi) + toroidal part; both decay outside radius R."""

    gradient_part: SphericalHarmonicCoeffs
    toroidal_part: SphericalHarmonicCoeffs

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        lm = self.gradient_part.l_max
        return (evaluate_gradient(self.gradient_part.Y, lm, pts)
                + evaluate_toroidal(self.toroidal_part.CROSS, lm, pts))

    def trace_coeffs(self) -> SphericalHarmonicCoeffs:
        """Normal (Y) and tangential (GRAD_S, CROSS) coefficients on r = R."""
        R = self.gradient_part.sphere_radius
        l = _degrees(self.gradient_part.l_max)
        c = self.gradient_part.Y
        return SphericalHarmonicCoeffs(self.gradient_part.l_max,
                                       -(l + 1) * c * R ** (-(l + 2)),
                                       c * R ** (-(l + 2)),
                                       self.toroidal_part.CROSS * R ** (-(l + 1)), R)


def _require_gradient(v: SphericalHarmonicCoeffs, tol: float = 1e-12):
    if np.any(np.abs(v.CROSS) > tol * max(1.0, float(np.max(np.abs(v.GRAD_S), initial=0.0)))):
        raise NonGradientData("tangential data has a rotational (CROSS) part")


def solve_exterior_scalar(v: SphericalHarmonicCoeffs, flux_mu: float, R: float | None = None) -> ExteriorScalarSolution:
    """Decaying harmonic phi with (grad phi)_T = v on r = R and total flux mu."""
    _require_gradient(v)
    R = v.sphere_radius if R is None else R
    l = _degrees(v.l_max)
    c = v.GRAD_S * R ** (l + 2)
    c[0] = -flux_mu / math.sqrt(4 * math.pi)
    z = np.zeros_like(c)
    return ExteriorScalarSolution(SphericalHarmonicCoeffs(v.l_max, c, z, z.copy(), R), float(flux_mu))


def scalar_flux(sol: ExteriorScalarSolution, r: float) -> float:
    """Quadrature value of the integral of d(phi)/dr over the sphere of radius r."""
    q = quadrature(sol.coeffs.l_max)
    g = sol.gradient(r * q.points)
    dr = np.sum(g * q.points, axis=-1)
    return float(np.sum(q.weights * dr) * r * r)


def sigma_dtn(v: SphericalHarmonicCoeffs) -> SphericalHarmonicCoeffs:
    """Normal trace of the decaying curl-free, div-free field with tangential trace v."""
    _require_gradient(v)
    w = solve_exterior_scalar(v, 0.0)
    l = _degrees(v.l_max)
    R = v.sphere_radius
    normal = -(l + 1) * w.coeffs.Y * R ** (-(l + 2))
    normal[0] = 0.0
    z = np.zeros_like(normal)
    return SphericalHarmonicCoeffs(v.l_max, normal, z, z.copy(), R)


def sigma_dtn_sampled(v_samples: np.ndarray, l_max: int = DEFAULT_LMAX, R: float = 1.0) -> np.ndarray:
    """Sigma applied to tangential samples on the quadrature points, returned as samples."""
    v = tangential_transform(v_samples, l_max, R)
    s = sigma_dtn(v)
    Y, _, _ = _basis_tables(l_max)
    return s.Y @ Y


def solve_exterior_gradient_normal(g: SphericalHarmonicCoeffs, R: float | None = None,
                                   tol: float = 1e-12) -> ExteriorVectorSolution:
    """u = grad psi with d(psi)/dr = g on r = R and decay."""
    if abs(g.Y[0]) > tol * max(1.0, float(np.max(np.abs(g.Y)))):
        raise NonzeroMean("normal data has a nonzero mean")
    R = g.sphere_radius if R is None else R
    l = _degrees(g.l_max)
    c = -g.Y * R ** (l + 2) / (l + 1)
    c[0] = 0.0
    z = np.zeros_like(c)
    grad = SphericalHarmonicCoeffs(g.l_max, c, z, z.copy(), R)
    return ExteriorVectorSolution(grad, SphericalHarmonicCoeffs.zeros(g.l_max, R))


def toroidal_coefficients(phi0: ExteriorScalarSolution) -> np.ndarray:
    """CROSS radial coefficients d with curl(d r^{-(l+1)} rhat x grad_S Y) = grad(c r^{-(l+1)} Y)."""
    l = _degrees(phi0.coeffs.l_max)
    d = np.zeros_like(phi0.coeffs.Y)
    d[1:] = phi0.coeffs.Y[1:] / l[1:]
    return d


def solve_exterior_curl_source(phi0: ExteriorScalarSolution, v_data: SphericalHarmonicCoeffs,
                               R: float | None = None, tol: float = 1e-10) -> ExteriorVectorSolution:
    """Decaying u with curl u = grad phi0, div u = 0 and tangential trace v_data.

    The CROSS part of the trace is fixed by phi0; data disagreeing with it
    cannot be matched and raises :class:`Incompatible`.
    """
    if abs(phi0.flux) > tol or abs(phi0.coeffs.Y[0]) > tol:
        raise NonzeroFlux("curl source needs a zero-flux potential", flux=phi0.flux)
    R = v_data.sphere_radius if R is None else R
    l = _degrees(v_data.l_max)
    d = toroidal_coefficients(phi0)
    expected_cross = d * R ** (-(l + 1))
    mismatch = float(np.max(np.abs(expected_cross - v_data.CROSS)))
    if mismatch > tol * max(1.0, float(np.max(np.abs(expected_cross)))):
        raise Incompatible("rotational part of the data disagrees with the curl source", mismatch=mismatch)
    c = v_data.GRAD_S * R ** (l + 2)
    c[0] = 0.0
    z = np.zeros_like(c)
    grad = SphericalHarmonicCoeffs(v_data.l_max, c, z, z.copy(), R)
    tor = SphericalHarmonicCoeffs(v_data.l_max, z.copy(), z.copy(), d, R)
    return ExteriorVectorSolution(grad, tor)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def complex_step_jacobian(fn, pts: np.ndarray, h: float = 1e-30) -> np.ndarray:
    """Jacobian d fn_i / d x_j of a vector field, exact to round-off."""
    pts = np.asarray(pts, dtype=float)
    cols = []
    for j in range(3):
        e = np.zeros(3, dtype=complex)
        e[j] = 1j * h
        cols.append(np.imag(fn(pts + e)) / h)
    return np.stack(cols, axis=-1)


def curl_from_jacobian(J: np.ndarray) -> np.ndarray:
    return np.stack([J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]], axis=-1)


def shell_points(r: float, l_max: int = 8) -> np.ndarray:
    return r * quadrature(l_max).points


def curl_identity_defect(u: ExteriorVectorSolution, phi0: ExteriorScalarSolution, radii=(1.5, 2.0, 3.0)) -> float:
    """max |curl u - grad phi0| over sampling shells (complex-step curl)."""
    worst = 0.0
    for r in radii:
        pts = shell_points(r, min(u.gradient_part.l_max, 12))
        cu = curl_from_jacobian(complex_step_jacobian(u, pts))
        worst = max(worst, float(np.max(np.abs(cu - phi0.gradient(pts)))))
    return worst


def divergence_defect(u: ExteriorVectorSolution, radii=(1.5, 2.0, 3.0)) -> float:
    worst = 0.0
    for r in radii:
        pts = shell_points(r, min(u.gradient_part.l_max, 12))
        J = complex_step_jacobian(u, pts)
        worst = max(worst, float(np.max(np.abs(np.trace(J, axis1=-2, axis2=-1)))))
    return worst


def decay_slope(sol: ExteriorScalarSolution, radii=(2.0, 4.0, 8.0, 16.0)) -> float:
    """Log-log slope of max |phi| on shells."""
    vals = [float(np.max(np.abs(sol(shell_points(r, sol.coeffs.l_max))))) for r in radii]
    return float(np.polyfit(np.log(radii), np.log(vals), 1)[0])


def comparability_residual(interior_normal, exterior_normal, weights=None, positions=None,
                           exterior_positions=None) -> float:
    """Weighted L2 norm of the difference of two normal traces on common samples."""
    a = np.asarray(interior_normal, dtype=float)
    b = np.asarray(exterior_normal, dtype=float)
    if a.shape != b.shape:
        raise SamplingMismatch("traces have different sample counts", shapes=[a.shape, b.shape])
    if positions is not None and exterior_positions is not None:
        if np.shape(positions) != np.shape(exterior_positions) or not np.allclose(positions, exterior_positions):
            raise SamplingMismatch("traces sampled at different points")
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != a.shape:
        raise SamplingMismatch("weights do not match the samples")
    return float(np.sqrt(np.sum(w * (a - b) ** 2)))


def uniform_field_normal_trace(direction=(0.0, 0.0, 1.0), l_max: int = DEFAULT_LMAX):
    """Samples of nu . e on the quadrature sphere together with the weights."""
    q = quadrature(l_max)
    e = np.asarray(direction, dtype=float)
    return q.points @ e, q.weights, q.points
