"""Slab reduction of the Meissner problem, used as an independent oracle.

The field points along a fixed tangential direction and depends only on the
distance ``x`` to the wall.  With ``a`` the single component of the
potential the limit problem is

    lam^2 a'' = (1 - a^2) a,   lam a'(0) = -b,   a -> 0,

and ``f = sqrt(1 - a^2)``.  Multiplying by ``a'`` and using decay gives
``lam |a'| = a sqrt(1 - a^2 / 2)``, which integrates to

    a(x) = sqrt(2) sech(x / lam + x0),   sech(x0) = a0 / sqrt(2).

The finite-kappa problem couples ``-(lam/kappa)^2 f'' = (1 - f^2 - a^2) f``
with ``lam^2 a'' = f^2 a`` and is solved by centered differences and Newton.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .constitutive import INFINITY, V_MAX
from .errors import AboveThreshold, InvalidSpec, OutOfK, SolverFailure

H_SUPERHEATING = math.sqrt(5.0 / 18.0)
H_CRITICAL = 1.0 / math.sqrt(2.0)


def wall_field(a0):
    """Applied field carried by a wall amplitude ``a0`` on the decaying branch."""
    a0 = np.asarray(a0, dtype=float)
    return a0 * np.sqrt(1.0 - 0.5 * a0 * a0)


def superheating_closed_form() -> float:
    """Largest wall field with a0 in [0, 1/sqrt(3)]; the map is increasing there."""
    return float(wall_field(V_MAX))


def critical_field_identity() -> float:
    """H_S * 3 / sqrt(5), which equals the thermodynamic field 1/sqrt(2)."""
    return superheating_closed_form() * 3.0 / math.sqrt(5.0)


@dataclass(frozen=True)
class SlabProblem:
    lambda_: float
    b: float
    kappa: float = INFINITY
    L: float | None = None
    n: int = 2000

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise InvalidSpec("lambda must be positive")
        if not self.b >= 0:
            raise InvalidSpec("b must be nonnegative")
        if not self.kappa > 0:
            raise InvalidSpec("kappa must be positive")
        if self.L is None:
            object.__setattr__(self, "L", 15.0 * self.lambda_)
        if self.L < 15.0 * self.lambda_ * (1 - 1e-12):
            raise InvalidSpec("L must be at least 15 lambda")
        if self.n < 200:
            raise InvalidSpec("need at least 200 points")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n + 1)


@dataclass(frozen=True, eq=False)
class SlabSolution:
    problem: SlabProblem
    x: np.ndarray
    f: np.ndarray
    a: np.ndarray
    fp: np.ndarray
    ap: np.ndarray
    a0: float
    first_integral_residual: float
    residual: float = 0.0

    @property
    def margin_wall(self) -> float:
        return float(self.f[0] ** 2 - self.a[0] ** 2)

    @property
    def margin(self) -> float:
        return float(np.min(self.f ** 2 - self.a ** 2))

    def sample(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Cubic Hermite values of (f, a) at arbitrary points of [0, L]."""
        return _hermite(self.x, self.f, self.fp, x), _hermite(self.x, self.a, self.ap, x)

    def profile_csv(self) -> str:
        lines = ["x,f,a,fp,ap"]
        for row in zip(self.x, self.f, self.a, self.fp, self.ap):
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"b": self.problem.b, "a0": self.a0, "margin_wall": self.margin_wall,
                "first_integral_residual": self.first_integral_residual}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _hermite(xs, ys, ds, x):
    x = np.clip(np.asarray(x, dtype=float), xs[0], xs[-1])
    i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
    h = xs[i + 1] - xs[i]
    t = (x - xs[i]) / h
    h00 = (1 + 2 * t) * (1 - t) ** 2
    h10 = t * (1 - t) ** 2
    h01 = t * t * (3 - 2 * t)
    h11 = t * t * (t - 1)
    return h00 * ys[i] + h10 * h * ds[i] + h01 * ys[i + 1] + h11 * h * ds[i + 1]


def wall_amplitude(b: float) -> float:
    """Root a0 in [0, 1/sqrt(3)] of a0 sqrt(1 - a0^2/2) = b."""
    if b > H_SUPERHEATING + 1e-9:
        raise AboveThreshold("applied field exceeds sqrt(5/18)", b=b)
    if b <= 0:
        return 0.0
    if b >= H_SUPERHEATING:
        return V_MAX
    return brentq(lambda a: float(wall_field(a)) - b, 0.0, V_MAX, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def solve_limit_ode(problem: SlabProblem) -> SlabSolution:
    """Closed-form decaying profile for the limit slab problem."""
    if not math.isinf(problem.kappa):
        raise InvalidSpec("solve_limit_ode needs kappa = INFINITY")
    lam = problem.lambda_
    x = problem.x
    a0 = wall_amplitude(problem.b)
    if a0 == 0.0:
        z = np.zeros_like(x)
        return SlabSolution(problem, x, np.ones_like(x), z, z.copy(), z.copy(), 0.0, 0.0)
    x0 = math.acosh(math.sqrt(2.0) / a0)
    y = x / lam + x0
    a = math.sqrt(2.0) / np.cosh(y)
    ap = -a * np.tanh(y) / lam
    f = np.sqrt(1.0 - a * a)
    fp = -a * ap / f
    fi = lam ** 2 * ap ** 2 / 2 - (a ** 2 / 2 - a ** 4 / 4)
    return SlabSolution(problem, x, f, a, fp, ap, float(a0), float(np.max(np.abs(fi))))


def _full_residual(f, a, h, eps2, lam2, lam, b):
    n = f.size - 1
    fl = np.empty_like(f)
    al = np.empty_like(a)
    fl[1:-1] = f[:-2] - 2 * f[1:-1] + f[2:]
    fl[0] = 2 * (f[1] - f[0])
    fl[-1] = 2 * (f[-2] - f[-1])
    al[1:-1] = a[:-2] - 2 * a[1:-1] + a[2:]
    # ghost a_{-1} = a_1 + 2 h b / lam from the centered wall derivative
    al[0] = 2 * (a[1] - a[0]) + 2 * h * b / lam
    rf = -eps2 * fl / h ** 2 - (1 - f * f - a * a) * f
    ra = lam2 * al / h ** 2 - f * f * a
    ra[n] = a[n]
    return rf, ra


def solve_full_ode(problem: SlabProblem, require_K: bool = False, tol: float = 1e-10,
                   max_iter: int = 50) -> SlabSolution:
    """Centered differences with Newton on the interleaved unknowns (f_i, a_i)."""
    if math.isinf(problem.kappa):
        raise InvalidSpec("solve_full_ode needs a finite kappa")
    lam, kap, b = problem.lambda_, problem.kappa, problem.b
    x = problem.x
    n = x.size - 1
    h = x[1] - x[0]
    eps2 = (lam / kap) ** 2
    lam2 = lam * lam
    if b <= H_SUPERHEATING:
        start = solve_limit_ode(SlabProblem(lam, b, INFINITY, problem.L, problem.n))
        f, a = start.f.copy(), start.a.copy()
    else:
        f = np.ones_like(x)
        a = b * lam * np.exp(-x / lam)
    a[-1] = 0.0
    cf, ca = eps2 / h ** 2, lam2 / h ** 2
    # rows are measured relative to their stencil scale
    wf, wa = 1.0 / (2 * cf + 1.0), 1.0 / (2 * ca + 1.0)

    def norm(rf, ra):
        return max(wf * np.max(np.abs(rf)), wa * np.max(np.abs(ra[:-1])), abs(ra[-1]))

    rf, ra = _full_residual(f, a, h, eps2, lam2, lam, b)
    nrm = norm(rf, ra)
    i = np.arange(n + 1)
    for _ in range(max_iter):
        if nrm <= tol:
            break
        ab = np.zeros((5, 2 * (n + 1)))
        F, A = 2 * i, 2 * i + 1
        # entry (row r, col c) sits at ab[2 + r - c, c]
        ab[2, F] = 2 * cf - (1 - 3 * f ** 2 - a ** 2)
        ab[1, A] = 2 * a * f                     # row F, col A
        ab[0, F[1:]] = -cf                        # row F, col F+2
        ab[4, F[:-1]] = -cf                       # row F, col F-2
        ab[0, 2] = -2 * cf
        ab[4, F[-2]] = -2 * cf
        ab[2, A] = -2 * ca - f ** 2
        ab[3, F] = -2 * f * a                     # row A, col F
        ab[0, A[1:]] = ca                         # row A, col A+2
        ab[4, A[:-1]] = ca                        # row A, col A-2
        ab[0, 3] = 2 * ca
        ab[2, A[-1]] = 1.0
        ab[3, F[-1]] = 0.0
        ab[4, A[-2]] = 0.0
        r = np.empty(2 * (n + 1))
        r[0::2], r[1::2] = rf, ra
        dx = solve_banded((2, 2), ab, -r)
        alpha = 1.0
        for _ in range(21):
            ft, at = f + alpha * dx[0::2], a + alpha * dx[1::2]
            rft, rat = _full_residual(ft, at, h, eps2, lam2, lam, b)
            nt = norm(rft, rat)
            if nt < nrm and np.min(ft) > 0.1:
                break
            alpha *= 0.5
        else:
            raise SolverFailure("slab Newton line search failed", residual=float(nrm))
        f, a, rf, ra, nrm = ft, at, rft, rat, nt
    if nrm > tol:
        raise SolverFailure("slab Newton did not converge", residual=float(nrm))
    fp = np.gradient(f, h, edge_order=2)
    ap = np.gradient(a, h, edge_order=2)
    fp[0] = fp[-1] = 0.0
    ap[0] = -b / lam
    # conserved quantity of the coupled system
    fi = lam2 * ap ** 2 / 2 + eps2 * fp ** 2 / 2 - a * a * f * f / 2 - (1 - f * f) ** 2 / 4
    sol = SlabSolution(problem, x, f, a, fp, ap, float(abs(a[0])),
                       float(np.max(np.abs(fi - fi[-1]))), float(nrm))
    if require_K and sol.margin - 1.0 / 3.0 <= 0:
        raise OutOfK("slab state leaves the convexity set", margin=sol.margin - 1.0 / 3.0)
    return sol
