"""Newton solvers for the interior Meissner problems on staggered grids.

Unknowns are the order-parameter modulus ``f`` at nodes and the field ``H``
on edges.  The tangential trace of ``H`` (edges lying in a wall plane) is
prescribed; every other edge is free.  With ``w = curl H`` on faces and
``f_F^2`` the face average of ``f^2`` the coupled system reads

    (lam/kappa)^2 (-Lap f) + f (f^2 + |A|^2 - 1) = 0        at nodes
    H + lam^2 curl'(w / f_F^2) = 0                            on free edges

with ``A = -lam w / f_F^2`` and ``curl'`` the metric adjoint of curl.  The
limit system replaces ``1 / f_F^2`` by ``F(lam^2 |w|^2)`` and drops ``f``.

Because the nodal divergence of ``curl'`` vanishes identically, every exact
Newton update keeps the nodal divergence of ``H`` unchanged, so a
divergence-free start stays divergence free.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import (
    T_MAX,
    V_MAX,
    GLParameters,
    F_and_derivative,
    F_of,
    convexity_margin,
    node_A_squared,
)
from .discrete_calculus import (
    BoundaryKind,
    Placement,
    ScalarField,
    StaggeredGrid,
    VectorField,
    build_grid,
    field_from_csv,
    field_to_csv,
    dual_div,
)
from .errors import (
    GridMismatch,
    InvalidSpec,
    NonPositiveCoefficient,
    NotConverged,
    OutOfDomain,
    OutOfK,
    SolverFailure,
)


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Tangential field on the walls together with a curl-free extension.

    ``extension`` is an EDGE field with zero discrete curl whose values on
    the wall edges are the prescribed tangential trace; its interior values
    only enter the energy functional.
    """

    extension: VectorField

    @property
    def grid(self) -> StaggeredGrid:
        return self.extension.grid

    @property
    def boundary_values(self) -> np.ndarray:
        return self.extension.flat()[self.grid.boundary_edge_mask]

    def edge_vector(self) -> np.ndarray:
        """Full edge vector that is zero off the walls."""
        out = np.zeros(self.grid.offsets(Placement.EDGE)[-1])
        mask = self.grid.boundary_edge_mask
        out[mask] = self.extension.flat()[mask]
        return out

    @property
    def sup_norm(self) -> float:
        g = self.grid
        if not g.wall_axes:
            return 0.0
        tang = g.edge_to_node @ self.edge_vector()
        offs = g.offsets(Placement.NODE)
        n = offs[1]
        mag = np.sqrt(sum(tang[c * n:(c + 1) * n] ** 2 for c in range(3)))
        return float(np.max(mag[g.wall_node_mask]))

    @property
    def l1_norm(self) -> float:
        """Integral of |B_T| over the walls (wall-node quadrature)."""
        g = self.grid
        tang = g.edge_to_node @ self.edge_vector()
        n = g.size(Placement.NODE)
        mag = np.sqrt(sum(tang[c * n:(c + 1) * n] ** 2 for c in range(3)))
        return float(np.sum(wall_node_areas(g) * mag))

    def is_zero(self) -> bool:
        return not np.any(self.boundary_values)

    def scaled(self, mu: float) -> "BoundaryData":
        return BoundaryData(VectorField.from_flat(self.grid, Placement.EDGE, mu * self.extension.flat()))

    def wall_curl_defect(self) -> float:
        """Largest normal curl of the tangential data on wall faces."""
        g = self.grid
        w = g.curl_op @ self.edge_vector()
        mask = g.wall_face_mask
        return float(np.max(np.abs(w[mask]))) if np.any(mask) else 0.0

    @classmethod
    def slab(cls, grid: StaggeredGrid, b: float, direction: int = 0) -> "BoundaryData":
        """Uniform tangential field ``b`` along a periodic axis."""
        if grid.is_wall(direction):
            raise InvalidSpec("slab field must point along a periodic axis")
        comps = [np.zeros(grid.shape(Placement.EDGE, c)) for c in range(3)]
        comps[direction][...] = b
        return cls(VectorField(grid, Placement.EDGE, tuple(comps)))

    @classmethod
    def from_potential(cls, grid: StaggeredGrid, phi: Callable, uniform=(0.0, 0.0, 0.0)) -> "BoundaryData":
        """Tangential gradient of ``phi(x, y, z)`` plus a uniform periodic part."""
        p = phi(*grid.coords(Placement.NODE)).ravel()
        ext = grid.grad_op @ p
        offs = grid.offsets(Placement.EDGE)
        for c in range(3):
            if uniform[c]:
                if grid.is_wall(c):
                    raise InvalidSpec("uniform part must be tangential to every wall")
                ext[offs[c]:offs[c + 1]] += uniform[c]
        return cls(VectorField.from_flat(grid, Placement.EDGE, ext))


def wall_node_areas(grid: StaggeredGrid) -> np.ndarray:
    """Wall area attached to each node (zero on interior nodes)."""
    out = np.zeros(grid.size(Placement.NODE))
    vol = grid.node_mass
    shape = grid.shape(Placement.NODE)
    idx = np.indices(shape).reshape(3, -1)
    for a in grid.wall_axes:
        end = (idx[a] == 0) | (idx[a] == shape[a] - 1)
        fresh = end & (out == 0)
        out[fresh] = vol[fresh] / (0.5 * grid.spacing[a])
    return out


# ---------------------------------------------------------------------------
# states and reports
# ---------------------------------------------------------------------------

@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    final_residual: float = math.inf
    margin: float = math.nan
    curl_bound: float = math.nan
    converged: bool = False
    divergence_history: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "final_residual": float(self.final_residual),
            "margin": float(self.margin),
            "curl_bound": float(self.curl_bound),
            "converged": bool(self.converged),
            "max_divergence": float(max(self.divergence_history, default=0.0)),
        }


@dataclass(frozen=True, eq=False)
class MeissnerStateFH:
    f: ScalarField
    H: VectorField
    params: GLParameters
    data: BoundaryData
    converged: bool = True


@dataclass(frozen=True, eq=False)
class MeissnerStateFA:
    f: ScalarField
    A: VectorField
    params: GLParameters
    data: BoundaryData

    @property
    def margin(self) -> float:
        return convexity_margin(self).margin


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 60
    max_halvings: int = 20
    min_f: float = 0.1
    require_K: bool = False
    polish: int = 2  # extra full Newton steps after tol, kept only while they lower the residual


# ---------------------------------------------------------------------------
# assembled operators
# ---------------------------------------------------------------------------

class _Ops:
    """Sparse operators shared by the residuals of one grid."""

    def __init__(self, grid: StaggeredGrid):
        self.grid = grid
        self.C = grid.curl_op
        self.G = grid.grad_op
        self.ME = grid.edge_mass
        self.MF = grid.face_mass
        self.MN = grid.node_mass
        self.S = grid.node_to_face
        self.T = grid.face_to_node
        self.free = grid.interior_edges
        n_e = grid.offsets(Placement.EDGE)[-1]
        self.P = sp.csr_matrix((np.ones(self.free.size), (self.free, np.arange(self.free.size))),
                               shape=(n_e, self.free.size))
        # curl' = ME^{-1} C^T MF restricted to free rows
        self.CtM = (sp.diags(1.0 / self.ME) @ self.C.T @ sp.diags(self.MF)).tocsr()[self.free]
        self.CP = (self.C @ self.P).tocsr()
        self.lap = (sp.diags(1.0 / self.MN) @ self.G.T @ sp.diags(self.ME) @ self.G).tocsr()
        self.GtM = (self.G.T @ sp.diags(self.ME)).tocsr()
        # stencil sizes used to measure residual rows on a common scale
        self.curl_diag = np.abs((self.CtM @ self.CP).diagonal())
        self.lap_diag = np.abs(self.lap.diagonal())

    def assemble_H(self, h_free: np.ndarray, boundary: np.ndarray) -> np.ndarray:
        H = boundary.copy()
        H[self.free] = h_free
        return H

    def divergence(self, H: np.ndarray) -> float:
        d = -(self.GtM @ H) / self.MN
        inner = self.grid.interior_nodes
        return float(np.max(np.abs(d[inner]))) if inner.size else 0.0


_OPS_CACHE: dict = {}


def _ops(grid: StaggeredGrid) -> _Ops:
    key = (grid.dims, grid.extents, grid.spacing, grid.boundary)
    ops = _OPS_CACHE.get(key)
    if ops is None:
        if len(_OPS_CACHE) > 16:
            _OPS_CACHE.clear()
        ops = _OPS_CACHE[key] = _Ops(grid)
    return ops


# systems up to this size are factorized directly; larger ones use Krylov solvers
DIRECT_LIMIT = 40000


def _solve_sparse(J, r):
    try:
        x = spla.spsolve(J.tocsc(), r)
    except RuntimeError as exc:  # singular factor
        raise SolverFailure(f"sparse factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverFailure("sparse solve produced non-finite values")
    return x


def _pcg(K, b, rtol=1e-12, maxiter=20000):
    """Jacobi preconditioned CG for a symmetric positive definite K."""
    if not np.any(b):
        return np.zeros_like(b)
    M = sp.diags(1.0 / K.diagonal())
    x, info = spla.cg(K, b, M=M, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise SolverFailure("conjugate gradient hit its iteration cap", iterations=maxiter)
    return x


def _iterative(grid: StaggeredGrid, n: int) -> bool:
    """Krylov only for large 3D systems; 1D systems factor without fill."""
    return grid.dims == 3 and n > DIRECT_LIMIT


def _solve_spd(K, b, grid: StaggeredGrid):
    return _pcg(K.tocsr(), b) if _iterative(grid, K.shape[0]) else _solve_sparse(K, b)


def _solve_linear(J, rhs, blocks):
    """Solve ``J x = rhs``; large systems use GMRES with a block preconditioner.

    An empty ``blocks`` selects a direct solve.  Otherwise ``blocks`` lists ``(start, stop, K, w)`` where the symmetric positive
    definite ``K`` approximates ``diag(w) J[start:stop, start:stop]``.
    """
    if not blocks:
        return _solve_sparse(J, rhs)

    def prec(v):
        out = np.empty_like(v)
        for a, b, K, w in blocks:
            out[a:b] = _pcg(K, w * v[a:b], rtol=1e-12)
        return out

    M = spla.LinearOperator(J.shape, prec)
    x, info = spla.gmres(J, rhs, M=M, rtol=1e-12, atol=0.0, restart=80, maxiter=20)
    rel = np.linalg.norm(J @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if info != 0 and rel > 1e-10:
        raise SolverFailure("GMRES did not reach its tolerance", relative_residual=float(rel))
    return x


def _newton(residual, jacobian, x0, opts: SolverOptions, admissible, report: SolveReport, on_accept=None):
    """Residual-monotone damped Newton; ``residual`` returns (vector, norm)."""
    x = x0.copy()
    try:
        r, nrm = residual(x)
    except OutOfDomain as exc:
        report.message = f"initial iterate outside the domain: {exc}"
        return x, False
    report.residual_history.append(nrm)
    if on_accept:
        on_accept(x)
    for it in range(opts.max_iter):
        if nrm <= opts.tol:
            report.iterations = it
            return _polish(residual, jacobian, x, r, nrm, opts, admissible, report, on_accept), True
        try:
            J, blocks = jacobian(x)
            dx = _solve_linear(J, -r, blocks)
        except (SolverFailure, OutOfDomain) as exc:
            report.message = str(exc)
            report.iterations = it
            return x, False
        alpha = 1.0
        accepted = False
        for _ in range(opts.max_halvings + 1):
            xt = x + alpha * dx
            if admissible(xt):
                try:
                    rt, nt = residual(xt)
                except OutOfDomain:
                    nt = math.inf
                if nt < nrm:
                    x, r, nrm = xt, rt, nt
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            report.message = "line search failed"
            report.iterations = it + 1
            return x, False
        report.residual_history.append(nrm)
        if on_accept:
            on_accept(x)
    report.iterations = opts.max_iter
    report.message = "iteration cap reached"
    return x, nrm <= opts.tol


def _polish(residual, jacobian, x, r, nrm, opts, admissible, report, on_accept):
    """Undamped Newton steps past the tolerance, stopping at the roundoff floor."""
    for _ in range(opts.polish):
        try:
            J, blocks = jacobian(x)
            xt = x + _solve_linear(J, -r, blocks)
            if not admissible(xt):
                break
            rt, nt = residual(xt)
        except (SolverFailure, OutOfDomain):
            break
        if not nt < 0.5 * nrm:
            break
        x, r, nrm = xt, rt, nt
        report.residual_history.append(nrm)
        report.iterations += 1
        if on_accept:
            on_accept(x)
    return x


def _scale(data: BoundaryData) -> float:
    s = data.sup_norm
    return s if s > 0 else 1.0


# ---------------------------------------------------------------------------
# linear kernel
# ---------------------------------------------------------------------------

def solve_linear_maxwell(a: ScalarField, rhs: VectorField, grid: StaggeredGrid | None = None) -> VectorField:
    """Solve ``curl'(a curl u) + u = rhs`` on free edges with ``u_T = 0``.

    ``a`` is a positive NODE scalar (averaged onto faces).  The system is
    symmetric positive definite; it is factorized directly.
    """
    grid = grid or rhs.grid
    if a.grid != grid or rhs.grid != grid:
        raise GridMismatch("coefficient, right-hand side and grid disagree")
    if a.placement is not Placement.NODE or rhs.placement is not Placement.EDGE:
        raise GridMismatch("a must be a NODE scalar and rhs an EDGE vector")
    if np.any(a.flat() <= 0):
        raise NonPositiveCoefficient("coefficient must be positive everywhere")
    ops = _ops(grid)
    aF = ops.S @ a.flat()
    K = (sp.diags(ops.ME[ops.free]) + ops.CP.T @ sp.diags(ops.MF * aF) @ ops.CP).tocsc()
    b = ops.ME[ops.free] * rhs.flat()[ops.free]
    u = np.zeros(grid.offsets(Placement.EDGE)[-1])
    if np.any(b):
        u[ops.free] = _solve_spd(K, b, grid)
    return VectorField.from_flat(grid, Placement.EDGE, u)


def linear_maxwell_residual(a: ScalarField, u: VectorField, rhs: VectorField) -> float:
    ops = _ops(u.grid)
    w = ops.C @ u.flat()
    res = u.flat()[ops.free] + ops.CtM @ ((ops.S @ a.flat()) * w) - rhs.flat()[ops.free]
    return float(np.linalg.norm(res) / max(np.linalg.norm(rhs.flat()[ops.free]), 1e-300))


def screening_solve(lam: float, data: BoundaryData) -> np.ndarray:
    """Linear screening field: ``H + lam^2 curl' curl H = 0``, ``H_T`` given."""
    ops = _ops(data.grid)
    bvec = data.edge_vector()
    K = (sp.diags(ops.ME[ops.free]) + lam ** 2 * ops.CP.T @ sp.diags(ops.MF) @ ops.CP).tocsc()
    rhs = -(lam ** 2) * ops.ME[ops.free] * (ops.CtM @ (ops.C @ bvec))
    H = bvec.copy()
    if np.any(rhs):
        H[ops.free] = _solve_spd(K, rhs, data.grid)
    return H


def _admissible_start(lam: float, data: BoundaryData, headroom: float = 0.9) -> np.ndarray:
    """Screening field with the length stretched until lam |curl H| fits in the domain of F."""
    grid = data.grid
    ell = lam
    for _ in range(60):
        H = screening_solve(ell, data)
        t = lam * np.sqrt(np.max(grid.face_magnitude_sq(grid.curl_op @ H), initial=0.0))
        if t <= headroom * T_MAX:
            return H
        ell *= max(1.25, t / (headroom * T_MAX))
    raise OutOfDomain("no admissible screening start found")


# ---------------------------------------------------------------------------
# limit system
# ---------------------------------------------------------------------------

class _LimitSystem:
    def __init__(self, lam: float, data: BoundaryData):
        self.lam = lam
        self.ops = _ops(data.grid)
        self.bvec = data.edge_vector()
        self.scale = _scale(data)
        self.row_scale = self.scale * (1.0 + lam ** 2 * self.ops.curl_diag)

    def residual(self, h):
        ops, lam = self.ops, self.lam
        H = ops.assemble_H(h, self.bvec)
        w = ops.C @ H
        s = lam ** 2 * ops.grid.face_magnitude_sq(w)
        Fv = F_of(s)
        r = h + lam ** 2 * (ops.CtM @ (Fv * w))
        return r, float(np.max(np.abs(r) / self.row_scale)) if r.size else 0.0

    def jacobian(self, h):
        ops, lam = self.ops, self.lam
        H = ops.assemble_H(h, self.bvec)
        w = ops.C @ H
        s = lam ** 2 * ops.grid.face_magnitude_sq(w)
        Fv, dF = F_and_derivative(s)
        if not np.all(np.isfinite(dF)):
            raise OutOfDomain("F' is unbounded at the end of its domain")
        inner = sp.diags(Fv) + sp.diags(w * dF) @ (lam ** 2 * ops.grid.face_magnitude_sq_jac(w))
        J = (sp.identity(h.size) + lam ** 2 * ops.CtM @ inner @ ops.CP).tocsr()
        blocks = []
        if _iterative(ops.grid, J.shape[0]):
            me = ops.ME[ops.free]
            K = (sp.diags(me) + lam ** 2 * ops.CP.T @ sp.diags(ops.MF * Fv) @ ops.CP).tocsr()
            blocks = [(0, h.size, K, me)]
        return J, blocks


def curl_bound_limit(H: np.ndarray, lam: float, grid: StaggeredGrid) -> float:
    w = grid.curl_op @ H
    return float(lam * np.sqrt(np.max(grid.face_magnitude_sq(w)))) if w.size else 0.0


def solve_limit_H(params: GLParameters, data: BoundaryData, grid: StaggeredGrid | None = None,
                  init=None, opts: SolverOptions | None = None):
    """Newton solve of the limit curl system; returns ``(H, report)``.

    ``data`` is scaled by ``params.mu``.  The default start is the linear
    screening field.  Raises :class:`OutOfDomain` when no admissible iterate
    can be found (the field is beyond the domain of F) and
    :class:`SolverFailure` for any other breakdown.
    """
    opts = opts or SolverOptions()
    eff = data.scaled(params.mu)
    grid = grid or eff.grid
    if grid != eff.grid:
        raise GridMismatch("boundary data lives on a different grid")
    sysm = _LimitSystem(params.lambda_, eff)
    ops = sysm.ops
    if init is None:
        H0 = _admissible_start(params.lambda_, eff)
    else:
        H0 = init.flat() if isinstance(init, VectorField) else init.H.flat()
    report = SolveReport()

    def track(h):
        report.divergence_history.append(ops.divergence(ops.assemble_H(h, sysm.bvec)) / sysm.scale)

    h, ok = _newton(sysm.residual, sysm.jacobian, H0[ops.free], opts, lambda x: True, report, track)
    H = ops.assemble_H(h, sysm.bvec)
    report.converged = ok
    if report.residual_history:
        report.final_residual = report.residual_history[-1]
    if not ok:
        if report.message.startswith("initial iterate") or "domain" in report.message or \
                report.message == "line search failed":
            raise OutOfDomain(f"limit solve left the domain of F: {report.message}", report=report.to_dict())
        raise SolverFailure(f"limit solve failed: {report.message}", report=report.to_dict())
    Hf = VectorField.from_flat(grid, Placement.EDGE, H)
    report.curl_bound = curl_bound_limit(H, params.lambda_, grid)
    st = limit_state(Hf, params, data)
    report.margin = convexity_margin(st).margin
    return Hf, report


def limit_A(H: VectorField, lam: float) -> VectorField:
    """A = -lam F(lam^2 |curl H|^2) curl H on faces."""
    g = H.grid
    w = g.curl_op @ H.flat()
    A = -lam * F_of(lam ** 2 * g.face_magnitude_sq(w)) * w
    A[g.wall_face_mask] = 0.0
    return VectorField.from_flat(g, Placement.FACE, A)


def limit_density(A: VectorField) -> ScalarField:
    """f = sqrt(1 - |A|^2) at nodes, |A|^2 sampled as in the margin."""
    a2 = node_A_squared(A)
    if np.any(a2 > (V_MAX + 1e-9) ** 2):
        raise OutOfDomain("|A| exceeds 1/sqrt(3)", value=float(np.sqrt(a2.max())))
    return ScalarField.from_flat(A.grid, Placement.NODE, np.sqrt(1.0 - np.clip(a2, 0.0, None)))


def limit_state(H: VectorField, params: GLParameters, data: BoundaryData) -> MeissnerStateFA:
    A = limit_A(H, params.lambda_)
    a2 = node_A_squared(A)
    f = ScalarField.from_flat(A.grid, Placement.NODE, np.sqrt(np.clip(1.0 - a2, 0.0, None)))
    return MeissnerStateFA(f, A, params, data)


# ---------------------------------------------------------------------------
# full system
# ---------------------------------------------------------------------------

class _FullSystem:
    def __init__(self, params: GLParameters, data: BoundaryData):
        self.lam = params.lambda_
        self.eps2 = (params.lambda_ / params.kappa) ** 2
        self.ops = _ops(data.grid)
        self.bvec = data.edge_vector()
        self.scale = _scale(data)
        self.nN = data.grid.size(Placement.NODE)
        self.f_scale = 1.0 + self.eps2 * self.ops.lap_diag
        self.h_scale = self.scale * (1.0 + self.lam ** 2 * self.ops.curl_diag)

    def split(self, x):
        return x[:self.nN], x[self.nN:]

    def _pieces(self, x):
        ops, lam = self.ops, self.lam
        f, h = self.split(x)
        H = ops.assemble_H(h, self.bvec)
        w = ops.C @ H
        f2F = ops.S @ (f * f)
        q = lam ** 2 * w * w / f2F ** 2
        return f, h, H, w, f2F, q

    def residual(self, x):
        ops = self.ops
        f, h, H, w, f2F, q = self._pieces(x)
        a2 = ops.T @ q
        rf = self.eps2 * (ops.lap @ f) + f * (f * f + a2 - 1.0)
        rh = h + self.lam ** 2 * (ops.CtM @ (w / f2F))
        r = np.concatenate([rf, rh])
        nrm = max(float(np.max(np.abs(rf) / self.f_scale)),
                  float(np.max(np.abs(rh) / self.h_scale)) if rh.size else 0.0)
        return r, nrm

    def jacobian(self, x):
        ops, lam = self.ops, self.lam
        f, h, H, w, f2F, q = self._pieces(x)
        a2 = ops.T @ q
        Sf = ops.S @ sp.diags(2.0 * f)
        da2_df = ops.T @ sp.diags(-2.0 * q / f2F) @ Sf
        da2_dh = ops.T @ sp.diags(2.0 * lam ** 2 * w / f2F ** 2) @ ops.CP
        Jff = self.eps2 * ops.lap + sp.diags(3.0 * f * f + a2 - 1.0) + sp.diags(f) @ da2_df
        Jfh = sp.diags(f) @ da2_dh
        Jhh = sp.identity(h.size) + lam ** 2 * ops.CtM @ sp.diags(1.0 / f2F) @ ops.CP
        Jhf = lam ** 2 * ops.CtM @ sp.diags(-w / f2F ** 2) @ Sf
        J = sp.bmat([[Jff, Jfh], [Jhf, Jhh]], format="csr")
        blocks = []
        if _iterative(ops.grid, J.shape[0]):
            me = ops.ME[ops.free]
            Kf = (self.eps2 * ops.G.T @ sp.diags(ops.ME) @ ops.G
                  + sp.diags(ops.MN * np.maximum(3.0 * f * f + a2 - 1.0, 0.1))).tocsr()
            Kh = (sp.diags(me) + lam ** 2 * ops.CP.T @ sp.diags(ops.MF / f2F) @ ops.CP).tocsr()
            blocks = [(0, self.nN, Kf, ops.MN), (self.nN, J.shape[0], Kh, me)]
        return J, blocks


def solve_full_FH(params: GLParameters, data: BoundaryData, grid: StaggeredGrid | None = None,
                  init: MeissnerStateFH | None = None, opts: SolverOptions | None = None):
    """Coupled Newton solve for (f, H) at finite kappa.

    ``data`` is scaled by ``params.mu``.  Without ``init`` the start is
    ``f = 1`` with the linear screening field.
    """
    if params.is_limit:
        raise InvalidSpec("solve_full_FH needs a finite kappa; use solve_limit_H")
    opts = opts or SolverOptions()
    eff = data.scaled(params.mu)
    grid = grid or eff.grid
    if grid != eff.grid:
        raise GridMismatch("boundary data lives on a different grid")
    sysm = _FullSystem(params, eff)
    ops = sysm.ops
    if init is None:
        f0 = np.ones(sysm.nN)
        H0 = screening_solve(params.lambda_, eff)
    else:
        f0 = init.f.flat()
        H0 = init.H.flat()
    x0 = np.concatenate([f0, H0[ops.free]])
    report = SolveReport()

    def track(x):
        _, h = sysm.split(x)
        report.divergence_history.append(ops.divergence(ops.assemble_H(h, sysm.bvec)) / sysm.scale)

    def admissible(x):
        return float(np.min(x[:sysm.nN])) >= opts.min_f

    x, ok = _newton(sysm.residual, sysm.jacobian, x0, opts, admissible, report, track)
    report.converged = ok
    report.final_residual = report.residual_history[-1] if report.residual_history else math.inf
    if not ok:
        raise SolverFailure(f"coupled solve failed: {report.message}", report=report.to_dict())
    f, h = sysm.split(x)
    H = ops.assemble_H(h, sysm.bvec)
    state = MeissnerStateFH(ScalarField.from_flat(grid, Placement.NODE, f),
                            VectorField.from_flat(grid, Placement.EDGE, H), params, data, True)
    fa = recover_A(state)
    report.margin = convexity_margin(fa).margin
    report.curl_bound = float(params.lambda_ * np.sqrt(np.max(grid.face_magnitude_sq(ops.C @ H))))
    if opts.require_K and report.margin <= 0:
        raise OutOfK("converged state has nonpositive convexity margin", margin=report.margin)
    return state, report


# ---------------------------------------------------------------------------
# recovery and residual checks
# ---------------------------------------------------------------------------

def recover_A(state: MeissnerStateFH) -> MeissnerStateFA:
    """A = -lam f^{-2} curl H on faces (f^2 averaged onto each face)."""
    if not state.converged:
        raise NotConverged("state is not converged")
    g = state.f.grid
    f = state.f.flat()
    if np.any(f <= 0):
        raise NotConverged("f must be positive to recover A")
    w = g.curl_op @ state.H.flat()
    A = -state.params.lambda_ * w / (g.node_to_face @ (f * f))
    A[g.wall_face_mask] = 0.0
    return MeissnerStateFA(state.f, VectorField.from_flat(g, Placement.FACE, A), state.params, state.data)


def equivalence_residuals(state_fa: MeissnerStateFA, H: VectorField) -> dict:
    """Residuals linking the (f, A) and (f, H) formulations.

    ``curl_defect``  relative L2 norm of ``curl' A - H / lam`` on free edges.
    ``curl_defect_abs`` the same norm without normalization.
    ``a_equation``   relative L2 norm of ``lam^2 curl curl A + f^2 A`` on faces,
                     with the wall value of ``lam curl A`` taken from the data.
    ``normal_trace`` largest normal component of A on the walls.
    """
    g = H.grid
    lam = state_fa.params.lambda_
    a = state_fa.A.flat()
    ops = _ops(g)
    curlA = (g.curl_op.T @ (g.face_mass * a)) / g.edge_mass
    free = ops.free
    hv = H.flat()
    d1 = curlA[free] - hv[free] / lam
    a1 = float(np.sqrt(np.sum(g.edge_mass[free] * d1 ** 2)))
    n1 = a1 / max(np.sqrt(np.sum(g.edge_mass[free] * (hv[free] / lam) ** 2)), 1e-300)
    curl_full = curlA.copy()
    curl_full[g.boundary_edge_mask] = hv[g.boundary_edge_mask] / lam
    f = state_fa.f.flat()
    f2F = g.node_to_face @ (f * f)
    r2 = lam ** 2 * (g.curl_op @ curl_full) + f2F * a
    r2[g.wall_face_mask] = 0.0
    scale2 = np.sqrt(np.sum(g.face_mass * (f2F * a) ** 2))
    n2 = np.sqrt(np.sum(g.face_mass * r2 ** 2)) / max(scale2, 1e-300)
    nt = float(np.max(np.abs(a[g.wall_face_mask]))) if np.any(g.wall_face_mask) else 0.0
    return {"curl_defect": float(n1), "curl_defect_abs": a1, "a_equation": float(n2), "normal_trace": nt}


def full_residual_norm(state: MeissnerStateFH) -> float:
    sysm = _FullSystem(state.params, state.data.scaled(state.params.mu))
    x = np.concatenate([state.f.flat(), state.H.flat()[sysm.ops.free]])
    return sysm.residual(x)[1]


def divergence_defect(H: VectorField) -> float:
    """Largest nodal divergence of H on interior nodes."""
    return _ops(H.grid).divergence(H.flat())


# ---------------------------------------------------------------------------
# boundary traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Normal component sampled at wall nodes with their quadrature areas."""

    positions: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    @property
    def integral(self) -> float:
        return float(np.sum(self.weights * self.values))


def interior_dtn(state, which: str = "GAMMA") -> BoundaryTrace:
    """Outward normal component of H on the walls.

    GAMMA expects a limit-system field (an EDGE vector, or a state whose
    parameters carry kappa = INFINITY); PI a finite-kappa state.  The value
    at a wall node closes the flux balance of its half cell, so the samples
    integrate to the (zero) net divergence exactly.
    """
    which = which.upper()
    if which not in ("GAMMA", "PI"):
        raise InvalidSpec("which must be GAMMA or PI")
    if isinstance(state, VectorField):
        H = state
    else:
        if not getattr(state, "converged", True):
            raise NotConverged("trace requested from an unconverged state")
        H = state.H
    g = H.grid
    flux = g.grad_op.T @ (g.edge_mass * H.flat())
    areas = wall_node_areas(g)
    mask = g.wall_node_mask
    pos = np.column_stack([c.ravel()[mask] for c in g.coords(Placement.NODE)])
    return BoundaryTrace(pos, areas[mask], flux[mask] / areas[mask])


# ---------------------------------------------------------------------------
# convenience
# ---------------------------------------------------------------------------

def slab_grid(length: float, cells: int) -> StaggeredGrid:
    """1D slab ``[0, length]`` with walls at both ends."""
    return build_grid(1, cells=cells, lengths=length, boundary="WALL")


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _grid_dict(g: StaggeredGrid) -> dict:
    return {"dims": g.dims, "extents": list(g.extents), "spacing": list(g.spacing),
            "boundary": [b.value for b in g.boundary]}


def _grid_from_dict(d: dict) -> StaggeredGrid:
    return StaggeredGrid(int(d["dims"]), tuple(int(n) for n in d["extents"]),
                         tuple(float(h) for h in d["spacing"]), tuple(BoundaryKind(b) for b in d["boundary"]))


def _num(x: float):
    return x if math.isfinite(x) else repr(float(x))


def save_state(state: MeissnerStateFH, directory, stem: str = "state",
               report: SolveReport | None = None) -> list[Path]:
    """Write ``f``, ``H`` and the data extension as field CSVs plus a JSON sidecar."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {"f": state.f, "H": state.H, "extension": state.data.extension}
    paths = []
    for name, fld in files.items():
        path = out / f"{stem}_{name}.csv"
        path.write_text(field_to_csv(fld), encoding="utf-8", newline="\n")
        paths.append(path)
    p = state.params
    side = {
        "grid": _grid_dict(state.f.grid),
        "params": {"lambda": p.lambda_, "kappa": _num(p.kappa), "mu": p.mu},
        "data": {"sup_norm": state.data.sup_norm, "l1_norm": state.data.l1_norm},
        "converged": state.converged,
        "report": report.to_dict() if report is not None else None,
    }
    path = out / f"{stem}.json"
    path.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    paths.append(path)
    return paths


def load_state(directory, stem: str = "state") -> MeissnerStateFH:
    """Inverse of :func:`save_state`."""
    d = Path(directory)
    side = json.loads((d / f"{stem}.json").read_text(encoding="utf-8"))
    g = _grid_from_dict(side["grid"])
    pr = side["params"]
    params = GLParameters(float(pr["lambda"]), float(pr["kappa"]), float(pr["mu"]))
    f = field_from_csv((d / f"{stem}_f.csv").read_text(encoding="utf-8"), g)
    H = field_from_csv((d / f"{stem}_H.csv").read_text(encoding="utf-8"), g)
    ext = field_from_csv((d / f"{stem}_extension.csv").read_text(encoding="utf-8"), g)
    return MeissnerStateFH(f, H, params, BoundaryData(ext), bool(side["converged"]))
