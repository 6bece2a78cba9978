"""Continuation in the field scale mu, threshold detection and rate studies.

``continue_mu`` raises mu with warm starts until the convexity margin
``min(f^2 - |A|^2 - 1/3)`` drops to ``margin_tol`` or Newton fails, then
bisects the last bracket.  The sweeps compare finite-kappa states with the
limit state and fit log-log slopes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .constitutive import (
    INFINITY,
    T_MAX,
    GLParameters,
    convexity_margin,
    omega_energy,
)
from .discrete_calculus import Placement, ScalarField, VectorField, field_norm, fmt
from .errors import (
    BudgetExceeded,
    InvalidSpec,
    MeissnerLabError,
    NeverEntersK,
    UnboundedThreshold,
    ZeroDatum,
)
from .interior_solver import (
    BoundaryData,
    MeissnerStateFH,
    SolverOptions,
    _ops,
    _solve_spd,
    limit_density,
    limit_state,
    recover_A,
    screening_solve,
    solve_full_FH,
    solve_limit_H,
    wall_node_areas,
)
from .oned_oracle import H_SUPERHEATING

FULL = "FULL"
LIMIT = "LIMIT"


@dataclass(frozen=True)
class ContinuationSchedule:
    mu_start: float = 0.0
    mu_step: float = 0.02
    margin_tol: float = 1e-3
    mu_tol: float = 1e-4
    max_steps: int = 200

    def __post_init__(self):
        if self.mu_start < 0:
            raise InvalidSpec("mu_start must be nonnegative", field="mu_start")
        if not self.mu_step > 0:
            raise InvalidSpec("mu_step must be positive", field="mu_step")
        if not 0 < self.margin_tol <= 1e-2:
            raise InvalidSpec("margin_tol must lie in (0, 1e-2]", field="margin_tol")
        if not 0 < self.mu_tol < self.mu_step:
            raise InvalidSpec("mu_tol must be positive and below mu_step", field="mu_tol")
        if self.max_steps < 1:
            raise InvalidSpec("max_steps must be positive", field="max_steps")


@dataclass
class ContinuationRow:
    mu: float
    margin: float
    curl_bound: float
    energy: float
    iterations: int


@dataclass
class SuperheatingResult:
    mu_star: float
    bracket: tuple
    margin_trajectory: list
    upper_bound: float
    rows: list = field(default_factory=list)
    states_kept: list = field(default_factory=list)
    failure_bracket: tuple | None = None

    @property
    def last_margin(self) -> float:
        return self.margin_trajectory[-1][1]

    def csv(self, comments=()) -> str:
        lines = [f"# {c}" for c in comments]
        lines.append("mu,margin,curl_bound,energy,iterations")
        for r in self.rows:
            lines.append(f"{fmt(r.mu)},{fmt(r.margin)},{fmt(r.curl_bound)},{fmt(r.energy)},{r.iterations}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"mu_star": self.mu_star, "bracket": list(self.bracket), "upper_bound": self.upper_bound,
                "last_margin": self.last_margin}


@dataclass
class _Accepted:
    mu: float
    state: object
    H: VectorField
    margin: float
    curl_bound: float
    energy: float
    iterations: int


def _attempt(system, params: GLParameters, data: BoundaryData, warm, opts):
    """One solve at ``params.mu``; returns an :class:`_Accepted` or None on failure."""
    inits = []
    if warm is not None:
        inits.append(warm)
    inits.append(None)
    for init in inits:
        try:
            if system == LIMIT:
                H, rep = solve_limit_H(params, data, init=None if init is None else init.H, opts=opts)
                st = limit_state(H, params, data)
                margin = rep.margin
            else:
                init_state = None if init is None else init.state
                s, rep = solve_full_FH(params, data, init=init_state, opts=opts)
                st = recover_A(s)
                H = s.H
                margin = rep.margin
        except MeissnerLabError:
            continue
        ext = data.scaled(params.mu).extension
        energy = omega_energy(st.f, st.A, ext, params).total
        keep = st if system == LIMIT else s
        return _Accepted(params.mu, keep, H, margin, rep.curl_bound, energy, rep.iterations)
    return None


def continue_mu(system: str, lam: float, kappa: float, base_data: BoundaryData,
                schedule: ContinuationSchedule | None = None, opts: SolverOptions | None = None,
                keep_states: bool = False) -> SuperheatingResult:
    """Locate the threshold mu* for the FULL or LIMIT system.

    ``mu_star`` is the midpoint of the final bracket; the lower end is the
    last accepted mu (margin above ``margin_tol``) and the upper end the
    first mu whose solve failed or whose margin fell to ``margin_tol``.
    """
    system = system.upper()
    if system not in (FULL, LIMIT):
        raise InvalidSpec("system must be FULL or LIMIT", field="system")
    schedule = schedule or ContinuationSchedule()
    if system == FULL and math.isinf(kappa):
        raise InvalidSpec("FULL continuation needs a finite kappa", field="kappa")
    kap = INFINITY if system == LIMIT else kappa
    params = GLParameters(lam, kap, schedule.mu_start)
    opts = opts or SolverOptions()
    rows: list[ContinuationRow] = []
    kept = []

    def record(acc: _Accepted):
        rows.append(ContinuationRow(acc.mu, acc.margin, acc.curl_bound, acc.energy, acc.iterations))
        if keep_states:
            kept.append((acc.mu, acc.state))

    first = _attempt(system, params, base_data, None, opts)
    if first is None or first.margin <= 0:
        raise NeverEntersK("no state in the convexity set at mu_start", mu=schedule.mu_start)
    record(first)
    lo = first
    hi_mu = None
    fail_hi = None
    if first.margin > schedule.margin_tol:
        for _ in range(schedule.max_steps):
            mu = lo.mu + schedule.mu_step
            acc = _attempt(system, params.with_mu(mu), base_data, lo, opts)
            if acc is not None and acc.margin > schedule.margin_tol:
                record(acc)
                lo = acc
                continue
            hi_mu = mu
            if acc is None:
                fail_hi = mu
            break
        if hi_mu is None:
            if base_data.is_zero():
                raise UnboundedThreshold("margin never reaches the tolerance for zero data",
                                         steps=schedule.max_steps)
            raise BudgetExceeded("threshold not bracketed within max_steps", mu=lo.mu)
        while hi_mu - lo.mu > schedule.mu_tol:
            mid = 0.5 * (lo.mu + hi_mu)
            acc = _attempt(system, params.with_mu(mid), base_data, lo, opts)
            if acc is not None and acc.margin > schedule.margin_tol:
                record(acc)
                lo = acc
            else:
                hi_mu = mid
                if acc is None:
                    fail_hi = mid
    else:
        hi_mu = lo.mu
    ub = mu_upper_bound(lam, base_data) if not base_data.is_zero() else math.inf
    traj = [(r.mu, r.margin) for r in rows]
    res = SuperheatingResult(0.5 * (lo.mu + hi_mu), (lo.mu, hi_mu), traj, ub, rows, kept,
                             (lo.mu, fail_hi) if fail_hi is not None else None)
    res.last_state = lo.state
    res.last_H = lo.H
    return res


def minimal_energy(lam: float, data: BoundaryData) -> float:
    """c(B_T): minimum of sum(lam^2 |curl H|^2 + |H|^2) with the trace fixed."""
    g = data.grid
    H = screening_solve(lam, data)
    w = g.curl_op @ H
    return float(lam ** 2 * np.sum(g.face_mass * w * w) + np.sum(g.edge_mass * H * H))


def mu_upper_bound(lam: float, data: BoundaryData) -> float:
    """lam ||B_T||_L1 / (min(lam^2, 1) c(B_T))."""
    if data.is_zero():
        raise ZeroDatum("upper bound needs nonzero data")
    c = minimal_energy(lam, data)
    return lam * data.l1_norm / (min(lam * lam, 1.0) * c)


# ---------------------------------------------------------------------------
# kappa sweep and corrector
# ---------------------------------------------------------------------------

NORM_KINDS = ("L2", "H1", "H2")
SWEEP_COLUMNS = ("kappa",) + tuple(f"{k.lower()}_{q}" for k in NORM_KINDS for q in ("f", "A", "H"))


@dataclass
class RateFit:
    kappas: list
    norms: list  # one dict per kappa keyed by SWEEP_COLUMNS[1:]
    fitted_slopes: dict
    sup_differences: list = field(default_factory=list)
    curl_bounds: list = field(default_factory=list)  # limit state first, then one per kappa

    def csv(self, comments=()) -> str:
        lines = [f"# {c}" for c in comments]
        lines.append(",".join(SWEEP_COLUMNS))
        for k, row in zip(self.kappas, self.norms):
            lines.append(",".join([fmt(k)] + [fmt(row[c]) for c in SWEEP_COLUMNS[1:]]))
        return "\n".join(lines) + "\n"


def loglog_slope(x, y) -> float:
    """Unweighted least-squares slope of log y against log x."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def _diff(a, b):
    if isinstance(a, ScalarField):
        return ScalarField.from_flat(a.grid, a.placement, a.flat() - b.flat())
    return VectorField.from_flat(a.grid, a.placement, a.flat() - b.flat())


def kappa_sweep(lam: float, data: BoundaryData, kappas, mu: float = 1.0,
                opts: SolverOptions | None = None) -> RateFit:
    """Distances between finite-kappa states and the limit state, with slopes.

    Combined slopes ``l2``, ``h1`` and ``h2`` use ``||f_k - f_inf|| + ||A_k - A_inf||``.
    """
    kappas = [float(k) for k in kappas]
    if any(b <= a for a, b in zip(kappas, kappas[1:])):
        raise InvalidSpec("kappas must be strictly increasing", field="kappas")
    for k in kappas:
        GLParameters(lam, k, mu).require_estimate_regime()
    p_inf = GLParameters(lam, INFINITY, mu)
    H_inf, rep_inf = solve_limit_H(p_inf, data, opts=opts)
    st_inf = limit_state(H_inf, p_inf, data)
    f_inf = limit_density(st_inf.A)
    norms = []
    sups = []
    bounds = [rep_inf.curl_bound]
    warm = MeissnerStateFH(f_inf, H_inf, p_inf, data)
    for k in kappas:
        p = GLParameters(lam, k, mu)
        s, rep = solve_full_FH(p, data, init=warm, opts=opts)
        bounds.append(rep.curl_bound)
        fa = recover_A(s)
        df, dA, dH = _diff(s.f, f_inf), _diff(fa.A, st_inf.A), _diff(s.H, H_inf)
        row = {}
        for kind in NORM_KINDS:
            for name, d in (("f", df), ("A", dA), ("H", dH)):
                row[f"{kind.lower()}_{name}"] = field_norm(d, kind)
        norms.append(row)
        sups.append(max(field_norm(df, "SUP"), field_norm(dA, "SUP")))
        warm = s
    slopes = {c: loglog_slope(kappas, [r[c] for r in norms]) for c in SWEEP_COLUMNS[1:]}
    for kind in NORM_KINDS:
        key = kind.lower()
        slopes[key] = loglog_slope(kappas, [r[f"{key}_f"] + r[f"{key}_A"] for r in norms])
    return RateFit(kappas, norms, slopes, sups, bounds)


def smoothstep_cutoff(s):
    """C2 cutoff: 1 on [0, 1], 0 on [2, inf), quintic smoothstep in between."""
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    return 1.0 - u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


def wall_derivative_stencil(h: float) -> np.ndarray:
    """Second-order one-sided derivative into the domain."""
    return np.array([-1.5, 2.0, -0.5]) / h


def boundary_corrector(f_inf: ScalarField, kappa: float) -> ScalarField:
    """f_hat = f_inf - chi(kappa d) d (df_inf/dn)(y) near every wall.

    ``d`` is the distance to a wall, ``y`` the nearest wall point and the
    derivative is taken along the inward normal with the one-sided stencil
    of :func:`wall_derivative_stencil`, so the same stencil applied to
    ``f_hat`` vanishes at the wall whenever the first three nodes sit inside
    ``d <= 1/kappa``.
    """
    if kappa < 1:
        raise InvalidSpec("kappa must be at least 1", field="kappa")
    if f_inf.placement is not Placement.NODE:
        raise InvalidSpec("f_inf must be a NODE scalar")
    g = f_inf.grid
    vals = f_inf.values.copy()
    out = vals.copy()
    for a in g.wall_axes:
        n = vals.shape[a]
        h = g.spacing[a]
        st = wall_derivative_stencil(h)
        z = np.arange(n) * h
        for side in (0, 1):
            d = z if side == 0 else z[::-1]
            take = [0, 1, 2] if side == 0 else [n - 1, n - 2, n - 3]
            deriv = sum(st[i] * np.take(vals, take[i], axis=a) for i in range(3))
            # nearest wall only: nodes closer to the other wall are left alone
            mine = d <= (n - 1) * h / 2 if side == 0 else d < (n - 1) * h / 2
            weight = np.where(mine, smoothstep_cutoff(kappa * d) * d, 0.0)
            shape = [1, 1, 1]
            shape[a] = n
            out = out - weight.reshape(shape) * np.expand_dims(deriv, a)
    return ScalarField(g, Placement.NODE, out)


def wall_normal_derivative(f: ScalarField) -> float:
    """Largest one-sided inward derivative of a NODE scalar over the walls."""
    g = f.grid
    v = f.values
    worst = 0.0
    for a in g.wall_axes:
        st = wall_derivative_stencil(g.spacing[a])
        n = v.shape[a]
        for take in ([0, 1, 2], [n - 1, n - 2, n - 3]):
            d = sum(st[i] * np.take(v, take[i], axis=a) for i in range(3))
            worst = max(worst, float(np.max(np.abs(d))))
    return worst


def corrector_rates(lam: float, data: BoundaryData, kappas, mu: float = 1.0) -> dict:
    """L2 distance between the corrected and the limit density per kappa."""
    p_inf = GLParameters(lam, INFINITY, mu)
    H_inf, _ = solve_limit_H(p_inf, data)
    f_inf = limit_density(limit_state(H_inf, p_inf, data).A)
    dist, derivs = [], []
    for k in kappas:
        fh = boundary_corrector(f_inf, k)
        dist.append(field_norm(_diff(fh, f_inf), "L2"))
        derivs.append(wall_normal_derivative(fh))
    return {"kappas": list(kappas), "l2": dist, "wall_derivative": derivs,
            "slope": loglog_slope(kappas, dist)}


# ---------------------------------------------------------------------------
# lambda sweep
# ---------------------------------------------------------------------------

@dataclass
class LambdaRow:
    lam: float
    mu_star: float
    error: float
    mu_star_full: float | None = None
    kappa: float | None = None
    results: list = field(default_factory=list)  # SuperheatingResult per continuation run


def lambda_sweep(data_for, lambdas, schedule: ContinuationSchedule | None = None,
                 kappa: float | None = None) -> list:
    """mu*(lam) of the LIMIT system and its distance to sqrt(5/18)/||B_T||.

    ``data_for(lam)`` returns the boundary data (and hence the grid) for
    each lam.  With ``kappa`` the FULL threshold at the smallest lam is
    added for the liminf comparison.
    """
    lambdas = [float(l) for l in lambdas]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise InvalidSpec("lambdas must be strictly decreasing", field="lambdas")
    rows = []
    for lam in lambdas:
        data = data_for(lam)
        res = continue_mu(LIMIT, lam, INFINITY, data, schedule)
        target = H_SUPERHEATING / data.sup_norm
        rows.append(LambdaRow(lam, res.mu_star, abs(res.mu_star - target), results=[res]))
    if kappa is not None:
        lam = lambdas[-1]
        res = continue_mu(FULL, lam, kappa, data_for(lam), schedule)
        rows[-1].mu_star_full = res.mu_star
        rows[-1].kappa = kappa
        rows[-1].results.append(res)
    return rows


def summary_json(result: SuperheatingResult, slopes: dict | None = None) -> str:
    out = result.summary()
    out["slopes"] = slopes or {}
    return json.dumps(out, indent=2, sort_keys=True)
