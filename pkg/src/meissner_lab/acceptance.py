"""End-to-end acceptance checks.

Each check returns a :class:`CriterionResult` with the measured metrics, a
pass flag against fixed tolerances, the wall time and a few deterministic
result tables.  Checks that audit other checks (the curl bound, the
formulation equivalence and determinism) read the ``records`` the earlier
checks leave behind, so running a subset still audits whatever ran.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constitutive import INFINITY, S_MAX, T_MAX, GLParameters, F_of, invert_cubic, omega_energy
from .discrete_calculus import (
    Placement,
    ScalarField,
    VectorField,
    apply_diff,
    build_grid,
    hodge_decompose,
    inner,
    operator_convergence,
)
from .errors import Incompatible
from .exterior_sphere import (
    SphericalHarmonicCoeffs,
    curl_identity_defect,
    decay_slope,
    lm_index,
    quadrature,
    scalar_flux,
    scalar_transform,
    sigma_dtn_sampled,
    solve_exterior_curl_source,
    solve_exterior_scalar,
    toroidal_coefficients,
)
from .interior_solver import (
    BoundaryData,
    MeissnerStateFH,
    divergence_defect,
    equivalence_residuals,
    recover_A,
    slab_grid,
    solve_full_FH,
)
from .oned_oracle import H_SUPERHEATING, SlabProblem, solve_full_ode
from .superheating import FULL, LIMIT, continue_mu, corrector_rates, kappa_sweep, lambda_sweep
from .tables import ResultsTable

CURL_CAP = T_MAX + 1e-6

# Geometry and data of every check; the values below are the ones the
# tolerances were set against.
SETUP = {
    2: {"lambda": 0.02, "b": 1.0, "width": 0.6, "cells": 1200},
    3: {"lambda": 0.1, "kappa": 50.0, "b": 1.0, "width": 1.6, "cells": 1600},
    4: {"lambda": 0.1, "b": 0.3, "width": 1.6, "cells": 16000, "kappas": [16, 32, 64, 128]},
    7: {"lambdas": [0.2, 0.1, 0.05], "kappa": 200.0, "b": 1.0, "width": 0.6, "cells": 4800},
    9: {"lambda": 0.1, "kappa": 50.0, "b": 0.3, "width": 1.6, "cells": 1600, "starts": 5},
    10: {"samples": 100, "amplitude": 0.01},
    11: {"fields": 100, "cells": (8, 8, 8), "refinement": (8, 16, 32)},
    12: {"lambda": 0.1, "kappa": 50.0, "b": 0.3, "cells": (16, 16, 64), "lengths": (0.4, 0.4, 1.6)},
    13: {"lambda": 0.1, "b": 0.3, "kappas": [16.0, 50.0, 128.0], "width": 1.6, "cells": 1600},
    14: {"l_max": 8, "radii": (2.0, 4.0, 8.0, 16.0)},
}

TITLES = {
    1: "constitutive inversion",
    2: "superheating value (LIMIT, 1D)",
    3: "threshold margin (FULL, 1D)",
    4: "kappa convergence rates",
    5: "uniform convergence",
    6: "boundary corrector rate",
    7: "lambda -> 0 limit",
    8: "curl bound and upper bound",
    9: "uniqueness from random starts",
    10: "stability under perturbations",
    11: "discrete calculus",
    12: "3D vs 1D oracle",
    13: "formulation equivalence",
    14: "exterior spectral exactness",
    15: "determinism",
}

BUDGET = {1: 1.0, 2: 60.0, 3: 120.0, 4: 300.0, 7: 600.0, 9: 120.0, 11: 30.0, 12: 300.0, 14: 10.0}


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict
    runtime: float
    tables: dict = field(default_factory=dict)  # file stem -> ResultsTable
    note: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        parts = " ".join(f"{k}={_short(v)}" for k, v in self.metrics.items())
        note = f" ({self.note})" if self.note else ""
        return f"{tag} C{self.number:02d} {self.title}: {parts} [{self.runtime:.2f} s]{note}"


def _short(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _metric_table(metrics: dict) -> ResultsTable:
    t = ResultsTable(("metric", "value"))
    for k, v in metrics.items():
        t.append((k, float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v))
    return t


@dataclass
class Records:
    """Cross-check evidence collected while the checks run."""

    curl_bounds: list = field(default_factory=list)  # (source, lam * max|curl H|)
    mu_bounds: list = field(default_factory=list)    # (source, mu*, upper bound)
    equivalence: list = field(default_factory=list)  # (source, curl defect, A-equation residual)

    def merge(self, other: "Records") -> None:
        self.curl_bounds += other.curl_bounds
        self.mu_bounds += other.mu_bounds
        self.equivalence += other.equivalence

    def note_continuation(self, source: str, res) -> None:
        self.curl_bounds += [(f"{source} mu={r.mu:.6g}", r.curl_bound) for r in res.rows]
        self.mu_bounds.append((source, res.mu_star, res.upper_bound))
        if isinstance(res.last_state, MeissnerStateFH):
            self.note_state(f"{source} mu*", res.last_state)

    def note_state(self, source: str, state: MeissnerStateFH) -> None:
        eq = equivalence_residuals(recover_A(state), state.H)
        self.equivalence.append((source, eq["curl_defect_abs"], eq["a_equation"]))


def _timed(fn, *args):
    t = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def check_constitutive(seed: int, rec: Records):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, T_MAX, 1000)
    v = invert_cubic(t)
    resid = float(np.max(np.abs((1.0 - v * v) * v - t)))
    f0 = abs(float(F_of(0.0)) - 1.0)
    fend = abs(float(F_of(S_MAX)) - 1.5)
    m = {"max_residual": resid, "F0_error": f0, "Fend_error": fend}
    ok = resid <= 1e-12 and f0 <= 1e-12 and fend <= 1e-12
    return ok, m, {"c01_constitutive": _metric_table(m)}


def check_superheating(seed: int, rec: Records):
    s = SETUP[2]
    data = BoundaryData.slab(slab_grid(s["width"], s["cells"]), s["b"])
    res = continue_mu(LIMIT, s["lambda"], INFINITY, data)
    rec.note_continuation("C02 LIMIT", res)
    err = abs(res.mu_star - 0.527046)
    m = {"mu_star": res.mu_star, "error": err, "bracket_width": res.bracket[1] - res.bracket[0]}
    return err <= 1e-3, m, {"c02_continuation": ResultsTable.from_csv(res.csv()), "c02_summary": _metric_table(m)}


def check_threshold(seed: int, rec: Records):
    s = SETUP[3]
    data = BoundaryData.slab(slab_grid(s["width"], s["cells"]), s["b"])
    res = continue_mu(FULL, s["lambda"], s["kappa"], data)
    rec.note_continuation("C03 FULL", res)
    # the margin reported by the solver is min(f^2 - |A|^2) - 1/3
    dev = abs(res.last_margin)
    m = {"mu_star": res.mu_star, "margin_minus_third": res.last_margin, "deviation": dev}
    return dev <= 5e-3, m, {"c03_continuation": ResultsTable.from_csv(res.csv()), "c03_summary": _metric_table(m)}


def check_rates(seed: int, rec: Records):
    """Criteria 4, 5 and 6 share the sweep; returns three results."""
    s = SETUP[4]
    data = BoundaryData.slab(slab_grid(s["width"], s["cells"]), s["b"])
    t0 = time.perf_counter()
    fit = kappa_sweep(s["lambda"], data, s["kappas"])
    t_sweep = time.perf_counter() - t0
    rec.curl_bounds += [(f"C04 kappa={k}", b) for k, b in zip(["inf"] + list(fit.kappas), fit.curl_bounds)]
    sl = fit.fitted_slopes
    m4 = {"slope_l2": sl["l2"], "slope_h1": sl["h1"], "slope_h2": sl["h2"]}
    ok4 = (-1.7 <= sl["l2"] <= -1.3) and (-0.7 <= sl["h1"] <= -0.3) and (0.3 <= sl["h2"] <= 0.7)
    sweep = ResultsTable.from_csv(fit.csv())
    sups = fit.sup_differences
    m5 = {"sup_first": sups[0], "sup_last": sups[-1]}
    ok5 = sups[-1] < sups[0] and sups[-1] <= 1e-2
    sup_table = ResultsTable(("kappa", "sup_difference"), [(float(k), float(v)) for k, v in zip(fit.kappas, sups)])
    t0 = time.perf_counter()
    cr = corrector_rates(s["lambda"], data, s["kappas"])
    t_corr = time.perf_counter() - t0
    wall = max(cr["wall_derivative"])
    m6 = {"slope_l2": cr["slope"], "max_wall_derivative": wall}
    ok6 = -1.7 <= cr["slope"] <= -1.3 and wall <= 1e-8
    corr = ResultsTable(("kappa", "l2", "wall_derivative"),
                        [(float(k), float(a), float(b)) for k, a, b in zip(cr["kappas"], cr["l2"], cr["wall_derivative"])])
    return [
        (4, ok4, m4, {"c04_kappa_sweep": sweep, "c04_slopes": _metric_table(m4)}, t_sweep),
        (5, ok5, m5, {"c05_sup": sup_table}, t_sweep),
        (6, ok6, m6, {"c06_corrector": corr}, t_corr),
    ]


def check_lambda_limit(seed: int, rec: Records):
    s = SETUP[7]
    grid = slab_grid(s["width"], s["cells"])
    rows = lambda_sweep(lambda lam: BoundaryData.slab(grid, s["b"]), s["lambdas"], kappa=s["kappa"])
    for r in rows:
        rec.note_continuation(f"C07 LIMIT lam={r.lam}", r.results[0])
    rec.note_continuation(f"C07 FULL lam={rows[-1].lam} kappa={s['kappa']}", rows[-1].results[1])
    errs = [r.error for r in rows]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    final = errs[-1]
    gap = rows[-1].mu_star_full - (rows[-1].mu_star - 0.01)
    m = {"errors": "/".join(f"{e:.4g}" for e in errs), "final_error": final,
         "mu_star_full": rows[-1].mu_star_full, "liminf_gap": gap}
    ok = decreasing and final <= 0.02 and gap >= 0
    table = ResultsTable(("lambda", "mu_star", "error"), [(r.lam, r.mu_star, r.error) for r in rows])
    table.append((rows[-1].lam, rows[-1].mu_star_full, abs(rows[-1].mu_star_full - H_SUPERHEATING / s["b"])))
    return ok, m, {"c07_lambda_sweep": table}


def check_bounds(rec: Records):
    worst = max((b for _, b in rec.curl_bounds), default=0.0)
    bad = [src for src, b in rec.curl_bounds if not b <= CURL_CAP]
    ub_bad = [src for src, mu, ub in rec.mu_bounds if not mu <= ub]
    m = {"states": len(rec.curl_bounds), "max_curl_bound": worst, "cap": CURL_CAP,
         "violations": len(bad), "upper_bound_violations": len(ub_bad)}
    table = ResultsTable(("source", "curl_bound"), [(s.replace(",", ";"), float(b)) for s, b in rec.curl_bounds])
    ubt = ResultsTable(("source", "mu_star", "upper_bound"),
                       [(s.replace(",", ";"), float(mu), float(ub)) for s, mu, ub in rec.mu_bounds])
    note = ""
    if bad:
        first = sorted({s.split(" mu=")[0] for s in bad})
        note = "exceeded by " + "; ".join(first)
    return not bad and not ub_bad and rec.curl_bounds != [], m, {"c08_curl_bounds": table, "c08_upper_bounds": ubt}, note


def _uniqueness_problem():
    s = SETUP[9]
    g = slab_grid(s["width"], s["cells"])
    return g, BoundaryData.slab(g, s["b"]), GLParameters(s["lambda"], s["kappa"], 1.0)


def check_uniqueness(seed: int, rec: Records):
    g, data, p = _uniqueness_problem()
    rng = np.random.default_rng(seed)
    base, _ = solve_full_FH(p, data)
    nN = g.size(Placement.NODE)
    sols = []
    table = ResultsTable(("start", "iterations", "f_wall", "rel_diff_to_first"))
    for k in range(SETUP[9]["starts"]):
        f0 = rng.uniform(0.6, 1.0, nN)
        H0 = base.H.flat() * rng.uniform(0.5, 1.5) + 0.02 * rng.standard_normal(base.H.flat().size)
        init = MeissnerStateFH(ScalarField.from_flat(g, Placement.NODE, f0),
                               VectorField.from_flat(g, Placement.EDGE, H0), p, data, False)
        st, rep = solve_full_FH(p, data, init=init)
        rec.note_state(f"C09 start {k}", st)
        x = np.concatenate([st.f.flat(), st.H.flat()])
        sols.append(x)
        table.append((k, rep.iterations, float(st.f.flat()[0]),
                      float(np.linalg.norm(x - sols[0]) / np.linalg.norm(sols[0]))))
    worst = max(float(np.linalg.norm(a - b) / np.linalg.norm(b)) for a in sols for b in sols)
    m = {"starts": len(sols), "max_pairwise_rel_l2": worst}
    return worst <= 1e-8, m, {"c09_uniqueness": table}


def check_stability(seed: int, rec: Records):
    g, data, p = _uniqueness_problem()
    st, _ = solve_full_FH(p, data)
    fa = recover_A(st)
    ext = data.extension
    E0 = omega_energy(fa.f, fa.A, ext, p).total
    rng = np.random.default_rng(seed + 1)
    amp = SETUP[10]["amplitude"]
    wall = g.wall_face_mask
    nF = g.offsets(Placement.FACE)[-1]
    deltas = []
    for _ in range(SETUP[10]["samples"]):
        # f perturbations are unconstrained (Neumann is natural); A keeps zero normal trace
        df = rng.uniform(-amp, amp, g.size(Placement.NODE))
        dA = rng.uniform(-amp, amp, nF)
        dA[wall] = 0.0
        E = omega_energy(ScalarField.from_flat(g, Placement.NODE, fa.f.flat() + df),
                         VectorField.from_flat(g, Placement.FACE, fa.A.flat() + dA), ext, p).total
        deltas.append(E - E0)
    m = {"margin": fa.margin, "energy": E0, "min_energy_change": min(deltas)}
    ok = fa.margin > 0.05 and min(deltas) >= -1e-12
    table = ResultsTable(("sample", "energy_change"), [(i, float(d)) for i, d in enumerate(deltas)])
    return ok, m, {"c10_stability": table}


def check_discrete_calculus(seed: int, rec: Records):
    s = SETUP[11]
    rng = np.random.default_rng(seed + 2)
    # unit spacing: stencil entries are +-1, so the identities are tested at roundoff scale
    g = build_grid(3, s["cells"], spacing=(1.0, 1.0, 1.0), boundary=("PERIODIC", "PERIODIC", "WALL"))
    nN = g.size(Placement.NODE)
    nE = g.offsets(Placement.EDGE)[-1]
    cg = dc = 0.0
    for _ in range(s["fields"]):
        phi = ScalarField.from_flat(g, Placement.NODE, rng.standard_normal(nN))
        cg = max(cg, float(np.max(np.abs(apply_diff("CURL", apply_diff("GRAD", phi)).flat()))))
        u = VectorField.from_flat(g, Placement.EDGE, rng.standard_normal(nE))
        dc = max(dc, float(np.max(np.abs(apply_diff("DIV", apply_diff("CURL", u)).flat()))))
    orth = recon = 0.0
    for placement in (Placement.EDGE, Placement.FACE):
        n = g.offsets(placement)[-1]
        for _ in range(3):
            A = VectorField.from_flat(g, placement, rng.standard_normal(n))
            p, B = hodge_decompose(A)
            if placement is Placement.EDGE:
                gp = apply_diff("GRAD", p).flat()
            else:
                gp = A.flat() - B.flat()
            G = VectorField.from_flat(g, placement, gp)
            nA = math.sqrt(inner(A, A))
            orth = max(orth, abs(inner(G, B)) / nA ** 2)
            recon = max(recon, float(np.max(np.abs(A.flat() - gp - B.flat()))) / nA)
            if placement is Placement.FACE:
                # the FACE split is exact by construction; check div B instead
                recon = max(recon, float(np.max(np.abs(apply_diff("DIV", B).flat()))) / nA)
    slopes = operator_convergence(s["refinement"])
    m = {"curl_grad": cg, "div_curl": dc, "hodge_orthogonality": orth, "hodge_reconstruction": recon,
         **{f"order_{k.lower()}": v for k, v in slopes.items()}}
    ok = cg <= 1e-13 and dc <= 1e-13 and orth <= 1e-10 and recon <= 1e-10 and \
        all(abs(v - 2.0) <= 0.2 for v in slopes.values())
    return ok, m, {"c11_discrete_calculus": _metric_table(m)}


def check_oracle_3d(seed: int, rec: Records):
    s = SETUP[12]
    g = build_grid(3, s["cells"], lengths=s["lengths"], boundary=("PERIODIC", "PERIODIC", "WALL"))
    data = BoundaryData.slab(g, s["b"])
    p = GLParameters(s["lambda"], s["kappa"], 1.0)
    st, rep = solve_full_FH(p, data)
    rec.note_state("C12 3D", st)
    fa = recover_A(st)
    sol = solve_full_ode(SlabProblem(s["lambda"], s["b"], s["kappa"], n=8000))
    Lz = s["lengths"][2]

    def dist(z):
        return np.minimum(z, Lz - z)

    def side(z):
        # the field from the far wall is mirrored, so odd quantities flip sign
        return np.where(z < Lz / 2, 1.0, -1.0)

    zn = g.coords(Placement.NODE)[2]
    f_ref, _ = sol.sample(dist(zn))
    ef = float(np.max(np.abs(st.f.values - f_ref)))
    zf = g.coords(Placement.FACE, 1)[2]
    _, a_ref = sol.sample(dist(zf))
    Ay = fa.A.components[1]
    eA = min(float(np.max(np.abs(Ay - side(zf) * a_ref))), float(np.max(np.abs(Ay + side(zf) * a_ref))))
    # H_x = lam * a' on the slab; sampled at its own edges
    ze = g.coords(Placement.EDGE, 0)[2]
    x = sol.x
    h_line = -s["lambda"] * sol.ap
    h_ref = np.interp(dist(ze), x, h_line)
    Hx = st.H.components[0]
    eH = float(np.max(np.abs(Hx - h_ref)))
    div = divergence_defect(st.H)
    m = {"max_f_error": ef, "max_A_error": eA, "max_H_error": eH, "max_divergence": div,
         "iterations": rep.iterations}
    ok = max(ef, eA, eH) <= 2e-3 and div <= 1e-10
    line = ResultsTable(("z", "f", "f_oracle"),
                        [(float(z), float(f), float(fr)) for z, f, fr in
                         zip(zn[0, 0], st.f.values[0, 0], np.broadcast_to(f_ref, st.f.values.shape)[0, 0])])
    return ok, m, {"c12_profile": line, "c12_summary": _metric_table(m)}


def check_equivalence(seed: int, rec: Records):
    s = SETUP[13]
    g = slab_grid(s["width"], s["cells"])
    data = BoundaryData.slab(g, s["b"])
    for k in s["kappas"]:
        st, _ = solve_full_FH(GLParameters(s["lambda"], k, 1.0), data)
        rec.note_state(f"C13 kappa={k:g}", st)
    worst_c = max(c for _, c, _ in rec.equivalence)
    worst_a = max(a for _, _, a in rec.equivalence)
    m = {"states": len(rec.equivalence), "max_curl_defect": worst_c, "max_a_equation": worst_a}
    table = ResultsTable(("source", "curl_defect", "a_equation"),
                         [(src.replace(",", ";"), float(c), float(a)) for src, c, a in rec.equivalence])
    return worst_c <= 1e-8 and worst_a <= 1e-7, m, {"c13_equivalence": table}


def check_exterior(seed: int, rec: Records):
    s = SETUP[14]
    L = s["l_max"]
    q = quadrature(L)
    ratio = 0.0
    for l in range(1, L + 1):
        for mm in range(-l, l + 1):
            v = SphericalHarmonicCoeffs.single("GRAD_S", l, mm, 1.0, l_max=L)
            out = scalar_transform(sigma_dtn_sampled(v.tangential_on_sphere(q.points), L), L)
            ratio = max(ratio, abs(out.Y[lm_index(l, mm)] + (l + 1)))
    phi_mu = solve_exterior_scalar(SphericalHarmonicCoeffs.zeros(L), 1.0)
    flux = max(abs(scalar_flux(phi_mu, r) - 1.0) for r in (1.0, 2.0, 5.0))
    slopes = []
    for l in range(1, L + 1):
        sol = solve_exterior_scalar(SphericalHarmonicCoeffs.single("GRAD_S", l, 0, 1.0, l_max=L), 0.0)
        slopes.append(abs(decay_slope(sol, s["radii"]) + (l + 1)))
    rng = np.random.default_rng(seed + 3)
    grad = np.zeros((L + 1) ** 2)
    grad[1:] = rng.standard_normal(grad.size - 1) / np.arange(1, grad.size) ** 1.5
    phi0 = solve_exterior_scalar(SphericalHarmonicCoeffs.zeros(L).replace(GRAD_S=grad), 0.0)
    vdata = SphericalHarmonicCoeffs.zeros(L).replace(CROSS=toroidal_coefficients(phi0))
    u = solve_exterior_curl_source(phi0, vdata)
    curl = curl_identity_defect(u, phi0)
    try:
        solve_exterior_curl_source(phi0, vdata.replace(CROSS=-toroidal_coefficients(phi0)))
        detected = False
    except Incompatible:
        detected = True
    m = {"sigma_ratio_error": ratio, "flux_error": flux, "max_decay_slope_error": max(slopes),
         "curl_identity": curl, "incompatible_detected": detected}
    ok = ratio <= 1e-10 and flux <= 1e-10 and max(slopes) <= 0.05 and curl <= 1e-10 and detected
    return ok, m, {"c14_exterior": _metric_table(m)}


SIMPLE = {
    1: check_constitutive,
    2: check_superheating,
    3: check_threshold,
    7: check_lambda_limit,
    9: check_uniqueness,
    10: check_stability,
    11: check_discrete_calculus,
    12: check_oracle_3d,
    14: check_exterior,
}
# rerun for the determinism check: seeded and cheap
DETERMINISM_SET = (1, 9, 10, 11, 14)
ALL = tuple(range(1, 16))


def _run_unit(unit, seed: int):
    """One independent unit of work; returns (results, records)."""
    rec = Records()
    out = []
    if unit == "rates":
        for num, ok, m, tables, rt in check_rates(seed, rec):
            out.append(_finish(num, ok, m, tables, rt))
        return out, rec
    (ok, m, tables), rt = _timed(SIMPLE[unit], seed, rec)
    out.append(_finish(unit, ok, m, tables, rt))
    return out, rec


def _finish(num, ok, m, tables, rt, note="") -> CriterionResult:
    budget = BUDGET.get(num)
    if budget is not None and rt > budget:
        ok = False
        note = (note + "; " if note else "") + f"runtime {rt:.1f} s over {budget:.0f} s"
    return CriterionResult(num, TITLES[num], bool(ok), m, rt, tables, note)


def _bodies(results) -> dict:
    return {stem: t.body() for r in results for stem, t in r.tables.items()}


def run_acceptance(only=None, seed: int = 0, jobs: int = 1, out_dir=None, echo=None) -> list:
    """Run the selected criteria (default all) and return their results in order.

    ``out_dir`` receives one CSV per result table plus ``acceptance.csv``.
    ``echo`` is called with each pass/fail line as results arrive.
    """
    wanted = sorted(set(only or ALL))
    units = []
    if any(n in wanted for n in (4, 5, 6)):
        units.append("rates")
    units += [n for n in SIMPLE if n in wanted]
    # criteria 8 and 13 audit 2-7 and 9/12; make sure the evidence exists
    if 8 in wanted:
        for n in (2, 3, 7):
            if n not in units:
                units.append(n)
        if "rates" not in units:
            units.append("rates")
    if 13 in wanted:
        for n in (9, 12):
            if n not in units:
                units.append(n)
    if 15 in wanted:
        for n in DETERMINISM_SET:
            if n not in units:
                units.append(n)

    rec = Records()
    results: dict[int, CriterionResult] = {}
    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_run_unit, units, [seed] * len(units)))
    else:
        outs = [_run_unit(u, seed) for u in units]
    for res_list, r in outs:
        rec.merge(r)
        for res in res_list:
            results[res.number] = res

    if 8 in wanted:
        (ok, m, tables, note), rt = _timed(check_bounds, rec)
        results[8] = _finish(8, ok, m, tables, rt, note)
    if 13 in wanted:
        (ok, m, tables), rt = _timed(check_equivalence, seed, rec)
        results[13] = _finish(13, ok, m, tables, rt)
    if 15 in wanted:
        t0 = time.perf_counter()
        first = _bodies(results[n] for n in DETERMINISM_SET)
        again = _bodies(r for n in DETERMINISM_SET for r in _run_unit(n, seed)[0])
        same = sorted(k for k in first if first[k] == again.get(k))
        m = {"tables": len(first), "identical": len(same)}
        results[15] = _finish(15, len(same) == len(first) and first != {}, m,
                              {}, time.perf_counter() - t0)

    ordered = [results[n] for n in wanted]
    if out_dir is not None:
        write_results(ordered, out_dir, seed)
    if echo is not None:
        for r in ordered:
            echo(r.line())
    return ordered


def summary_table(results) -> ResultsTable:
    t = ResultsTable(("criterion", "title", "passed"))
    for r in results:
        t.append((r.number, r.title.replace(",", ";"), r.passed))
    return t


def write_results(results, out_dir, seed: int) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in results:
        for stem, table in sorted(r.tables.items()):
            table.provenance["criterion"] = r.number
            table.stamp({"criterion": r.number, "seed": seed, "setup": SETUP.get(r.number)}, r.runtime)
            paths.append(table.write(out / f"{stem}.csv"))
    summ = summary_table(results).stamp({"seed": seed, "criteria": [r.number for r in results]},
                                        sum(r.runtime for r in results))
    paths.append(summ.write(out / "acceptance.csv"))
    return paths
