"""``meissner-lab`` command line driver.

Config files are JSON objects with a ``kind`` and the keys listed in
``SCHEMA`` for that kind; anything else is rejected before a solve starts.
Examples::

    {"kind": "ORACLE", "lambda": 0.1, "b": 0.5}
    {"kind": "CONTINUATION", "system": "LIMIT", "lambda": 0.02,
     "geometry": {"dims": 1, "cells": 1200, "length": 0.6},
     "data": {"shape": "SLAB", "amplitude": 1.0}}

Exit status: 0 success, 2 invalid config, 3 solver failure, 4 failed
acceptance check.  Any nonzero exit prints an error JSON on stderr and, when
the output directory is known, writes it to ``error.json``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import InvalidSpec, MeissnerLabError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 2, 3, 4
ENV_OUT = "MEISSNER_LAB_OUT"
DEFAULT_OUT = "meissner_lab_out"

KINDS = ("SOLVE", "CONTINUATION", "KAPPA_SWEEP", "LAMBDA_SWEEP", "EXTERIOR", "ORACLE", "ACCEPTANCE")
COMMON = {"kind", "seed", "output"}
SCHEMA = {
    "ORACLE": ({"lambda", "b"}, {"kappa", "L", "n"}),
    "SOLVE": ({"lambda", "geometry", "data"}, {"kappa", "mu"}),
    "CONTINUATION": ({"lambda", "geometry", "data", "system"}, {"kappa", "schedule"}),
    "KAPPA_SWEEP": ({"lambda", "kappas", "geometry", "data"}, {"mu"}),
    "LAMBDA_SWEEP": ({"lambdas", "geometry", "data"}, {"kappa", "schedule"}),
    "EXTERIOR": ({"flux"}, {"l_max", "modes", "radii"}),
    "ACCEPTANCE": (set(), {"criteria", "jobs"}),
}
GEOMETRY_KEYS = {"dims", "cells", "length", "lengths", "boundary"}
DATA_KEYS = {"shape", "amplitude", "direction"}
SCHEDULE_KEYS = {"mu_start", "mu_step", "margin_tol", "mu_tol", "max_steps"}
MODE_KEYS = {"basis", "l", "m", "value"}


def _fail(msg: str, path: str):
    raise InvalidSpec(msg, field=path)


def _number(cfg: dict, key: str, path: str, positive=False, allow_inf=False) -> float:
    v = cfg[key]
    if allow_inf and isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{path} must be a number", path)
    v = float(v)
    if not math.isfinite(v) and not allow_inf:
        _fail(f"{path} must be finite", path)
    if positive and not v > 0:
        _fail(f"{path} must be positive", path)
    return v


def _keys(obj, required: set, optional: set, path: str) -> None:
    if not isinstance(obj, dict):
        _fail(f"{path or 'config'} must be an object", path or "$")
    for k in sorted(required - set(obj)):
        _fail(f"missing required key {k!r}", f"{path}.{k}" if path else k)
    for k in sorted(set(obj) - required - optional):
        _fail(f"unknown key {k!r}", f"{path}.{k}" if path else k)


@dataclass
class RunConfig:
    """Validated config; ``to_dict`` gives the canonical JSON form."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None

    @classmethod
    def from_dict(cls, cfg) -> "RunConfig":
        if not isinstance(cfg, dict):
            _fail("config must be a JSON object", "$")
        if "kind" not in cfg:
            _fail("missing required key 'kind'", "kind")
        kind = str(cfg["kind"]).upper()
        if kind not in KINDS:
            _fail(f"kind must be one of {', '.join(KINDS)}", "kind")
        req, opt = SCHEMA[kind]
        _keys(cfg, req | {"kind"}, opt | COMMON, "")
        seed = cfg.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            _fail("seed must be a nonnegative integer", "seed")
        output = cfg.get("output")
        if output is not None and not isinstance(output, str):
            _fail("output must be a path string", "output")
        params = {k: v for k, v in cfg.items() if k not in COMMON}
        out = cls(kind, params, seed, output)
        out.validate()
        return out

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed, **self.params}
        if self.output is not None:
            d["output"] = self.output
        return d

    # -- validation against module preconditions --------------------------

    def validate(self) -> None:
        p = self.params
        if "lambda" in p:
            _number(p, "lambda", "lambda", positive=True)
        if "kappa" in p:
            k = _number(p, "kappa", "kappa", positive=True, allow_inf=True)
            if self.kind == "CONTINUATION" and str(p.get("system", "")).upper() == "FULL" and math.isinf(k):
                _fail("FULL continuation needs a finite kappa", "kappa")
        if "mu" in p:
            mu = _number(p, "mu", "mu")
            if mu < 0:
                _fail("mu must be nonnegative", "mu")
        if "b" in p:
            if _number(p, "b", "b") < 0:
                _fail("b must be nonnegative", "b")
        for key in ("L",):
            if key in p:
                _number(p, key, key, positive=True)
        if "n" in p and (isinstance(p["n"], bool) or not isinstance(p["n"], int)):
            _fail("n must be an integer", "n")
        if "system" in p and str(p["system"]).upper() not in ("FULL", "LIMIT"):
            _fail("system must be FULL or LIMIT", "system")
        if self.kind == "CONTINUATION" and str(p["system"]).upper() == "FULL" and "kappa" not in p:
            _fail("FULL continuation needs kappa", "kappa")
        if "geometry" in p:
            self._geometry(p["geometry"])
        if "data" in p:
            _keys(p["data"], {"shape", "amplitude"}, {"direction"}, "data")
            if str(p["data"]["shape"]).upper() != "SLAB":
                _fail("data.shape must be SLAB", "data.shape")
            if _number(p["data"], "amplitude", "data.amplitude") < 0:
                _fail("data.amplitude must be nonnegative", "data.amplitude")
            if p["data"].get("direction", 0) not in (0, 1):
                _fail("data.direction must be 0 or 1", "data.direction")
        if "schedule" in p:
            _keys(p["schedule"], set(), SCHEDULE_KEYS, "schedule")
            for k in SCHEDULE_KEYS & set(p["schedule"]):
                _number(p["schedule"], k, f"schedule.{k}")
            from .superheating import ContinuationSchedule
            ContinuationSchedule(**p["schedule"])
        for key in ("kappas", "lambdas", "radii"):
            if key in p:
                vals = p[key]
                if not isinstance(vals, list) or len(vals) < 2:
                    _fail(f"{key} must be a list of at least two numbers", key)
                for i in range(len(vals)):
                    _number(vals, i, f"{key}[{i}]", positive=True)
        if "kappas" in p:
            from .constitutive import GLParameters
            for i, k in enumerate(p["kappas"]):
                try:
                    GLParameters(float(p["lambda"]), float(k)).require_estimate_regime()
                except InvalidSpec:
                    _fail("kappas must be at least max(1, lambda)", f"kappas[{i}]")
        if "flux" in p:
            _number(p, "flux", "flux")
        if "l_max" in p and (isinstance(p["l_max"], bool) or not isinstance(p["l_max"], int) or p["l_max"] < 1):
            _fail("l_max must be a positive integer", "l_max")
        if "modes" in p:
            if not isinstance(p["modes"], list):
                _fail("modes must be a list", "modes")
            from .exterior_sphere import DEFAULT_LMAX
            l_max = p.get("l_max", DEFAULT_LMAX)
            for i, mode in enumerate(p["modes"]):
                _keys(mode, MODE_KEYS, set(), f"modes[{i}]")
                # the exterior scalar problem takes tangential gradient data only
                if str(mode["basis"]).upper() != "GRAD_S":
                    _fail("basis must be GRAD_S", f"modes[{i}].basis")
                l, m = mode["l"], mode["m"]
                if not (isinstance(l, int) and isinstance(m, int) and 0 <= l <= l_max and abs(m) <= l):
                    _fail("need integers 0 <= l <= l_max and |m| <= l", f"modes[{i}]")
                _number(mode, "value", f"modes[{i}].value")
        if "criteria" in p:
            c = p["criteria"]
            if not isinstance(c, list) or not all(isinstance(n, int) and 1 <= n <= 15 for n in c):
                _fail("criteria must list integers 1..15", "criteria")
        if "jobs" in p and (not isinstance(p["jobs"], int) or p["jobs"] < 1):
            _fail("jobs must be a positive integer", "jobs")

    @staticmethod
    def _geometry(geo) -> None:
        _keys(geo, {"dims", "cells"}, GEOMETRY_KEYS, "geometry")
        if geo["dims"] == 1:
            if "length" not in geo:
                _fail("1D geometry needs length", "geometry.length")
            _number(geo, "length", "geometry.length", positive=True)
            if not isinstance(geo["cells"], int) or geo["cells"] < 4:
                _fail("cells must be an integer >= 4", "geometry.cells")
        elif geo["dims"] == 3:
            if "lengths" not in geo:
                _fail("3D geometry needs lengths", "geometry.lengths")
            cells, lengths = geo["cells"], geo["lengths"]
            if not (isinstance(cells, list) and len(cells) == 3 and all(isinstance(c, int) and c >= 2 for c in cells)):
                _fail("cells must be three integers >= 2", "geometry.cells")
            if not (isinstance(lengths, list) and len(lengths) == 3):
                _fail("lengths must have three entries", "geometry.lengths")
            for i in range(3):
                _number(lengths, i, f"geometry.lengths[{i}]", positive=True)
            bnd = geo.get("boundary", ["PERIODIC", "PERIODIC", "WALL"])
            if not (isinstance(bnd, list) and len(bnd) == 3 and all(str(b).upper() in ("WALL", "PERIODIC") for b in bnd)):
                _fail("boundary must be three of WALL/PERIODIC", "geometry.boundary")
            if not any(str(b).upper() == "WALL" for b in bnd):
                _fail("at least one axis must be a wall", "geometry.boundary")
        else:
            _fail("dims must be 1 or 3", "geometry.dims")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidSpec(f"cannot read config: {exc}", field="$") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"config is not valid JSON: {exc.msg} at line {exc.lineno}", field="$") from exc
    return RunConfig.from_dict(cfg)


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------

def _grid(geo):
    from .discrete_calculus import build_grid
    if geo["dims"] == 1:
        return build_grid(1, geo["cells"], lengths=float(geo["length"]), boundary=geo.get("boundary"))
    return build_grid(3, geo["cells"], lengths=geo["lengths"],
                      boundary=[str(b).upper() for b in geo.get("boundary", ["PERIODIC", "PERIODIC", "WALL"])])


def _data(p):
    from .interior_solver import BoundaryData
    d = p["data"]
    return BoundaryData.slab(_grid(p["geometry"]), float(d["amplitude"]), int(d.get("direction", 0)))


def _kappa(p, default=math.inf) -> float:
    if "kappa" not in p:
        return default
    k = p["kappa"]
    return math.inf if isinstance(k, str) else float(k)


def _schedule(p):
    from .superheating import ContinuationSchedule
    return ContinuationSchedule(**p.get("schedule", {}))


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _clean(obj):
    """Replace non-finite floats so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def run_oracle(cfg: RunConfig, out: Path, jobs: int):
    from .oned_oracle import SlabProblem, solve_full_ode, solve_limit_ode
    from .tables import ResultsTable
    p = cfg.params
    kwargs = {k: p[k] for k in ("L", "n") if k in p}
    prob = SlabProblem(float(p["lambda"]), float(p["b"]), _kappa(p), **kwargs)
    sol = solve_limit_ode(prob) if math.isinf(prob.kappa) else solve_full_ode(prob)
    table = ResultsTable.from_csv(sol.profile_csv())
    summary = sol.summary()
    return {"profile": table}, summary, []


def run_solve(cfg: RunConfig, out: Path, jobs: int):
    from .constitutive import GLParameters
    from .interior_solver import (MeissnerStateFH, equivalence_residuals, limit_density, limit_state,
                                  recover_A, save_state, solve_full_FH, solve_limit_H)
    p = cfg.params
    data = _data(p)
    params = GLParameters(float(p["lambda"]), _kappa(p), float(p.get("mu", 1.0)))
    if params.is_limit:
        H, rep = solve_limit_H(params, data)
        fa = limit_state(H, params, data)
        state = MeissnerStateFH(limit_density(fa.A), H, params, data)
        eq = {}
    else:
        state, rep = solve_full_FH(params, data)
        eq = equivalence_residuals(recover_A(state), state.H)
    files = [str(q.name) for q in save_state(state, out, "state", rep)]
    summary = {"system": "LIMIT" if params.is_limit else "FULL", "report": rep.to_dict(),
               "equivalence": eq, "files": files}
    return {}, summary, []


def run_continuation(cfg: RunConfig, out: Path, jobs: int):
    from .superheating import continue_mu
    from .tables import ResultsTable
    p = cfg.params
    system = str(p["system"]).upper()
    res = continue_mu(system, float(p["lambda"]), _kappa(p), _data(p), _schedule(p))
    table = ResultsTable.from_csv(res.csv())
    summary = res.summary()
    summary["slopes"] = {}
    plot = ("continuation", {"x": "mu", "y": ["margin"], "title": f"{system} continuation",
                             "marker_x": res.mu_star})
    return {"continuation": table}, summary, [plot]


def run_kappa_sweep(cfg: RunConfig, out: Path, jobs: int):
    from .superheating import kappa_sweep
    from .tables import ResultsTable
    p = cfg.params
    fit = kappa_sweep(float(p["lambda"]), _data(p), p["kappas"], float(p.get("mu", 1.0)))
    table = ResultsTable.from_csv(fit.csv())
    summary = {"slopes": fit.fitted_slopes, "sup_differences": fit.sup_differences,
               "curl_bounds": fit.curl_bounds}
    plot = ("kappa_sweep", {"x": "kappa", "y": ["l2_f", "l2_A"], "xlog": True, "ylog": True,
                            "title": "distance to the limit state", "reference_slope": -1.5})
    return {"kappa_sweep": table}, summary, [plot]


def run_lambda_sweep(cfg: RunConfig, out: Path, jobs: int):
    from .superheating import lambda_sweep
    from .tables import ResultsTable
    p = cfg.params
    data = _data(p)
    kappa = _kappa(p, None) if "kappa" in p else None
    rows = lambda_sweep(lambda lam: data, p["lambdas"], _schedule(p), kappa)
    table = ResultsTable(("lambda", "mu_star", "error"), [(r.lam, r.mu_star, r.error) for r in rows])
    summary = {"rows": [{"lambda": r.lam, "mu_star": r.mu_star, "error": r.error,
                         "mu_star_full": r.mu_star_full, "kappa": r.kappa} for r in rows]}
    plot = ("lambda_sweep", {"x": "lambda", "y": ["error"], "xlog": True, "ylog": True,
                             "title": "distance of mu* to the half-space value"})
    return {"lambda_sweep": table}, summary, [plot]


def run_exterior(cfg: RunConfig, out: Path, jobs: int):
    from .exterior_sphere import (DEFAULT_LMAX, SphericalHarmonicCoeffs, decay_slope, scalar_flux,
                                  solve_exterior_scalar)
    from .tables import ResultsTable
    p = cfg.params
    l_max = int(p.get("l_max", DEFAULT_LMAX))
    v = SphericalHarmonicCoeffs.zeros(l_max)
    for mode in p.get("modes", []):
        v = v.replace(**{str(mode["basis"]).upper(): _set(v, mode)})
    sol = solve_exterior_scalar(v, float(p["flux"]))
    radii = [float(r) for r in p.get("radii", [2.0, 4.0, 8.0, 16.0])]
    table = ResultsTable.from_csv(v.to_csv())
    summary = {"flux": scalar_flux(sol, 1.0), "l_max": l_max}
    if float(p["flux"]) == 0.0 and any(m["value"] for m in p.get("modes", [])):
        summary["decay_slope"] = decay_slope(sol, radii)
    return {"coefficients": table}, summary, []


def _set(v, mode):
    from .exterior_sphere import lm_index
    arr = getattr(v, str(mode["basis"]).upper()).copy()
    arr[lm_index(int(mode["l"]), int(mode["m"]))] = float(mode["value"])
    return arr


def run_acceptance_kind(cfg: RunConfig, out: Path, jobs: int):
    from .acceptance import run_acceptance, summary_table
    p = cfg.params
    results = run_acceptance(p.get("criteria"), seed=cfg.seed, jobs=int(p.get("jobs", jobs)),
                             out_dir=out, echo=print)
    failed = [r.number for r in results if not r.passed]
    summary = {"passed": [r.number for r in results if r.passed], "failed": failed,
               "metrics": {f"C{r.number:02d}": r.metrics for r in results}}
    return {}, summary, [], failed


RUNNERS = {
    "ORACLE": run_oracle,
    "SOLVE": run_solve,
    "CONTINUATION": run_continuation,
    "KAPPA_SWEEP": run_kappa_sweep,
    "LAMBDA_SWEEP": run_lambda_sweep,
    "EXTERIOR": run_exterior,
}


def _out_dir(cli_out, cfg: RunConfig | None) -> Path:
    if cli_out:
        return Path(cli_out)
    if cfg is not None and cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(ENV_OUT) or DEFAULT_OUT)


def execute(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    """Run a validated config, write artifacts into ``out`` and return the exit status."""
    from .plotting import emit_plot
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    _write(out / "config.json", _json(cfg.to_dict()))
    if cfg.kind == "ACCEPTANCE":
        _, summary, _, failed = run_acceptance_kind(cfg, out, jobs)
        _write(out / "summary.json", _json(_clean(summary)))
        if failed:
            err = {"error": "AcceptanceFailure", "code": "acceptance_failure",
                   "message": f"criteria failed: {failed}", "failed": failed}
            _report_error(err, out)
            return EXIT_ACCEPTANCE
        return EXIT_OK
    tables, summary, plots = RUNNERS[cfg.kind](cfg, out, jobs)
    wall = time.perf_counter() - t0
    for stem, table in tables.items():
        table.stamp(cfg.to_dict(), wall).write(out / f"{stem}.csv")
    for stem, spec in plots:
        _write(out / f"{stem}.svg", emit_plot(tables[stem], spec))
    text = _json(_clean(summary))
    _write(out / "summary.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _report_error(err: dict, out: Path | None) -> None:
    text = json.dumps(_clean(err), indent=2, sort_keys=True, default=str)
    sys.stderr.write(text + "\n")
    if out is not None:
        try:
            _write(out / "error.json", text + "\n")
        except OSError:
            pass


def _error_dict(exc: MeissnerLabError) -> dict:
    d = exc.to_dict()
    d.setdefault("error", type(exc).__name__)
    return d


def cmd_run(args) -> int:
    out = None
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = int(args.seed)
        out = _out_dir(args.out, cfg)
        return execute(cfg, out, args.jobs)
    except InvalidSpec as exc:
        _report_error(_error_dict(exc), out)
        return EXIT_CONFIG
    except MeissnerLabError as exc:
        _report_error(_error_dict(exc), out)
        return EXIT_SOLVER


def cmd_acceptance(args) -> int:
    only = None
    if args.only:
        try:
            only = [int(x) for x in args.only.split(",")]
        except ValueError:
            _report_error({"error": "InvalidSpec", "code": "invalid_spec",
                           "message": "--only takes comma-separated integers", "field": "only"}, None)
            return EXIT_CONFIG
    params = {"criteria": only} if only else {}
    try:
        cfg = RunConfig.from_dict({"kind": "ACCEPTANCE", "seed": args.seed or 0, **params})
    except InvalidSpec as exc:
        _report_error(_error_dict(exc), None)
        return EXIT_CONFIG
    out = _out_dir(args.out, cfg) / "acceptance"
    try:
        return execute(cfg, out, args.jobs)
    except MeissnerLabError as exc:
        _report_error(_error_dict(exc), out)
        return EXIT_SOLVER


def cmd_plot(args) -> int:
    from .plotting import emit_plot
    from .tables import ResultsTable
    out = Path(args.out) if args.out else Path(args.table).with_suffix(".svg")
    try:
        table = ResultsTable.read(args.table)
        try:
            spec = json.loads(Path(args.plotspec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidSpec(f"cannot read plot spec: {exc}", field="plotspec") from exc
        if not isinstance(spec, dict):
            raise InvalidSpec("plot spec must be a JSON object", field="plotspec")
        svg = emit_plot(table, spec)
    except OSError as exc:
        _report_error({"error": "InvalidSpec", "code": "invalid_spec", "message": str(exc),
                       "field": "table"}, None)
        return EXIT_CONFIG
    except MeissnerLabError as exc:
        _report_error(_error_dict(exc), None)
        return EXIT_CONFIG
    _write(out, svg)
    print(str(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="meissner-lab", description="Meissner state solvers and checks")
    ap.add_argument("--version", action="version", version=f"meissner-lab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for independent work")
    r.set_defaults(fn=cmd_run)
    a = sub.add_parser("acceptance", help="run the acceptance suite")
    a.add_argument("--out", help="output root; results go to <root>/acceptance")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--only", help="comma-separated criterion numbers")
    a.set_defaults(fn=cmd_acceptance)
    p = sub.add_parser("plot", help="render a results CSV as SVG")
    p.add_argument("table")
    p.add_argument("plotspec")
    p.add_argument("--out", help="SVG path (default: table path with .svg)")
    p.set_defaults(fn=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        _report_error({"error": "InvalidSpec", "code": "invalid_spec", "message": "--jobs must be >= 1",
                       "field": "jobs"}, None)
        return EXIT_CONFIG
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
