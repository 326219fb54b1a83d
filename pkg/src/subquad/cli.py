"""Command-line front end: ``subquad <command> [options]``.

Parameters are resolved with the precedence flags > JSON config (``--config``)
> built-in defaults.  Results go to ``--output`` if given, otherwise to
``$SUBQUAD_OUTPUT_DIR/<command>.<format>`` if that variable is set, otherwise
to stdout.  Exit status: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .domain_classifier import (FullGridSample, classify, decompose, membership_test,
                                reconstruct, regime_sweep_csv)
from .harmonics import ModeIndex, UnsupportedDimensionError, multiplicity, sphere_quadrature
from .inequalities import (default_members, family_sweep, gaussian_bump, hardy_extremal,
                           proof_constant, quasi_accretive_check, rellich_extremal, sweep_csv)
from .params import NumericalError, OperatorParams, ParameterError
from .radial_operator import ModeField, RadialGrid
from .semigroup import EvolutionSpec, evolve, growth_rate_fit, positivity_check
from .special_functions import build_profile, cutoff
from .spectral import eigen_lowest

OUTPUT_ENV = "SUBQUAD_OUTPUT_DIR"

DEFAULTS = {
    "N": 3, "alpha": 1.0, "c": 0.0, "p": 2.0,
    "R_max": 60.0, "M": 2000, "gamma": 3.0,
    "format": "json", "jobs": 1,
}

COMMANDS = {
    "classify": (
        "Regime of the L^p domain of S = -Delta + c|x|^-alpha: W^{2,p} when alpha < N/p; "
        "W^{2,p} + span{eta*phi} when N/p <= alpha < N/p + 1; W^{2,p} + span{eta*phi, phi_1..phi_N} "
        "when alpha >= N/p + 1.  Pass several --alphas / --ps for a CSV sweep table."),
    "phi": (
        "Correction profile phi (radial, S phi bounded near 0) or phi_j = x_j g(r), built from the "
        "power series in r^{2-alpha} solving -Delta psi + c r^-alpha psi = O(r^{(m+1)(2-alpha)-alpha})."),
    "project": (
        "Spherical-harmonic coefficients c_n(r) = int_S u(r w) P_n(w) dw of a sample function "
        "(gaussian, exponential, dipole) on the radial grid."),
    "evolve": (
        "Evolve u_t = -S u mode by mode (Crank-Nicolson with implicit-Euler start-up, or implicit "
        "Euler); reports ||u(t)||_p and the fitted growth rate omega in ||e^{-tS}|| <= M e^{omega t}."),
    "hardy": (
        "Hardy ratios ||u/|x|||_p / ||grad u||_p over trial families against the sharp constant "
        "p/(N-p)."),
    "rellich": (
        "Rellich ratios ||u/|x|^2||_p / ||Delta u||_p over trial families against the sharp constant "
        "p^2/(N(p-1)(N-2p))."),
    "spectrum": (
        "Lowest eigenvalues of the mode operator A_n = -d^2/dr^2 - (N-1)/r d/dr + lambda_n/r^2 "
        "+ c r^-alpha on the graded mesh; for alpha = 1, c < 0 these approach "
        "-c^2/(N-1+2n)^2."),
    "accretivity": (
        "Check int |u|^p/|x|^alpha <= eps int |grad u|^2 |u|^{p-2} + C_eps int |u|^p for a Gaussian "
        "member, with C_eps from the delta-splitting of the Hardy inequality (alpha < 2)."),
    "decompose": (
        "Split u = c0 eta*phi + sum_j c_j phi_j + w with c0 = u(0), c_j = D_j(u - c0 eta phi)(0), "
        "then check the remainder near the origin (W^{2,p}, |x|^-alpha w in L^p)."),
}


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.ndarray):
            return [clean(v) for v in o.tolist()]
        if isinstance(o, (np.floating, float)):
            v = float(o)
            return v if math.isfinite(v) else str(v)
        if isinstance(o, np.integer):
            return int(o)
        return o
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------------------------
# argument parsing

def _float_list(text: str):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("operator and grid")
    g.add_argument("--N", type=int, help="space dimension (>= 2)")
    g.add_argument("--alpha", type=float, help="singularity exponent, 0 < alpha < 2")
    g.add_argument("--c", type=float, help="coupling constant")
    g.add_argument("--p", type=float, help="Lebesgue exponent, 1 < p < inf")
    g.add_argument("--R-max", dest="R_max", type=float, help="truncation radius of the mesh")
    g.add_argument("--M", type=int, help="number of radial nodes")
    g.add_argument("--gamma", type=float, help="mesh grading r_i = R (i/M)^gamma")
    o = common.add_argument_group("configuration and output")
    o.add_argument("--config", help="JSON file with any of the long option names as keys")
    o.add_argument("--output", help="output file (default: stdout or $" + OUTPUT_ENV + ")")
    o.add_argument("--format", choices=("json", "csv"), help="output format")
    o.add_argument("--jobs", type=int, help="worker threads for sweeps (results merged in order)")

    parser = argparse.ArgumentParser(
        prog="subquad",
        description="Numerical laboratory for S = -Delta + c|x|^-alpha, 0 < alpha < 2, on L^p(R^N).")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name):
        return sub.add_parser(name, parents=[common], help=COMMANDS[name].split(";")[0].split(".")[0],
                              description=COMMANDS[name])

    p = add("classify")
    p.add_argument("--alphas", type=_float_list, help="comma-separated alpha values for a sweep")
    p.add_argument("--ps", type=_float_list, help="comma-separated p values for a sweep")
    p.add_argument("--Ns", type=_int_list, help="comma-separated dimensions for a sweep")

    p = add("phi")
    p.add_argument("--kind", choices=("phi", "phi_j"), help="radial phi or vector phi_j")
    p.add_argument("--j", type=int, help="component index of phi_j (1..N)")
    p.add_argument("--r1", type=float, help="end of the pure-series patch")
    p.add_argument("--r2", type=float, help="start of the far-field value")
    p.add_argument("--samples", type=int, help="number of equispaced sample radii in (0, 2 r2] for CSV output")

    p = add("project")
    p.add_argument("--function", choices=("gaussian", "exponential", "dipole"), help="sample function")
    p.add_argument("--degree", type=int, help="highest harmonic degree")
    p.add_argument("--quad-order", dest="quad_order", type=int, help="sphere quadrature order")

    p = add("evolve")
    p.add_argument("--t-final", dest="t_final", type=float, help="final time")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--scheme", choices=("crank-nicolson", "implicit-euler"), help="time stepping")
    p.add_argument("--width", type=float, help="width of the Gaussian initial datum")
    p.add_argument("--modes", type=_int_list, help="harmonic degrees carried by the initial datum")
    p.add_argument("--norms", type=_float_list, help="comma-separated exponents p for norm tracks")

    for name in ("hardy", "rellich"):
        p = add(name)
        p.add_argument("--eps", type=_float_list, help="near-extremal family parameters")

    p = add("spectrum")
    p.add_argument("--mode", type=_int_list, help="harmonic degree(s) n")
    p.add_argument("-k", dest="k", type=int, help="number of eigenvalues per mode")

    p = add("accretivity")
    p.add_argument("--eps", type=float, help="weight of the gradient term")
    p.add_argument("--width", type=float, help="width of the Gaussian member")

    p = add("decompose")
    p.add_argument("--c0", type=float, help="coefficient of eta*phi in the synthetic datum")
    p.add_argument("--cj", type=_float_list, help="coefficients of phi_1..phi_N")
    p.add_argument("--bump", type=float, help="amplitude of a smooth bump supported in 0.3<|x|<0.9")
    p.add_argument("--quad-order", dest="quad_order", type=int, help="sphere quadrature order")
    return parser


COMMAND_DEFAULTS = {
    "classify": {},
    "phi": {"kind": "phi", "j": 1, "r1": 0.5, "r2": 1.0, "samples": 201},
    "project": {"function": "gaussian", "degree": 2, "quad_order": 16, "format": "csv"},
    "evolve": {"t_final": 1.0, "dt": 0.01, "scheme": "crank-nicolson", "width": 1.0,
               "modes": [0], "norms": [2.0], "format": "csv"},
    "hardy": {"eps": [0.2, 0.1, 0.05], "format": "csv"},
    "rellich": {"eps": [0.2, 0.1, 0.05], "format": "csv"},
    "spectrum": {"mode": [0], "k": 1, "R_max": 80.0, "M": 4000},
    "accretivity": {"eps": 0.5, "width": 1.0},
    "decompose": {"c0": 1.0, "cj": None, "bump": 1.0, "quad_order": 8, "p": 8.0, "alpha": 1.6, "c": 1.0},
}


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the JSON config and explicit flags (in increasing priority)."""
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[args.command])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ParameterError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ParameterError(f"malformed config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ParameterError("config must be a JSON object")
        known = set(cfg) | {k for k in vars(args)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(data)
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command"):
            cfg[k] = v
    cfg["command"] = args.command
    return cfg


def _params(cfg) -> OperatorParams:
    try:
        return OperatorParams(N=cfg["N"], alpha=float(cfg["alpha"]), c=float(cfg["c"]), p=float(cfg["p"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"invalid operator parameters: {exc}") from exc


def _grid(cfg) -> RadialGrid:
    return RadialGrid(float(cfg["R_max"]), int(cfg["M"]), float(cfg["gamma"]))


def _map(func, items, jobs):
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(func, items))
    return [func(x) for x in items]


# ----------------------------------------------------------------------------
# commands

def cmd_classify(cfg):
    sweep = any(cfg.get(k) for k in ("alphas", "ps", "Ns"))
    if not sweep:
        rep = classify(_params(cfg))
        if cfg["format"] == "csv":
            return regime_sweep_csv([rep])
        return _json(rep.to_dict())
    Ns = cfg.get("Ns") or [cfg["N"]]
    ps = cfg.get("ps") or [cfg["p"]]
    alphas = cfg.get("alphas") or [cfg["alpha"]]
    triples = [(N, p, a) for N in Ns for p in ps for a in alphas]
    reps = _map(lambda t: classify(OperatorParams(t[0], t[2], cfg["c"], t[1])), triples, cfg["jobs"])
    if cfg["format"] == "csv":
        return regime_sweep_csv(reps)
    return _json([r.to_dict() for r in reps])


def cmd_phi(cfg):
    params = _params(cfg)
    prof = build_profile(params, cfg["kind"], r1=cfg["r1"], r2=cfg["r2"], j=cfg["j"])
    if cfg["format"] == "json":
        return _json(prof.to_dict())
    n = int(cfg["samples"])
    if n < 1:
        raise ParameterError("--samples must be >= 1")
    # the derivatives of phi blow up at r = 0, so the samples start one step out
    r = np.linspace(2.0 * prof.r2 / n, 2.0 * prof.r2, n)
    rows = zip(r, prof.radial(r), prof.radial(r, 1), prof.radial(r, 2))
    return _csv(rows, ["r", "radial", "d_radial", "d2_radial"])


def _sample_function(name, N):
    if name == "gaussian":
        return lambda x: np.exp(-np.sum(x * x, axis=-1))
    if name == "exponential":
        return lambda x: np.exp(-np.linalg.norm(x, axis=-1))
    return lambda x: x[..., 0] * np.exp(-np.sum(x * x, axis=-1))


def cmd_project(cfg):
    params = _params(cfg)
    grid = _grid(cfg)
    quad = sphere_quadrature(params.N, cfg["quad_order"])
    u = FullGridSample.from_function(grid, quad, _sample_function(cfg["function"], params.N))
    idxs = [ModeIndex(n, j) for n in range(cfg["degree"] + 1) for j in range(multiplicity(params.N, n))]
    coeffs = _map(u.project, idxs, cfg["jobs"])
    if cfg["format"] == "json":
        return _json({"grid": grid.to_dict(), "r": grid.r,
                      "modes": [{"degree": i.degree, "member": i.member, "values": c}
                                for i, c in zip(idxs, coeffs)]})
    rows = ((i.degree, i.member, _fmt(r), _fmt(v)) for i, c in zip(idxs, coeffs) for r, v in zip(grid.r, c))
    return _csv(rows, ["degree", "member", "r", "value"])


def cmd_evolve(cfg):
    params = _params(cfg)
    grid = _grid(cfg)
    w = float(cfg["width"])
    fields = [ModeField(ModeIndex(n), grid, grid.r**n * np.exp(-(grid.r / w) ** 2), params.N)
              for n in cfg["modes"]]
    spec = EvolutionSpec(params, tuple(f.mode for f in fields), cfg["t_final"], cfg["dt"],
                         cfg["scheme"], grid)
    traj = evolve(spec, fields, jobs=cfg["jobs"])
    ps = cfg["norms"]
    if cfg["format"] == "csv":
        return traj.norm_csv(ps)
    fits = {}
    for p in ps:
        fit = growth_rate_fit(traj, p)
        fits[_fmt(p)] = {"omega": fit.omega, "residual": fit.residual}
    pos = positivity_check(traj)
    return _json({"params": params.to_dict(), "grid": grid.to_dict(), "scheme": spec.scheme,
                  "t_final": spec.t_final, "dt": spec.dt, "growth": fits,
                  "positivity": pos.to_dict(),
                  "final_norms": {_fmt(p): traj.norm(len(traj.times) - 1, p) for p in ps}})


def _sweep(cfg, which):
    N, p = int(cfg["N"]), float(cfg["p"])
    if which == "hardy" and not p < N:
        raise ParameterError("Hardy inequality needs p < N")
    if which == "rellich" and not 2 * p < N:
        raise ParameterError("Rellich inequality needs 2p < N")
    members = default_members(N, p, which)
    ext = hardy_extremal if which == "hardy" else rellich_extremal
    members += [ext(N, p, e) for e in cfg["eps"]]
    jobs = max(1, int(cfg["jobs"]))
    chunks = [members[i::jobs] for i in range(jobs)]
    parts = _map(lambda ms: family_sweep(N, p, which, ms), chunks, jobs)
    # undo the round-robin split so the output order matches the member order
    rows = [None] * len(members)
    for i, part in enumerate(parts):
        for k, row in enumerate(part):
            pos = i + k * jobs
            row = dict(row)
            row["family"] = f"{pos}:{row['family'].split(':', 1)[1]}"
            rows[pos] = row
    if cfg["format"] == "csv":
        return sweep_csv(rows)
    return _json({"N": N, "p": p, "which": which, "max_ratio": max(r["ratio"] for r in rows),
                  "bound": rows[0]["bound"], "rows": rows})


def cmd_hardy(cfg):
    return _sweep(cfg, "hardy")


def cmd_rellich(cfg):
    return _sweep(cfg, "rellich")


def cmd_spectrum(cfg):
    params = _params(cfg)
    grid = _grid(cfg)
    modes = cfg["mode"] if isinstance(cfg["mode"], list) else [cfg["mode"]]
    if any(n < 0 for n in modes):
        raise ParameterError("mode degrees must be >= 0")
    results = _map(lambda n: eigen_lowest(params, n, int(cfg["k"]), grid), modes, cfg["jobs"])
    if cfg["format"] == "csv":
        rows = ((res.n, i, float(v), float(rr)) for res in results
                for i, (v, rr) in enumerate(zip(res.eigenvalues, res.residuals)))
        return _csv(rows, ["mode", "index", "eigenvalue", "residual"])
    out = []
    for res in results:
        entry = {"N": params.N, "alpha": params.alpha, "c": params.c, "mode": res.n,
                 "eigenvalues": res.eigenvalues, "residuals": res.residuals}
        if params.alpha == 1.0 and params.c < 0:
            # Coulomb levels -c^2 / (N - 1 + 2n + 2i)^2, i = radial quantum number
            entry["predicted"] = [-params.c**2 / (params.N - 1 + 2 * res.n + 2 * i) ** 2
                                  for i in range(len(res.eigenvalues))]
        out.append(entry)
    payload = {"params": params.to_dict(), "grid": grid.to_dict(), "spectra": out}
    if len(out) == 1 and int(cfg["k"]) == 1:
        payload["eigenvalue"] = float(results[0].eigenvalues[0])
    return _json(payload)


def cmd_accretivity(cfg):
    params = _params(cfg)
    if params.alpha >= params.N:
        raise ParameterError("need alpha < N")
    u = gaussian_bump(params.N, float(cfg["width"]))
    rep = quasi_accretive_check(u, params.p, params.alpha, float(cfg["eps"]))
    C, delta = proof_constant(params.N, params.p, params.alpha, float(cfg["eps"]))
    d = {"lhs": rep.lhs, "rhs": rep.rhs, "C_eps": C, "delta": delta, "C_min": rep.C_min,
         "gradient_term": rep.gradient_term, "mass": rep.mass, "eps": rep.eps, "passed": rep.passed}
    if cfg["format"] == "csv":
        return _csv([[k, d[k] if not isinstance(d[k], bool) else str(d[k]).lower()] for k in d],
                    ["quantity", "value"])
    return _json({"params": params.to_dict(), **d})


def cmd_decompose(cfg):
    params = _params(cfg)
    if params.N > 3:
        raise ParameterError("decompose samples on full grids, N = 2 or 3")
    grid = _grid(cfg)
    quad = sphere_quadrature(params.N, int(cfg["quad_order"]))
    phi = build_profile(params, "phi")
    pj = [build_profile(params, "phi_j", j=j) for j in range(1, params.N + 1)]
    cj = cfg["cj"] if cfg["cj"] is not None else [0.5 * (j + 1) for j in range(params.N)]
    if len(cj) != params.N:
        raise ParameterError(f"--cj needs {params.N} values")
    c0, amp = float(cfg["c0"]), float(cfg["bump"])

    def u(x):
        r = np.linalg.norm(x, axis=-1)
        val = c0 * cutoff(r) * phi.radial(r)
        for cc, prof in zip(cj, pj):
            val = val + cc * prof.evaluate(x)
        bump = cutoff(np.abs(r - 0.6), inner=0.1, outer=0.3) * (1.0 + x[..., 0])
        return val + amp * bump

    with np.errstate(divide="ignore", invalid="ignore"):
        sample = FullGridSample.from_function(grid, quad, u)
        dec = decompose(sample, params)
        back = reconstruct(dec)
        mem = membership_test(dec.remainder, params, reference=sample)
    rec_err = float(np.max(np.abs(back.values - sample.values)))
    d = dict(dec.to_dict())
    d.update({"input_c0": c0, "input_cj": list(map(float, cj)), "reconstruction_error": rec_err,
              "remainder_verdict": mem.verdict, "params": params.to_dict()})
    if cfg["format"] == "csv":
        rows = [["c0", dec.c0]] + [[f"c{j + 1}", float(v)] for j, v in enumerate(dec.cj)]
        rows.append(["reconstruction_error", rec_err])
        return _csv(rows, ["coefficient", "value"])
    return _json(d)


HANDLERS = {
    "classify": cmd_classify, "phi": cmd_phi, "project": cmd_project, "evolve": cmd_evolve,
    "hardy": cmd_hardy, "rellich": cmd_rellich, "spectrum": cmd_spectrum,
    "accretivity": cmd_accretivity, "decompose": cmd_decompose,
}


def run(cfg: dict) -> str:
    """Dispatch a resolved configuration and return the rendered output text."""
    if int(cfg.get("jobs", 1)) < 1:
        raise ParameterError("--jobs must be >= 1")
    _params(cfg)  # validate before any work
    return HANDLERS[cfg["command"]](cfg)


def _destination(cfg):
    if cfg.get("output"):
        return cfg["output"]
    base = os.environ.get(OUTPUT_ENV)
    if base:
        return os.path.join(base, f"{cfg['command']}.{cfg['format']}")
    return None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        text = run(cfg)
    except (ParameterError, UnsupportedDimensionError) as exc:
        print(f"subquad {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"subquad {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3
    dest = _destination(cfg)
    if dest is None:
        sys.stdout.write(text)
    else:
        d = os.path.dirname(dest)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
