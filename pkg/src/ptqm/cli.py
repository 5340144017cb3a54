"""Command line scenario runner.

Every run is described by a JSON scenario ``{"schema_version", "name",
"command", "params", "tolerances"}`` validated against the bundled schema.
Runs write CSV/JSON data plus a ``manifest.json`` holding the input hash,
package versions, declared tolerances and a residual summary.

Exit codes: 0 success, 2 invalid scenario, 3 numerical failure or a
residual above its declared tolerance.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import PTQMError

SCHEMA_VERSION = 1
EXIT_OK, EXIT_SCHEMA, EXIT_NUMERIC = 0, 2, 3


class ScenarioError(Exception):
    """Scenario failed schema validation; ``path`` locates the offending key."""

    def __init__(self, message: str, path: str):
        super().__init__(message)
        self.path = path


# ---------------------------------------------------------------------------
# scenario files


def load_schema() -> dict:
    return json.loads(resources.files("ptqm").joinpath("schema/scenario.json").read_text())


def list_scenarios() -> dict:
    """Names and descriptions of the bundled presets."""
    out = {}
    for f in sorted(resources.files("ptqm").joinpath("presets").iterdir(), key=lambda p: p.name):
        if f.name.endswith(".json"):
            data = json.loads(f.read_text())
            out[data["name"]] = data.get("description", "")
    return out


def load_preset(name: str) -> dict:
    f = resources.files("ptqm").joinpath(f"presets/{name}.json")
    if not f.is_file():
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(list_scenarios())}", "name")
    return json.loads(f.read_text())


def validate(scenario: dict) -> None:
    """Raise :class:`ScenarioError` naming the first offending key."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(scenario), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        extra = [e for e in errors if e.validator == "additionalProperties"]
        err = extra[0] if extra else jsonschema.exceptions.best_match(errors)
        parts = [str(p) for p in err.absolute_path]
        if extra:
            known = set(err.schema.get("properties", {}))
            parts.append(sorted(set(err.instance) - known)[0])
        path = "/".join(parts) or "<root>"
        raise ScenarioError(f"{path}: {err.message}", path)


def inputs_hash(scenario: dict) -> str:
    return hashlib.sha256(json.dumps(scenario, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _versions() -> dict:
    import scipy
    import sympy

    from . import __version__

    return {"ptqm": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "sympy": sympy.__version__, "python": platform.python_version()}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PTQM_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    """Map preserving order; parallel when ``PTQM_THREADS`` > 1."""
    items = list(items)
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _fmt(x) -> str:
    return f"{float(x):.12e}"


def csv_text(header, rows) -> str:
    """RFC-4180 CSV with a header row and fixed-precision numbers."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands: each returns (files, residuals); files maps name -> text


def cmd_regime(p):
    from .models import build_two_level
    from .numcore import PAULI_Z
    from .symmetry import AntilinearOp, classify_regime

    H = build_two_level(p["omega"], p["lambda"], p["kappa"])
    rep = classify_regime(H, AntilinearOp(PAULI_Z, involution=True))
    return {"regime.json": json.dumps(rep.to_dict(), sort_keys=True, indent=2) + "\n"}, {"pt_residual": rep.pt_residual}


def cmd_bb_spectrum(p):
    from .models import bb_spectrum

    eps = np.linspace(p["eps_min"], p["eps_max"], p["n_eps"])
    k = p["levels"]

    def one(e):
        fine = bb_spectrum(e, p["x_max"], p["n_points"], k, check_refinement=False)
        coarse = bb_spectrum(e, p["x_max"], p["n_points"] // 2, k, check_refinement=False)
        return fine, float(np.abs(fine - coarse).max())

    res = _pmap(one, eps)
    header = ["eps"] + [f"re_E{n}" for n in range(k)] + [f"im_E{n}" for n in range(k)]
    rows = [[e, *w.real, *w.imag] for e, (w, _) in zip(eps, res)]
    rel_imag = max(float(np.max(np.abs(w.imag) / np.abs(w.real))) for w, _ in res)
    return {"spectrum.csv": csv_text(header, rows)}, {
        "refinement_drift": max(d for _, d in res),
        "relative_imag": rel_imag,
    }


def cmd_fig2(p):
    from .dynamics import two_level_closed_form, two_level_energy_expectations, two_level_instantaneous_closed_form

    t = np.linspace(0.0, p["t_max"], p["n_t"])
    omega, fixed = p["omega"], p["fixed"]
    cols, header, imag, det_drift = [t], ["t"], 0.0, 0.0
    for v in p["sweep"]:
        lam, kappa = (v, fixed) if p["panel"] == "a" else (fixed, v)
        if p["panel"] == "a":
            E = two_level_energy_expectations(omega, lam, kappa, t)
            imag = max(imag, float(np.abs(E.imag).max()))
            E = E.real
            names = [f"E_minus_lambda_{v:g}", f"E_plus_lambda_{v:g}"]
        else:
            E = two_level_instantaneous_closed_form(omega, lam, kappa, t)
            names = [f"E1_kappa_{v:g}", f"E2_kappa_{v:g}"]
        traj = two_level_closed_form(omega, lam, kappa, t)
        # relative to alpha0^2: the sampled determinant cancels two large terms
        a0 = np.real(np.trace(traj.rho.values, axis1=1, axis2=2)) / 2
        det_drift = max(det_drift, float(np.max(np.abs(traj.diagnostics["det_sampled"] - traj.det) / a0**2)))
        cols += [E[:, 0], E[:, 1]]
        header += names
    res = {"det_drift": det_drift}
    if p["panel"] == "a":
        res["max_imag"] = imag
    return {f"fig2{p['panel']}.csv": csv_text(header, np.column_stack(cols))}, res


def cmd_entropy(p):
    from .entropy import boson_bath_entropy

    t = np.linspace(0.0, p["t_max"], p["n_t"])
    Ns = p["N"] if isinstance(p["N"], list) else [p["N"]]
    curves = [boson_bath_entropy(p["g"], p["kappa"], n, p["c1"], p["gamma"], t, norm_tol=p["norm_tol"]) for n in Ns]
    header = ["t"] + [f"S_N{n}" for n in Ns]
    rows = np.column_stack([t] + [c.S.values for c in curves])
    dev = max(float(c.S.meta["norm_deviation"]) for c in curves)
    files = {"entropy.csv": csv_text(header, rows),
             "entropy.json": json.dumps({"regime": curves[0].regime, "params": {**curves[0].params, "N": Ns}},
                                        sort_keys=True, indent=2) + "\n"}
    return files, {"norm_deviation": dev}


def cmd_anharmonic(p):
    from .anharmonic import anharmonic_chain, potential_surfaces, thirdo_residual

    chain = anharmonic_chain(p["sigma"], p["c1"], p["c2"])
    z = np.linspace(p["z_min"], p["z_max"], p["n_z"])
    y = np.linspace(p["y_min"], p["y_max"], p["n_y"])
    surf = potential_surfaces(chain.g, chain.m, z, y, p["times"], t_reg=p["t_reg"])
    tr = np.linspace(p["residual_t_min"], p["residual_t_max"], 601)
    res = float(thirdo_residual(chain.g, chain.m, tr).values.max())
    rowsV = [(c, t, v) for t, row in zip(surf.times, surf.V) for c, v in zip(z, row)]
    rowsW = [(c, t, v) for t, row in zip(surf.evaluated_at, surf.V_tilde) for c, v in zip(y, row)]
    minima = {f"{t:g}": [float(m) for m in surf.minima(i)] for i, t in enumerate(surf.times)}
    files = {
        "V.csv": csv_text(["z", "t", "V"], rowsV),
        "V_tilde.csv": csv_text(["y", "t", "V_tilde"], rowsW),
        "minima.json": json.dumps({"V_tilde_minima": minima, "evaluated_at": surf.evaluated_at.tolist()},
                                  sort_keys=True, indent=2) + "\n",
    }
    return files, {"thirdo_residual": res}


def cmd_hk_bch(p):
    import sympy

    from .metric import bch_perturbative
    from .models import lie_registry

    a, b = sympy.nsimplify(p["a"]), sympy.nsimplify(p["b"])
    alg = lie_registry(8)["K"]
    pm = bch_perturbative(alg, [a, b, 0, 0], [0, 0, 1, 0], max_order=p["max_order"])
    coeffs = pm.as_dict()
    err = 0.0
    for n in range(1, p["max_order"] + 1):
        expect = sympy.Rational(2, n) / (b - a) ** n if n % 2 else 0
        got = coeffs.get(n, {}).get("K4", 0)
        err = max(err, abs(float(sympy.nsimplify(got - expect))))
    out = {str(n): {k: str(v) for k, v in c.items()} for n, c in coeffs.items()}
    return {"bch.json": json.dumps({"q": out, "a": str(a), "b": str(b)}, sort_keys=True, indent=2) + "\n"}, {
        "arctanh_series_mismatch": err
    }


def cmd_ep_chain(p):
    from .ermakov import dissipative_ep_chi, gamma_chain
    from .models import coefficient_function

    lam = coefficient_function(p["lambda"])
    t = np.linspace(p["t_min"], p["t_max"], p["n_t"])
    chi = dissipative_ep_chi(lam, p["c3"], p["c4"], t)
    ch = gamma_chain(chi)
    r3, r4 = ch.flow_residual()
    inner = slice(4, -4)
    rows = np.column_stack([t, chi.values.values, ch.gamma3.values, ch.gamma4.values, chi.residual])
    files = {"ep_chain.csv": csv_text(["t", "chi", "gamma3", "gamma4", "ep_residual"], rows)}
    return files, {
        "ep_residual": float(np.abs(chi.residual).max()),
        "constraint_residual": float(np.abs(ch.constraint_residual()).max()),
        "flow_residual": float(max(np.abs(r3[inner]).max(), np.abs(r4[inner]).max())),
    }


def cmd_darboux(p):
    from .darboux import Grid1D, crank_nicolson, gaussian_packet, susy_factorize, td_darboux_hermitian

    import sympy

    g = Grid1D(p["x_min"], p["x_max"], p["n"])
    x = sympy.Symbol("x", real=True)
    W = sympy.lambdify(x, sympy.sympify(p["superpotential"], locals={"x": x}), "numpy")
    Wv = np.broadcast_to(np.asarray(W(g.x), dtype=float), g.x.shape)
    pair = susy_factorize(Wv, g)
    e1, e2 = pair.spectra(p["levels"] + 1)
    rows = [[n, e1[n].real, e2[n].real if n < p["levels"] else np.nan] for n in range(p["levels"] + 1)]
    t = np.arange(0, p["n_t"]) * p["dt"]
    zero = lambda x, s: np.zeros_like(x)
    u = crank_nicolson(zero, gaussian_packet(g.x, 0.0, p["width"], p["k0"]), g, t)
    dp = td_darboux_hermitian(zero, u, g, t)
    snap = np.column_stack([g.x, dp.v1[-1], np.abs(dp.phi1[-1]) ** 2])
    files = {
        "susy_spectra.csv": csv_text(["n", "E1", "E2"], rows),
        "darboux_final.csv": csv_text(["x", "v1", "abs_phi1_sq"], snap[::p["stride"]]),
    }
    return files, {
        "pairing_error": pair.pairing_error(p["levels"]),
        "phi1_residual": dp.diagnostics["phi1_residual"],
        "im_w_spread": dp.diagnostics["im_w_spread"],
    }


def cmd_dyson_series(p):
    from .dynamics import two_level_closed_form
    from .invariants import dyson_series_iterate, polar_adjusted_seed
    from .models import build_two_level

    omega, lam, kappa = p["omega"], p["lambda"], p["kappa"]
    t = np.linspace(0.0, p["t_max"], p["n_t"])
    z = complex(p["z_re"], p["z_im"])
    c3 = np.sqrt((1 + 4 * abs(z) ** 2) / (1 - kappa**2 / lam**2))
    base = two_level_closed_form(omega, lam, kappa, t)
    other = two_level_closed_form(omega, lam, kappa, t, (z, z.conjugate(), c3, 0.0))
    ed, etd = base.diagnostics["eta_dot"], other.diagnostics["eta_dot"]
    seed, seed_dot = base.eta, ed
    eta_t, eta_t_dot = other.eta, etd
    if p["seed"] == "polar":
        eta_t, eta_t_dot = polar_adjusted_seed(seed, eta_t, ed, etd)
    H = build_two_level(omega, lam, kappa)
    series = dyson_series_iterate(seed, eta_t, lambda s: H, depth=p["depth"], eta_dot=seed_dot,
                                  eta_tilde_dot=eta_t_dot, gate_tol=p["gate_tol"])
    log = series.to_log()
    acc = series.accepted()
    defect = max((v["hermiticity_defect"] for v in log if v["gate_passed"]), default=0.0)
    files = {"dyson_series.json": json.dumps({"levels": log, "accepted": acc, "truncated": series.truncated},
                                             sort_keys=True, indent=2) + "\n"}
    return files, {"accepted_defect": defect, "accepted_levels": float(len(acc))}


COMMANDS = {
    "regime": cmd_regime,
    "bb-spectrum": cmd_bb_spectrum,
    "fig2": cmd_fig2,
    "entropy": cmd_entropy,
    "anharmonic": cmd_anharmonic,
    "hk-bch": cmd_hk_bch,
    "ep-chain": cmd_ep_chain,
    "darboux": cmd_darboux,
    "dyson-series": cmd_dyson_series,
}

# residual names whose declared value is a lower bound rather than a ceiling
_LOWER_BOUNDS = {"accepted_levels"}


def execute(scenario: dict) -> tuple[dict, dict]:
    """Validate and run a scenario; return ``(files, manifest)``.

    Raises
    ------
    ScenarioError
        On schema violations.
    PTQMError
        On numerical failures inside the library.
    """
    validate(scenario)
    files, residuals = COMMANDS[scenario["command"]](scenario["params"])
    tol = scenario.get("tolerances", {})
    checks = {}
    for k, lim in tol.items():
        if k not in residuals:
            raise ScenarioError(f"tolerances/{k}: not a residual of command {scenario['command']!r}", f"tolerances/{k}")
        v = residuals[k]
        checks[k] = bool(v >= lim) if k in _LOWER_BOUNDS else bool(v <= lim)
    manifest = {
        "name": scenario["name"],
        "command": scenario["command"],
        "inputs_sha256": inputs_hash(scenario),
        "versions": _versions(),
        "tolerances": tol,
        "residuals": {k: float(v) for k, v in sorted(residuals.items())},
        "within_tolerance": checks,
        "outputs": sorted(files),
    }
    return files, manifest


def write_outputs(files: dict, manifest: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    with open(out / "manifest.json", "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def run(scenario, out_dir=None, stdout=None, stderr=None) -> int:
    """Run a scenario dict, preset name or file path; return the exit code.

    Without ``out_dir`` the data files are printed to ``stdout``.
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        if isinstance(scenario, (str, Path)):
            path = Path(scenario)
            if path.suffix == ".json" or path.exists():
                try:
                    scenario = json.loads(path.read_text(encoding="utf-8"))
                except (OSError, json.JSONDecodeError) as exc:
                    raise ScenarioError(f"cannot read scenario: {exc}", str(path)) from exc
            else:
                scenario = load_preset(str(scenario))
        files, manifest = execute(scenario)
    except ScenarioError as exc:
        print(f"invalid scenario at '{exc.path}': {exc}", file=stderr)
        return EXIT_SCHEMA
    except (PTQMError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=stderr)
        return EXIT_NUMERIC
    if out_dir is not None:
        write_outputs(files, manifest, out_dir)
    else:
        shown = {k: v for k, v in files.items() if k.endswith(".csv")} or files
        for name, text in sorted(shown.items()):
            if len(shown) > 1:
                print(f"# {name}", file=stdout)
            stdout.write(text)
    failed = [k for k, ok in manifest["within_tolerance"].items() if not ok]
    if failed:
        print(f"residuals above tolerance: {', '.join(failed)} {manifest['residuals']}", file=stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _scenario(name, command, params, tolerances=None):
    return {"schema_version": SCHEMA_VERSION, "name": name, "command": command, "params": params,
            "tolerances": tolerances or {}}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ptqm", description="Scenario runner for non-Hermitian quantum mechanics tools.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("list", help="list bundled presets")
    s.set_defaults(func=lambda a: (print(json.dumps(list_scenarios(), indent=2)), EXIT_OK)[1])

    s = sub.add_parser("run", help="run a preset name or a scenario JSON file")
    s.add_argument("scenario")
    s.add_argument("--out", help="output directory (default: print to stdout)")
    s.set_defaults(func=lambda a: run(a.scenario, a.out))

    s = sub.add_parser("regime", help="classify the spectrum of a model")
    s.add_argument("--model", choices=["two-level"], default="two-level")
    s.add_argument("--omega", type=float, required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--kappa", type=float, required=True)
    s.add_argument("--out")
    s.set_defaults(func=lambda a: run(_scenario("regime", "regime", {
        "model": a.model, "omega": a.omega, "lambda": a.lam, "kappa": a.kappa}), a.out))

    s = sub.add_parser("entropy", help="reduced entropy of a boson coupled to a bath")
    s.add_argument("--g", type=float, required=True)
    s.add_argument("--kappa", type=float, required=True)
    s.add_argument("--N", type=int, nargs="+", required=True)
    s.add_argument("--c1", type=float, required=True)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--tmax", type=float, default=3.0)
    s.add_argument("--nt", type=int, default=601)
    s.add_argument("--norm-tol", type=float, default=1e-3,
                   help="largest accepted deviation of lambda_+ + lambda_- from 1 before renormalizing")
    s.add_argument("--out")
    s.set_defaults(func=lambda a: run(_scenario("entropy", "entropy", {
        "g": a.g, "kappa": a.kappa, "N": a.N if len(a.N) > 1 else a.N[0], "c1": a.c1, "gamma": a.gamma,
        "t_max": a.tmax, "n_t": a.nt, "norm_tol": a.norm_tol}), a.out))

    s = sub.add_parser("fig2", help="time-dependent two-level energies")
    s.add_argument("--panel", choices=["a", "b"], required=True)
    s.add_argument("--out")
    s.set_defaults(func=lambda a: run(f"fig2{a.panel}", a.out))

    for name in ("fig1a", "fig3", "fig4a", "fig4b", "fig4c", "hk-bch", "ep-chain", "darboux-demo", "dyson-series"):
        s = sub.add_parser(name, help=f"run the {name} preset")
        s.add_argument("--out")
        s.set_defaults(func=lambda a, n=name: run(n, a.out))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return int(args.func(args))


if __name__ == "__main__":
    sys.exit(main())
