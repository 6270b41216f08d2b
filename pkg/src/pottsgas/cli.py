"""Experiment driver: phase-diagram, minimize, decay-fit, simulate, validate.

Structured settings come from a JSON config (unknown keys rejected); scalar
flags override.  Every run writes a ``manifest.json`` echoing the resolved
configuration plus package versions, so runs are reproducible; CSV outputs
are deterministic byte-for-byte for a fixed manifest.

Exit codes: 0 ok, 1 numerical failure, 2 config error, 3 failed property.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _core
from .geometry import Box
from .indicators import ScaleParams
from .kernels import KacKernel

CONFIG_ERROR, NUMERICAL_ERROR, PROPERTY_ERROR = 2, 1, 3


class ConfigError(ValueError):
    pass


def _check_keys(obj: dict, allowed: dict, path="config"):
    for key, val in obj.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key}")
        spec = allowed[key]
        if isinstance(spec, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path}.{key} must be an object")
            _check_keys(val, spec, f"{path}.{key}")
        elif spec is not None and not isinstance(val, spec):
            names = spec if isinstance(spec, tuple) else (spec,)
            raise ConfigError(
                f"{path}.{key} must be {'/'.join(t.__name__ for t in names)}")


_MODEL_KEYS = {"S": int, "beta": (int, float), "lambda": (int, float),
               "gamma": (int, float), "d": int}
_SCALE_KEYS = {"ell_minus": (int, float), "ell_plus": (int, float),
               "zeta": (int, float), "alpha_minus": (int, float),
               "alpha_plus": (int, float), "a_zeta": (int, float)}


def _load_config(path, schema):
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    if not isinstance(obj, dict):
        raise ConfigError("config root must be an object")
    _check_keys(obj, schema)
    return obj


def _write_manifest(outdir: Path, kind: str, resolved: dict):
    manifest = {
        "experiment": kind,
        "config": resolved,
        "versions": {"pottsgas": __version__,
                     "engine": _core.BACKEND,
                     "numpy": np.__version__},
    }
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _fmt(x: float) -> str:
    return f"{x:.12g}"


# ---------------------------------------------------------------------------
# phase-diagram
# ---------------------------------------------------------------------------

def _parse_grid(text: str):
    lo, hi, step = (float(t) for t in text.split(":"))
    n = int(round((hi - lo) / step)) + 1
    return [lo + i * step for i in range(n)]


def cmd_phase_diagram(args) -> int:
    from . import meanfield as mf
    outdir = Path(args.out)
    betas = _parse_grid(args.beta_grid)
    resolved = {"beta_grid": args.beta_grid, "S": args.S, "out": str(outdir)}
    _write_manifest(outdir, "phase-diagram", resolved)
    rows = []
    sets = {}
    for beta in betas:
        try:
            lam_b, ms = mf.critical_lambda(beta, args.S)
        except mf.NoCoexistenceError:
            continue
        rows.append((beta, lam_b, ms.a, ms.b, ms.c, ms.b_star, ms.phi,
                     ms.kappa[1], ms.kappa[args.S + 1]))
        sets[_fmt(beta)] = ms.to_dict()
    header = "beta,lambda_beta,a,b,c,b_star,phi,kappa_ord,kappa_disord"
    lines = [header] + [",".join(_fmt(v) for v in row) for row in rows]
    (outdir / "phase_diagram.csv").write_text("\n".join(lines) + "\n")
    (outdir / "minimizers.json").write_text(
        json.dumps(sets, indent=2, sort_keys=True) + "\n")
    (outdir / "phase_diagram.gp").write_text(
        "set datafile separator ','\nset key autotitle columnhead\n"
        "set xlabel 'beta'\nset ylabel 'lambda_beta'\n"
        "plot 'phase_diagram.csv' using 1:2 with linespoints\n")
    print(f"phase-diagram: {len(rows)}/{len(betas)} beta values with "
          f"coexistence -> {outdir}")
    return 0 if rows else NUMERICAL_ERROR


# ---------------------------------------------------------------------------
# minimize / decay-fit
# ---------------------------------------------------------------------------

_MINIMIZE_SCHEMA = {
    "model": _MODEL_KEYS, "scales": _SCALE_KEYS,
    "k": int, "t": (int, float), "eps": (int, float),
    "box": list, "periodic": bool,
    "boundary": {"kind": str, "amplitude": (int, float), "mode_seed": int},
    "seed": int,
}


def _setup_problem(cfg, require_lambda=False):
    from . import meanfield as mf
    from .functional import FunctionalProblem

    model = cfg.get("model", {})
    S = model.get("S", 3)
    beta = model.get("beta", 1.0)
    gamma = model.get("gamma", 0.25)
    d = model.get("d", 2)
    lam_b, ms = mf.critical_lambda(beta, S)
    lam = model.get("lambda", lam_b)
    scales = cfg.get("scales", {})
    kern = KacKernel(gamma=gamma, d=d)
    params = ScaleParams(
        gamma=gamma,
        ell_minus=scales.get("ell_minus", 2.0 / gamma ** 0.5),
        ell_plus=scales.get("ell_plus", 8.0 / gamma ** 0.5),
        zeta=scales.get("zeta", 0.35 * ms.min_gap()),
    )
    sides = tuple(float(x) for x in cfg.get("box", [64.0] * d))
    box = Box(sides, periodic=cfg.get("periodic", False))
    k = cfg.get("k", 1)

    bnd = cfg.get("boundary", {"kind": "pure"})
    kind = bnd.get("kind", "pure")
    if kind == "pure":
        bvals = ms.rho(k)
        prob = FunctionalProblem.with_collar(box, kern, params, ms, k,
                                             boundary_values=bvals,
                                             t=cfg.get("t", 1.0),
                                             eps=cfg.get("eps", 0.0), lam=lam)
    elif kind == "perturbed":
        amp = bnd.get("amplitude", 0.5) * params.zeta
        prob = FunctionalProblem.with_collar(box, kern, params, ms, k,
                                             boundary_values=ms.rho(k),
                                             t=cfg.get("t", 1.0),
                                             eps=cfg.get("eps", 0.0), lam=lam)
        rng = np.random.default_rng(bnd.get("mode_seed", 0))
        pert = perturb_collar(prob, amp, rng)
        prob = FunctionalProblem.with_collar(box, kern, params, ms, k,
                                             boundary_values=pert,
                                             t=cfg.get("t", 1.0),
                                             eps=cfg.get("eps", 0.0), lam=lam)
    else:
        raise ConfigError(f"unknown boundary kind {kind!r}")
    return prob, ms, lam_b


def perturb_collar(prob, amplitude: float, rng) -> np.ndarray:
    """Boundary field rho^(k) + amplitude * per-site noise on the collar."""
    nwin = prob.region.shape
    noise = rng.uniform(-1.0, 1.0, size=nwin + (prob.S,))
    vals = prob.rho_k + amplitude * noise
    vals = np.clip(vals, 1e-6, None)
    out = np.where(~prob.region[..., None], vals, 0.0)
    return out


def _field_csv(vals: np.ndarray) -> str:
    if vals.ndim != 3:
        raise ValueError("field CSV dump is 2-d only")
    lines = ["i,j," + ",".join(f"rho_{s+1}" for s in range(vals.shape[-1]))]
    for i in range(vals.shape[0]):
        for j in range(vals.shape[1]):
            lines.append(f"{i},{j}," + ",".join(_fmt(v) for v in vals[i, j]))
    return "\n".join(lines) + "\n"


def cmd_minimize(args) -> int:
    from .functional import minimize_constrained
    cfg = _load_config(args.config, _MINIMIZE_SCHEMA)
    outdir = Path(args.out)
    _write_manifest(outdir, "minimize", cfg)
    prob, ms, lam_b = _setup_problem(cfg)
    rho, diag = minimize_constrained(prob)
    (outdir / "minimizer.csv").write_text(_field_csv(rho))
    summary = {
        "lambda_beta": lam_b,
        "max_deviation": diag["max_deviation"],
        "gradient_norm_free": diag["gradient_norm_free"],
        "stages": diag["stages"],
        "converged": diag["converged"],
    }
    (outdir / "diagnostics.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"minimize: max deviation from the pure phase "
          f"{diag['max_deviation']:.3e} -> {outdir}")
    return 0


def cmd_decay_fit(args) -> int:
    from .functional import decay_fit, minimize_constrained, region_distances
    cfg = _load_config(args.config, _MINIMIZE_SCHEMA)
    cfg.setdefault("boundary", {"kind": "perturbed", "amplitude": 0.5})
    outdir = Path(args.out)
    _write_manifest(outdir, "decay-fit", cfg)
    prob, ms, lam_b = _setup_problem(cfg)
    rho, diag = minimize_constrained(prob)
    dist = region_distances(prob)
    dev = diag["deviation"]
    sel = prob.region & (dev > 1e-13)
    slope, pref, r2 = decay_fit(dev[sel], dist[sel])
    lines = ["distance,max_deviation"]
    for sd in np.unique(np.round(dist[sel], 9)):
        m = dev[sel][np.isclose(dist[sel], sd)].max()
        lines.append(f"{_fmt(sd)},{_fmt(m)}")
    (outdir / "shells.csv").write_text("\n".join(lines) + "\n")
    (outdir / "decay.json").write_text(json.dumps(
        {"rate": slope, "prefactor": pref, "r_squared": r2,
         "max_deviation": diag["max_deviation"],
         "zeta": prob.params.zeta}, indent=2, sort_keys=True) + "\n")
    (outdir / "shells.gp").write_text(
        "set datafile separator ','\nset key autotitle columnhead\n"
        "set logscale y\nset xlabel 'distance'\n"
        "plot 'shells.csv' using 1:2 with points\n")
    ok = slope < 0 and r2 > 0.9
    print(f"decay-fit: rate={slope:.4f} R^2={r2:.4f} -> {outdir}")
    return 0 if ok else PROPERTY_ERROR


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_SIMULATE_SCHEMA = {
    "model": _MODEL_KEYS, "scales": _SCALE_KEYS,
    "box": list, "bc": str, "seed": int, "sweeps": int, "burn_in": int,
    "snapshot_every": int, "sigma": (int, float),
}


def cmd_simulate(args) -> int:
    from . import meanfield as mf
    from .simulator import (BoundaryCondition, MoveMix, gcmc_sweep,
                            make_state, observables,
                            sample_restricted_config)

    cfg = _load_config(args.config, _SIMULATE_SCHEMA)
    model = dict(cfg.get("model", {}))
    for name, key in (("S", "S"), ("beta", "beta"), ("gamma", "gamma"),
                      ("lam", "lambda")):
        val = getattr(args, name, None)
        if val is not None:
            model[key] = val
    S = model.get("S", 3)
    beta = model.get("beta", 1.0)
    gamma = model.get("gamma", 0.25)
    d = model.get("d", 2)
    if args.box:
        cfg["box"] = [float(x) for x in args.box.split(",")]
    if args.bc:
        cfg["bc"] = args.bc
    for name in ("seed", "sweeps", "burn_in", "snapshot_every"):
        val = getattr(args, name)
        if val is not None:
            cfg[name] = val

    lam_b, ms = mf.critical_lambda(beta, S)
    lam = model.get("lambda", lam_b)
    kern = KacKernel(gamma=gamma, d=d)
    scales = cfg.get("scales", {})
    params = ScaleParams(
        gamma=gamma,
        ell_minus=scales.get("ell_minus", 2.0 / gamma ** 0.5),
        ell_plus=scales.get("ell_plus", 4.0 / gamma ** 0.5),
        zeta=scales.get("zeta", 0.4 * ms.min_gap()),
    )
    bc_text = cfg.get("bc", "periodic")
    sides = tuple(float(x) for x in cfg.get("box", [32.0] * d))
    seed = cfg.get("seed", 0)
    sweeps = cfg.get("sweeps", 200)
    burn = cfg.get("burn_in", sweeps // 4)
    every = cfg.get("snapshot_every", 1)

    rng = np.random.default_rng(seed)
    if bc_text == "periodic":
        box = Box(sides, periodic=True)
        bc = BoundaryCondition.periodic()
        init = sample_restricted_config(box, ms.rho(S + 1), rng, S)
        collar_label = None
    elif bc_text.startswith("k="):
        k = int(bc_text[2:])
        box = Box(sides, periodic=False)
        bc = BoundaryCondition.density(box, kern, ms.rho(k), label=k)
        init = sample_restricted_config(box, ms.rho(k), rng, S)
        collar_label = k
    else:
        raise ConfigError("bc must be 'periodic' or 'k=<label>'")

    resolved = {"model": {"S": S, "beta": beta, "gamma": gamma, "d": d,
                          "lambda": lam},
                "scales": {"ell_minus": params.ell_minus,
                           "ell_plus": params.ell_plus, "zeta": params.zeta},
                "box": list(sides), "bc": bc_text, "seed": seed,
                "sweeps": sweeps, "burn_in": burn, "snapshot_every": every}
    outdir = Path(args.out)
    _write_manifest(outdir, "simulate", resolved)

    state = make_state(box, S, beta, lam, kern, bc=bc, seed=seed, init=init,
                       sigma=cfg.get("sigma"))
    snapshots = []
    t0 = time.time()
    with (outdir / "trajectory.jsonl").open("w") as fh:
        for sweep in range(sweeps):
            gcmc_sweep(state, check_every=50)
            rec = {"sweep": sweep, "n": state.n}
            if sweep >= burn and sweep % every == 0:
                snap = state.config()
                snapshots.append(snap)
                rec["density"] = [_fmt(x) for x in
                                  (snap.counts() / box.volume)]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if snapshots:
        (outdir / "final_config.csv").write_text(snapshots[-1].to_csv())
        obs = observables(snapshots, box, params, ms,
                          collar_label=collar_label)
        obs_json = {
            "density": obs["density"].tolist(),
            "density_err": obs["density_err"].tolist(),
            "eta_fraction": obs["eta_fraction"].tolist(),
            "theta_fraction": obs["theta_fraction"].tolist(),
            "contour_count": obs["contour_count"],
            "acceptance": (state.stats["accepted"]
                           / np.maximum(state.stats["proposed"], 1)).tolist(),
            "seconds": time.time() - t0,
        }
        (outdir / "observables.json").write_text(
            json.dumps(obs_json, indent=2, sort_keys=True) + "\n")
        print(f"simulate: n={state.n} density={obs['density']} -> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    from .validate import run_validation
    results = run_validation(fast=args.fast)
    width = max(len(name) for name, _, _ in results)
    ok_all = True
    for name, ok, detail in results:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
        ok_all &= ok
    return 0 if ok_all else PROPERTY_ERROR


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pottsgas",
        description="Continuum Potts gas laboratory: mean-field phase "
                    "diagram, coarse-grained functional, particle simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase-diagram", help="sweep beta, locate the curve")
    p.add_argument("--beta-grid", default="0.8:1.2:0.1",
                   help="lo:hi:step sweep (default 0.8:1.2:0.1)")
    p.add_argument("--S", type=int, default=3)
    p.add_argument("--out", default="out/phase-diagram")
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("minimize", help="constrained functional minimization")
    p.add_argument("--config")
    p.add_argument("--out", default="out/minimize")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("decay-fit", help="boundary-perturbation decay rate")
    p.add_argument("--config")
    p.add_argument("--out", default="out/decay-fit")
    p.set_defaults(func=cmd_decay_fit)

    p = sub.add_parser("simulate", help="grand-canonical Metropolis chain")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--box", help="comma-separated side lengths")
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--S", type=int)
    p.add_argument("--bc", help="periodic or k=<label>")
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    p.add_argument("--out", default="out/simulate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="run the property suite")
    p.add_argument("--fast", action="store_true")
    p.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return CONFIG_ERROR
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
