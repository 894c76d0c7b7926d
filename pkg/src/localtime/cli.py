"""Command-line entry point: scenario runner and single-task subcommands."""

from __future__ import annotations

import argparse
import math
import os
import platform
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__, classify, coarse, kernels, ltsmap, markov, opensys, scenario
from .reporting import write_csv, write_json
from .states import from_pure, trace_distance

ENV_PREFIX = "LOCALTIME_"
DEFAULT_OUT = "localtime-out"


@dataclass
class TaskContext:
    data: dict
    task: dict
    name: str
    out_dir: Path
    rng: np.random.Generator

    def section(self, key):
        value = scenario.merged(self.data, self.task, key)
        if value is None and key != "params":
            raise ValueError(f"task {self.name!r} needs a '{key}' section")
        return value

    @property
    def params(self) -> dict:
        return scenario.merged(self.data, self.task, "params")

    def path(self, filename: str) -> Path:
        return self.out_dir / self.name / filename


def _spec(ctx):
    return scenario.build_model(ctx.section("model"))


def _lam(ctx, spec):
    lam = scenario.resolve_lambda(ctx.params, spec)
    if lam is None:
        raise ValueError(f"task {ctx.name!r} needs 'lambda' or 'lambda_scaled' in params")
    return lam


def task_spectrum(ctx):
    spec = _spec(ctx)
    rows = [(m, e, g) for m, (e, g) in enumerate(zip(spec.energies, spec.multiplicities))]
    return [write_csv(ctx.path("levels.csv"), ["index", "energy", "multiplicity"], rows),
            write_json(ctx.path("summary.json"), {
                "dim": spec.dim, "levels": spec.count, "ground": spec.ground,
                "bandwidth": spec.bandwidth, "energy_scale": spec.energy_scale,
                "label": spec.label})]


def task_evolve(ctx):
    spec = _spec(ctx)
    rho = scenario.build_state(ctx.section("state"), spec, ctx.rng)
    lam = _lam(ctx, spec)
    p = ctx.params
    times = np.array([float(p["t0"])]) if "t0" in p and "times" not in p else scenario.time_grid(p)
    rows = []
    sigma = bmap = None
    for t in times:
        bmap = ltsmap.exact_map(spec, ltsmap.LocalTimeParams(float(t), lam))
        sigma = ltsmap.apply(bmap, rho)
        u = spec.unitary(float(t))
        sharp = u @ rho.matrix @ u.conj().T
        overlap = float(np.real(np.trace(sigma.matrix @ sharp)))
        rows.append((t, trace_distance(sigma, rho), sigma.purity(), overlap))
    warnings = ltsmap.LocalTimeParams(float(times[-1]), lam).validate(spec, rho)
    coeff_rows = [(m, n, c.real, c.imag, abs(c)) for (m, n), c in np.ndenumerate(bmap.coeff)]
    return [write_csv(ctx.path("coefficients.csv"), ["m", "n", "re", "im", "modulus"], coeff_rows),
            write_csv(ctx.path("evolve.csv"),
                      ["t0", "trace_distance_initial", "purity", "overlap_unitary"], rows),
            write_json(ctx.path("final.json"), {
                "t0": times[-1], "lambda": lam, "state": sigma.matrix,
                "coefficients": bmap.coeff, "warnings": warnings,
                "identity_defect": ltsmap.identity_defect(spec, lam, rho)})]


def _coarse_graining(ctx, spec, lam):
    p = ctx.params
    return coarse.build_coarse_graining(
        spec, lam, p.get("far", coarse.DEFAULT_FAR), p.get("near", coarse.DEFAULT_NEAR),
        mode=p.get("mode", "greedy"), width=p.get("width"))


def task_markov_scan(ctx):
    spec = _spec(ctx)
    lam = _lam(ctx, spec)
    p = ctx.params
    times = scenario.time_grid(p, default=(1.0, 10.0, 6))
    family_kind = p.get("family", "exact")
    if family_kind == "exact":
        def family(t):
            return ltsmap.exact_map(spec, ltsmap.LocalTimeParams(t, lam))
    elif family_kind == "approx":
        cg = _coarse_graining(ctx, spec, lam)

        def family(t):
            return coarse.approx_map(spec, cg, t, phases=p.get("phases", "group"))
    else:
        raise ValueError("family must be 'exact' or 'approx'")
    verdict = markov.markovianity_verdict(family, times)
    rows = [(e.t_early, e.t_late, e.quotient_min_eig, e.family_min_eig, e.composition_defect,
             _pair_status(e)) for e in verdict.pairs]
    return [write_csv(ctx.path("pairs.csv"), ["t_prime", "t_total", "min_choi_eig",
                                              "family_min_eig", "defect", "verdict"], rows),
            write_json(ctx.path("verdict.json"), {
                "family": family_kind, "verdict": verdict.verdict, "times": verdict.times,
                "initial_min_eigs": verdict.initial_min_eigs,
                "failing_pair": verdict.failing_pair})]


def _pair_status(ev, psd_tol=markov.PSD_TOL, comp_tol=1e-12):
    if ev.composition_defect > comp_tol:
        return "composition-fails"
    if ev.family_min_eig < -psd_tol:
        return "not-cp"
    return "ok"


def task_coarse(ctx):
    spec = _spec(ctx)
    lam = _lam(ctx, spec)
    p = ctx.params
    cg = _coarse_graining(ctx, spec, lam)
    times = scenario.time_grid(p)
    rep = coarse.cp_scan(spec, cg, times, p.get("probe"), phases=p.get("phases", "group"))
    groups = [(m, ";".join(str(n) for n in members), delta, g_m, g_up)
              for m, members, delta, g_m, g_up in cg.table()]
    scan = [(t, e, c, e < -markov.PSD_TOL)
            for t, e, c in zip(rep.times, rep.min_eigs, rep.probe_criterion)]
    summary = {"violation_fraction": rep.violation_fraction,
               "violation_fraction_unit": rep.violation_fraction_unit,
               "criterion_violation_fraction": rep.criterion_violation_fraction,
               "g": rep.g, "g_max": rep.g_max, "C": rep.big_c, "lambda": lam}
    if "t0" in p and "t_prime" in p:
        summary["divisibility_defect"] = coarse.check_divisibility(spec, cg, p["t0"], p["t_prime"])
    return [write_csv(ctx.path("groups.csv"), ["m", "members", "delta_m", "g_m", "g_upper_m"], groups),
            write_csv(ctx.path("scan.csv"), ["t0", "min_eig", "criterion", "violated"], scan),
            write_json(ctx.path("scan_summary.json"), summary)]


def task_opensys(ctx):
    inter, probs = scenario.build_interaction(ctx.section("interaction"), ctx.rng)
    p = ctx.params
    if "lambda" in p:
        lam = float(p["lambda"])
    elif "lambda_scaled" in p:
        spread = float(np.ptp(inter.e_grid))
        lam = float(p["lambda_scaled"]) * (spread / math.pi) ** 2
    else:
        lam = math.inf
    times = scenario.time_grid(p)
    pairs, b = opensys.coherence_series(inter, probs, lam, times)
    zeta = opensys.pair_factor_matrix(inter, probs, lam)
    rows = [(t, a, c, abs(b[i, j]), zeta[a, c])
            for i, t in enumerate(times) for j, (a, c) in enumerate(pairs)]
    prof = opensys.decoherence_profile(inter, probs, lam, times,
                                       eps_dec=p.get("eps_dec", opensys.EPS_DEC),
                                       persist=p.get("persist", opensys.PERSIST))
    state_cfg = scenario.merged(ctx.data, ctx.task, "state")
    sys_spec = inter.sys_spec
    if state_cfg is None:
        rho = from_pure(np.ones(sys_spec.dim))
    else:
        rho = scenario.build_state(state_cfg, sys_spec, ctx.rng)
    steady = opensys.steady_state(inter, rho)
    outputs = [
        write_csv(ctx.path("coherence.csv"), ["t", "alpha", "gamma", "modulus", "zeta"], rows),
        write_json(ctx.path("steady_state.json"), {"initial": rho.matrix, "steady": steady.matrix}),
    ]
    profile = {"decoherence_time": prof.decoherence_time, "recurrence_time": prof.recurrence_time,
               "lambda": lam, "env_probabilities": probs, "warnings": list(inter.warnings)}
    lind = scenario.merged(ctx.data, ctx.task, "lindblad")
    if lind is not None:
        comp = opensys.lts_vs_lindblad(inter, probs, lam, lind["gamma"], lind["a_values"], times,
                                       window=p.get("window", 1))
        crows = [(t, a, c, comp.lts[i, j], comp.lindblad[i, j])
                 for i, t in enumerate(times) for j, (a, c) in enumerate(comp.pairs)]
        outputs.append(write_csv(ctx.path("comparison.csv"),
                                 ["t", "alpha", "gamma", "lts", "lindblad"], crows))
        profile.update(rates=comp.rates, lts_crossing=comp.lts_crossing,
                       lindblad_crossing=comp.lindblad_crossing)
    outputs.append(write_json(ctx.path("profile.json"), profile))
    return outputs


def task_classify(ctx):
    spec = _spec(ctx)
    p = ctx.params
    policy = p.get("policy", "minimal")
    if policy == "explicit":
        policy = _lam(ctx, spec)
    elif policy != "minimal":
        raise ValueError("policy must be 'minimal' or 'explicit'")
    cfgs = ctx.task.get("states") or [ctx.section("state")]
    outputs, rows = [], []
    for i, cfg in enumerate(cfgs):
        rho = scenario.build_state(cfg, spec, ctx.rng)
        rep = classify.classify_state(spec, rho, policy)
        outputs.append(write_json(ctx.path(f"report_{i}.json"), rep.to_dict()))
        lo, hi = rep.k_feasible if rep.k_feasible else (math.nan, math.nan)
        rows.append((i, cfg["kind"], rep.domain, rep.d_param, rep.r_param, lo, hi,
                     _nan(rep.k_chosen), _nan(rep.delta_E), _nan(rep.x),
                     _nan(rep.fidelity_floor), rep.lam))
    outputs.append(write_csv(ctx.path("batch.csv"), [
        "index", "state", "domain", "d_param", "r_param", "k_low", "k_high", "k_chosen",
        "delta_E", "x", "fidelity_floor", "lambda"], rows))
    return outputs


def _nan(x):
    return math.nan if x is None else x


def worked_example_factors(spec, k=1.71, r_small=1.0, s=9.0) -> dict:
    """Gaussian constants of the worked spin/oscillator examples for this bandwidth."""
    big_e = spec.bandwidth
    lam_07 = (0.7 * big_e / math.pi) ** 2
    lam_11 = 1.1 * (big_e / math.pi) ** 2
    psi = np.zeros(spec.dim, dtype=complex)
    psi[np.flatnonzero(spec.level_of == 0)[0]] = 1.0
    psi[np.flatnonzero(spec.level_of == spec.count - 1)[0]] = 1.0
    near_g = classify.near_factor(spec, k, r_small, s, lam_07, energy=spec.ground)
    near_0 = classify.near_factor(spec, k, r_small, s, lam_07, energy=0.0)
    return {
        "gap_E_over_k_at_sqrt_lambda_0.7E_over_pi": float(ltsmap.gaussian_factor(big_e / k, lam_07)),
        "gap_E_at_lambda_1.1_E2_over_pi2": float(ltsmap.gaussian_factor(big_e, lam_11)),
        "fidelity_floor_extremes": classify.fidelity_floor(spec, psi / np.linalg.norm(psi), lam_11),
        "near_factor_ground_A": near_g["A"], "near_factor_ground_B": near_g["B"],
        "near_factor_zero_A": near_0["A"], "near_factor_zero_B": near_0["B"],
        "k": k, "r_small": r_small, "s": s,
    }


def task_factors(ctx):
    spec = _spec(ctx)
    values = worked_example_factors(spec)
    return [write_json(ctx.path("factors.json"), values),
            write_csv(ctx.path("factors.csv"), ["quantity", "value"], sorted(values.items()))]


TASKS = {
    "spectrum": task_spectrum,
    "evolve": task_evolve,
    "markov-scan": task_markov_scan,
    "coarse": task_coarse,
    "opensys": task_opensys,
    "classify": task_classify,
    "factors": task_factors,
}


def _run_task(data, task, index, seed, out_dir):
    name = scenario.task_name(task, index)
    ctx = TaskContext(data, task, name, out_dir, np.random.default_rng([seed, index]))
    start = time.perf_counter()
    record = {"name": name, "type": task["type"]}
    try:
        files = TASKS[task["type"]](ctx)
        record.update(status="ok", outputs=[str(Path(f).relative_to(out_dir)) for f in files])
    except Exception as exc:  # a failing task must not stop the others
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                      traceback=traceback.format_exc(limit=3))
    record["wall_time"] = time.perf_counter() - start
    return record


def run_scenario(scen: scenario.Scenario, out_dir: Path, seed: int, threads: int = 1) -> int:
    """Run every task; returns 0 if all succeeded, 1 otherwise."""
    data = scen.data
    tasks = data.get("tasks", [])
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        records = list(pool.map(lambda it: _run_task(data, it[1], it[0], seed, out_dir),
                                enumerate(tasks)))
    write_json(out_dir / "manifest.json", {
        "scenario": scen.source, "sha256": scen.digest, "seed": seed,
        "versions": {"localtime": __version__, "numpy": np.__version__,
                     "pyyaml": yaml.__version__, "python": platform.python_version()},
        "backend": kernels.BACKEND, "threads": threads,
        "wall_time": time.perf_counter() - start, "tasks": records})
    return 0 if all(r["status"] == "ok" for r in records) else 1


def _env(name, cast, default):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        raise SystemExit(f"invalid {ENV_PREFIX}{name}={raw!r}") from None


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _times(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("times must be START:STOP:NUM")
    return {"start": float(parts[0]), "stop": float(parts[1]), "num": int(parts[2])}


def _common_parent():
    parent = argparse.ArgumentParser(add_help=False)
    g = parent.add_argument_group("global")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    g.add_argument("--out-dir", default=argparse.SUPPRESS)
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    return parent


def _model_parent():
    parent = argparse.ArgumentParser(add_help=False)
    g = parent.add_argument_group("model/state/params")
    g.add_argument("--config", help="YAML file supplying model/state/params/interaction sections")
    g.add_argument("--name", help="output subdirectory name")
    g.add_argument("--model", choices=sorted(scenario.MODEL_FIELDS))
    g.add_argument("--n-spins", type=int)
    g.add_argument("--n-modes", type=int)
    g.add_argument("--nu-max", type=int)
    g.add_argument("--omega0", type=float)
    g.add_argument("--energies", type=_floats, help="comma-separated diagonal energies")
    g.add_argument("--state", choices=sorted(scenario.STATE_FIELDS))
    g.add_argument("--sign", type=int)
    g.add_argument("--weights", type=_floats, help="comma-separated level populations")
    g.add_argument("--t0", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--lambda-scaled", type=float, help="lambda in units of (E/pi)^2")
    g.add_argument("--times", type=_times, help="START:STOP:NUM")
    return parent


_MODEL_FLAGS = {"n_spins": "n_spins", "n_modes": "n_modes", "nu_max": "nu_max",
                "omega0": "omega0", "energies": "energies"}
_STATE_FLAGS = {"sign": "sign", "weights": "weights"}
_PARAM_FLAGS = {"t0": "t0", "lam": "lambda", "lambda_scaled": "lambda_scaled", "times": "times",
                "far": "far", "near": "near", "mode": "mode", "width": "width",
                "t_prime": "t_prime", "eps_dec": "eps_dec", "policy": "policy",
                "family": "family", "phases": "phases"}
_INTER_FLAGS = {"n_sys": "n_sys", "n_env": "n_env", "n_sys_spins": "n_sys_spins",
                "n_env_spins": "n_env_spins", "coupling": "coupling", "scale": "scale"}


def _section(base, kind, args, flags):
    out = dict(base or {})
    if kind is not None and out.get("kind") != kind:
        out = {"kind": kind}
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    return out or None


def _task_from_args(args) -> scenario.Scenario:
    base = scenario.load(args.config).data if args.config else {}
    data = {k: v for k, v in base.items() if k in ("seed", "out_dir")}
    task = {"type": args.command}
    model = _section(base.get("model"), args.model, args, _MODEL_FLAGS)
    state = _section(base.get("state"), args.state, args, _STATE_FLAGS)
    params = _section(base.get("params"), None, args, _PARAM_FLAGS)
    inter = _section(base.get("interaction"), getattr(args, "interaction", None), args, _INTER_FLAGS)
    if params and "lambda" in params and args.lambda_scaled is not None:
        params.pop("lambda")
    if params and "lambda_scaled" in params and args.lam is not None:
        params.pop("lambda_scaled")
    for key, value in (("model", model), ("state", state), ("params", params),
                       ("interaction", inter), ("lindblad", base.get("lindblad"))):
        if value:
            task[key] = value
    if args.name:
        task["name"] = args.name
    data["tasks"] = [task]
    scen = scenario.Scenario(data, "<command line>", "", {})
    scenario.validate(scen)
    return scen


def build_parser() -> argparse.ArgumentParser:
    common = _common_parent()
    models = _model_parent()
    parser = argparse.ArgumentParser(
        prog="localtime", parents=[common],
        description="Local-time dynamical maps: evolution, Markovianity and coarse graining.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common, models], help="level table of a model")
    sub.add_parser("evolve", parents=[common, models], help="apply the exact map on a time grid")
    p = sub.add_parser("markov-scan", parents=[common, models], help="Markovianity verdict")
    p.add_argument("--family", choices=["exact", "approx"])
    p.add_argument("--phases", choices=["group", "pair"])
    p.add_argument("--far", type=float)
    p.add_argument("--near", type=float)
    p.add_argument("--mode", choices=["greedy", "window"])
    p.add_argument("--width", type=float)
    p = sub.add_parser("coarse", parents=[common, models], help="coarse graining and CP scan")
    p.add_argument("--far", type=float)
    p.add_argument("--near", type=float)
    p.add_argument("--mode", choices=["greedy", "window"])
    p.add_argument("--width", type=float)
    p.add_argument("--t-prime", type=float)
    p.add_argument("--phases", choices=["group", "pair"])
    p = sub.add_parser("opensys", parents=[common, models], help="reduced pure-decoherence dynamics")
    p.add_argument("--interaction", choices=sorted(scenario.INTER_FIELDS))
    p.add_argument("--n-sys", type=int)
    p.add_argument("--n-env", type=int)
    p.add_argument("--n-sys-spins", type=int)
    p.add_argument("--n-env-spins", type=int)
    p.add_argument("--coupling", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--eps-dec", type=float)
    p = sub.add_parser("classify", parents=[common, models], help="dynamical regime of a state")
    p.add_argument("--policy", choices=["minimal", "explicit"])
    sub.add_parser("factors", parents=[common, models], help="Gaussian constants for a bandwidth")
    p = sub.add_parser("run", parents=[common], help="run a scenario file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("scenario", nargs="?", help="path to a YAML scenario")
    src.add_argument("--bundled", help="name of a bundled scenario (e.g. spin_example)")
    return parser


def bundled_scenarios() -> list:
    root = resources.files("localtime") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.bundled:
                if args.bundled not in bundled_scenarios():
                    raise scenario.ScenarioError(
                        f"no bundled scenario {args.bundled!r} (have: {', '.join(bundled_scenarios())})")
                res = resources.files("localtime") / "scenarios" / f"{args.bundled}.yaml"
                scen = scenario.load_text(res.read_text(encoding="utf-8"), f"bundled:{args.bundled}")
            else:
                scen = scenario.load(args.scenario)
        else:
            scen = _task_from_args(args)
    except scenario.ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    seed = getattr(args, "seed", None)
    seed = _env("SEED", int, scen.data.get("seed", 0)) if seed is None else seed
    out = getattr(args, "out_dir", None)
    out = Path(out if out is not None else _env("OUT_DIR", str, scen.data.get("out_dir", DEFAULT_OUT)))
    threads = getattr(args, "threads", None)
    threads = _env("THREADS", int, 1) if threads is None else threads
    code = run_scenario(scen, out, seed, threads)
    if code:
        print(f"one or more tasks failed; see {out / 'manifest.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
