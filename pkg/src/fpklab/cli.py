"""Batch front-end: config ingestion, staged pipeline, report emission.

A run is described by a TOML (or JSON) config and executes a fixed
sequence of stages, each of which writes one JSON report into the
output directory:

    project           build spaces, model, starting state
    check-assumptions coefficient/gauge/Lyapunov checkers
    solve             grid FPKE flow (state dimension 1 or 2)
    simulate          path ensemble + pathwise diagnostics
    converge          cross-truncation family distances
    weak-residual     weak-form defect of the grid flow
    martingale        defect z-scores over an (f, g, s, t) suite
    superposition     grid flow vs ensemble marginals
    mass-check        finiteness of |x|_H and V along the ensemble

Exit status is 0 when every executed stage passes, otherwise 10 plus
the index of the first failing stage in the list above.  The `mkv` and
`snse-demo` subcommands run their own self-contained reports and use
exit codes 25 and 26 on failure.  All reports are deterministic given
the config (timestamps live in meta.json, which comparisons exclude).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import container
from .coefficients import (AssumptionParams, SamplePlan, check_coercivity,
                           check_gauge_class, check_growth, check_lyapunov,
                           check_symmetry_psd, shifted_square_lyapunov)
from .errors import ConfigError, FpkLabError
from .fpke import (GridSpec, coefficient_l1_mass, solve_fpke_grid,
                   weak_residual_profile)
from .martingale import (PathFunctional, energy_estimate, ensemble_flow,
                         martingale_suite, path_integrability,
                         product_functional, simulate_em)
from .mckean import solve_mkv_interacting, solve_mkv_picard, \
    verify_nonlinear_superposition
from .models import get_model
from .snse import (SNSEConfig, build_snse_coefficients, interaction_tensor,
                   snse_assumption_bundle, snse_energy_check)
from .spaces import (SpaceTriple, h_power_gauge, separating_family,
                     weighted_square_gauge)
from .superposition import (galerkin_convergence, lyapunov_bound_check,
                            superposition_integrability, verify_superposition)

STAGES = [
    "project",
    "check-assumptions",
    "solve",
    "simulate",
    "converge",
    "weak-residual",
    "martingale",
    "superposition",
    "mass-check",
]

_STAGE_DEPS = {
    "project": [],
    "check-assumptions": ["project"],
    "solve": ["project"],
    "simulate": ["project"],
    "converge": ["project"],
    "weak-residual": ["solve"],
    "martingale": ["simulate"],
    "superposition": ["solve", "simulate"],
    "mass-check": ["simulate"],
}

_SUBCOMMAND_STAGES = {
    "run": list(STAGES),
    "check-assumptions": ["check-assumptions"],
    "solve": ["solve"],
    "simulate": ["simulate"],
    "verify": ["superposition"],
    "converge": ["converge"],
}


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    with open(path, "rb") as fh:
        return tomllib.load(fh)


class RunConfig:
    """Validated pipeline configuration."""

    def __init__(self, raw: dict, seed_override=None, tol_scale: float = 1.0):
        self.raw = raw
        run = raw.get("run")
        if not isinstance(run, dict):
            raise ConfigError("config needs a [run] table")
        if "seed" not in run:
            raise ConfigError("[run] must set an explicit seed")
        self.seed = int(seed_override if seed_override is not None
                        else run["seed"])
        self.x0 = np.asarray(run.get("x0", [1.0]), dtype=float)
        self.n = int(run.get("n", self.x0.size))
        self.steps = int(run.get("steps", 500))
        self.paths = int(run.get("paths", 20000))
        self.record_every = int(run.get("record_every", 1))
        self.times = [float(t) for t in run.get("times", [0.25, 0.5, 1.0])]
        self.truncations = [int(v) for v in run.get("truncations", [])]
        self.converge_paths = int(run.get("converge_paths", 20000))
        self.converge_steps = int(run.get("converge_steps", 200))

        model = raw.get("model")
        if not isinstance(model, dict) or "name" not in model:
            raise ConfigError("config needs a [model] table with a name")
        self.model_name = str(model["name"])
        self.model_params = {k: v for k, v in model.items() if k != "name"}

        space = raw.get("space", {})
        if "weights" in space:
            self.weights = np.asarray(space["weights"], dtype=float)
        else:
            n_max = int(space.get("n_max", max(self.n, 8)))
            self.weights = np.arange(1, n_max + 1, dtype=float)

        fam = raw.get("family", {})
        self.family_d_max = int(fam.get("d_max", min(self.n, 2)))
        self.family_per_dim = int(fam.get("per_dim", 4))
        self.family_box = float(fam.get("box", 4.0))

        grid = raw.get("grid", {})
        self.grid_lo = [float(v) for v in grid.get("lo", [-7.0] * min(self.n, 2))]
        self.grid_hi = [float(v) for v in grid.get("hi", [7.0] * min(self.n, 2))]
        self.grid_cells = [int(v) for v in grid.get("cells", [700] * min(self.n, 2))]
        self.grid_steps = int(grid.get("steps", self.steps))
        self.flow_path = grid.get("flow_path")

        tol = raw.get("tolerances", {})
        self.tol_superposition = tol_scale * float(tol.get("superposition", 2e-2))
        self.tol_weak = tol_scale * float(tol.get("weak_residual", 5e-3))
        self.z_max = tol_scale * float(tol.get("z_max", 4.0))
        self.tol_converge = tol_scale * float(
            tol.get("converge", 3.0 / np.sqrt(self.converge_paths))
        )

        asm = raw.get("assumptions", {})
        self.asm_gauge = str(asm.get("gauge", "h2"))
        self.asm_truncations = tuple(
            int(v) for v in asm.get("truncations", [self.n])
        )
        self.asm = {
            "lam1": float(asm.get("lam1", 0.0)),
            "lam2": float(asm.get("lam2", 1.0)),
            "lam3": float(asm.get("lam3", 1.0)),
            "lam4": float(asm.get("lam4", 2.0 * self.n)),
            "gamma": float(asm.get("gamma", 2.0)),
            "gamma_prime": float(asm.get("gamma_prime", 2.0)),
            "c0": float(asm.get("c0", 2.0 * self.n)),
            "m0": float(asm.get("m0", 4.0)),
            "theta_factor": float(asm.get("theta_factor", 2.0)),
        }

        if self.n < 1 or self.x0.size < self.n:
            raise ConfigError("x0 must provide at least n coordinates")
        if self.n > self.weights.size:
            raise ConfigError("n exceeds the configured weight count")

    def stage_seed(self, stage: str) -> int:
        return self.seed * 1000 + STAGES.index(stage)

    def build_model(self, n=None):
        params = dict(self.model_params)
        if n is not None and "n" in _model_accepts_n(self.model_name):
            params["n"] = n
        try:
            return get_model(self.model_name, **params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for model "
                              f"{self.model_name!r}: {exc}") from None

    def build_family(self):
        return separating_family(self.family_d_max, self.family_per_dim,
                                 box=self.family_box)

    def build_triple(self):
        return SpaceTriple(self.weights)


def _model_accepts_n(name: str) -> set:
    from inspect import signature

    from .models import REGISTRY

    return set(signature(REGISTRY[name]).parameters)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def _stage_project(cfg: RunConfig, ctx: dict) -> dict:
    triple = cfg.build_triple()
    model = cfg.build_model(n=cfg.n)
    x0n = triple.project(cfg.x0, cfg.n)
    ctx["triple"], ctx["model"], ctx["x0n"] = triple, model, x0n
    ctx["family"] = cfg.build_family()
    norms = {
        "H": triple.norm(x0n, "H"),
        "X": triple.norm(x0n, "X"),
    }
    contraction = all(
        triple.norm(triple.project(cfg.x0, k), "H") <= norms["H"] + 1e-12
        for k in range(1, cfg.n + 1)
    )
    return {
        "n": cfg.n,
        "model": model.name,
        "weights": cfg.weights[: cfg.n],
        "x0": x0n,
        "x0_norms": norms,
        "family_size": len(ctx["family"]),
        "projection_contraction": bool(contraction),
        "passed": bool(contraction),
    }


def _stage_check_assumptions(cfg: RunConfig, ctx: dict) -> dict:
    triple, model = ctx["triple"], ctx["model"]
    a = cfg.asm
    if cfg.asm_gauge == "weighted":
        gauge = weighted_square_gauge(triple)
    else:
        gauge = h_power_gauge(2.0)
    params = AssumptionParams(
        lam1=a["lam1"], lam2=a["lam2"], lam3=a["lam3"], lam4=a["lam4"],
        gamma=a["gamma"], gamma_prime=a["gamma_prime"],
    )
    lyap = shifted_square_lyapunov(theta_factor=a["theta_factor"],
                                   c0=a["c0"], m0=a["m0"])
    plan = SamplePlan(seed=cfg.stage_seed("check-assumptions"),
                      truncations=cfg.asm_truncations)
    reports = [
        check_symmetry_psd(model, plan),
        check_coercivity(model, gauge, params, plan),
        check_growth(model, triple, gauge, params, plan),
        check_lyapunov(model, lyap, plan),
        check_gauge_class(gauge, triple, plan, horizon=model.horizon),
    ]
    ctx["gauge"], ctx["lyap"] = gauge, lyap
    passed = all(r.verdict == "pass" for r in reports)
    return {
        "checks": [r.to_dict() for r in reports],
        "plan_seed": plan.seed,
        "passed": bool(passed),
    }


def _stage_solve(cfg: RunConfig, ctx: dict) -> dict:
    if cfg.flow_path:
        flow = container.load_flow(cfg.flow_path)
        source = str(cfg.flow_path)
    else:
        if cfg.n > 2:
            raise ConfigError("grid solve supports state dimension 1 or 2")
        spec = GridSpec(
            lo=np.asarray(cfg.grid_lo[: cfg.n]),
            hi=np.asarray(cfg.grid_hi[: cfg.n]),
            cells=tuple(cfg.grid_cells[: cfg.n]),
            steps=cfg.grid_steps,
        )
        flow = solve_fpke_grid(ctx["model"], ctx["x0n"], cfg.n, spec)
        source = "solved"
    ctx["flow"] = flow
    masses = np.array([m.cell_sum_mass() for m in flow.measures])
    drift = float(np.max(np.abs(masses - 1.0)))
    min_density = float(min(m.density.min() for m in flow.measures))
    return {
        "nodes": len(flow),
        "source": source,
        "mass_drift": drift,
        "min_density": min_density,
        "positive": bool(min_density >= 0.0),
        "passed": bool(drift <= 1e-9 and min_density >= 0.0),
    }


def _stage_simulate(cfg: RunConfig, ctx: dict) -> dict:
    model, x0n, triple = ctx["model"], ctx["x0n"], ctx["triple"]
    ens = simulate_em(model, x0n, cfg.n, cfg.steps, cfg.paths,
                      cfg.stage_seed("simulate"),
                      record_every=cfg.record_every)
    ctx["ens"] = ens
    integ = path_integrability(ens, model, triple)
    gauge = ctx.get("gauge") or h_power_gauge(2.0)
    energy1 = energy_estimate(ens, 1, gauge)
    finite = bool(np.all(np.isfinite(integ)))
    return {
        "paths": ens.n_paths,
        "nodes": int(ens.times.size),
        "seed": ens.seed,
        "path_integrability_max": float(integ.max()),
        "path_integrability_finite": finite,
        "energy_q1": float(energy1),
        "passed": bool(finite and np.isfinite(energy1)),
    }


def _stage_converge(cfg: RunConfig, ctx: dict) -> dict:
    levels = cfg.truncations or [cfg.n]
    if len(levels) < 2:
        raise ConfigError("converge stage needs >= 2 truncation levels")
    family = ctx["family"]
    flows = {}
    for n in levels:
        model = cfg.build_model(n=n)
        ens = simulate_em(model, np.resize(cfg.x0, n), n,
                          cfg.converge_steps, cfg.converge_paths,
                          cfg.stage_seed("converge") + n)
        flows[n] = ensemble_flow(ens)
    table = galerkin_convergence(flows, family, cfg.times)
    worst = max(row["distance"] for row in table["pairs"])
    passed = worst <= cfg.tol_converge or table["stabilizing"]
    table["max_pair_distance"] = worst
    table["tol"] = cfg.tol_converge
    table["passed"] = bool(passed)
    ctx["converge_table"] = table
    return table


def _stage_weak_residual(cfg: RunConfig, ctx: dict) -> dict:
    flow, model, family = ctx["flow"], ctx["model"], ctx["family"]
    fs = family[:5]
    res = weak_residual_profile(flow, fs, model, cfg.times)
    worst = float(res.max())
    return {
        "times": cfg.times,
        "functions": [f.name for f in fs],
        "residuals": res,
        "max_residual": worst,
        "tol": cfg.tol_weak,
        "l1_coefficient_mass": float(coefficient_l1_mass(flow, model)),
        "passed": bool(worst <= cfg.tol_weak),
    }


def _martingale_combos(cfg: RunConfig, ctx: dict):
    family = ctx["family"]
    ones = PathFunctional("one", 0.0, lambda e: np.ones(e.n_paths))
    times = sorted(cfg.times)
    if len(times) < 2:
        raise ConfigError("martingale stage needs >= 2 check times")
    windows = [(times[i], times[j]) for i in range(len(times))
               for j in range(i + 1, len(times))]
    combos = []
    for f in family[:4]:
        for s, t in windows:
            conds = [ones, product_functional([f], [s])]
            combos.append((f, s, t, conds))
    return combos


def _stage_martingale(cfg: RunConfig, ctx: dict) -> dict:
    ens, model = ctx["ens"], ctx["model"]
    combos = _martingale_combos(cfg, ctx)
    stats = martingale_suite(ens, model, combos)
    ctx["martingale_stats"] = stats
    worst = max(abs(st.z) for st in stats)
    return {
        "combinations": len(stats),
        "max_abs_z": float(worst),
        "z_max": cfg.z_max,
        "stats": [
            {"f": st.f_name, "s": st.s, "t": st.t, "g": st.g_name,
             "stat": st.stat, "se": st.se, "z": st.z}
            for st in stats
        ],
        "passed": bool(worst <= cfg.z_max),
    }


def _stage_superposition(cfg: RunConfig, ctx: dict) -> dict:
    flow, ens, family = ctx["flow"], ctx["ens"], ctx["family"]
    report = verify_superposition(flow, ens, family, cfg.tol_superposition,
                                  times=[float(t) for t in ens.times])
    ctx["superposition_report"] = report
    s2 = superposition_integrability(flow, ctx["model"])
    out = report.to_dict()
    out["integrability"] = float(s2)
    out["passed"] = bool(report.passed and np.isfinite(s2))
    return out


def _stage_mass_check(cfg: RunConfig, ctx: dict) -> dict:
    ens = ctx["ens"]
    lyap = ctx.get("lyap") or shifted_square_lyapunov()
    norms = np.einsum("pki,pki->pk", ens.paths, ens.paths)
    v = np.asarray(lyap.v(ens.paths), dtype=float)
    frac_h = float(np.mean(np.isfinite(norms)))
    frac_v = float(np.mean(np.isfinite(v)))
    ledger = lyapunov_bound_check(ensemble_flow(ens), lyap, 1, ctx["x0n"])
    return {
        "finite_H_fraction": frac_h,
        "finite_V_fraction": frac_v,
        "ledger": ledger.to_dict(),
        "passed": bool(frac_h == 1.0 and frac_v == 1.0 and ledger.passed),
    }


_STAGE_FNS = {
    "project": _stage_project,
    "check-assumptions": _stage_check_assumptions,
    "solve": _stage_solve,
    "simulate": _stage_simulate,
    "converge": _stage_converge,
    "weak-residual": _stage_weak_residual,
    "martingale": _stage_martingale,
    "superposition": _stage_superposition,
    "mass-check": _stage_mass_check,
}


def _resolve_stages(requested) -> list:
    seen = set()

    def add(name):
        if name in seen:
            return
        for dep in _STAGE_DEPS[name]:
            add(dep)
        seen.add(name)

    for name in requested:
        if name not in _STAGE_DEPS:
            raise ConfigError(
                f"unknown stage {name!r}; known: {', '.join(STAGES)}"
            )
        add(name)
    return [s for s in STAGES if s in seen]


def run_pipeline(cfg: RunConfig, out_dir, stages=None) -> int:
    """Execute the requested stages; return the process exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = _resolve_stages(stages or STAGES)
    ctx: dict = {}
    summary = {
        "model": cfg.model_name,
        "base_seed": cfg.seed,
        "stages": {},
        "stage_order": ordered,
    }
    status = 0
    for name in ordered:
        try:
            report = _STAGE_FNS[name](cfg, ctx)
        except Exception as exc:  # noqa: BLE001 -- stage-tagged halt
            summary["stages"][name] = {
                "passed": False,
                "error": f"{type(exc).__name__}: {exc}",
            }
            status = 10 + STAGES.index(name)
            break
        report.setdefault("seed", cfg.stage_seed(name))
        container.write_json_report(out / f"{name}.json", report)
        summary["stages"][name] = {
            "passed": bool(report.get("passed", True)),
            "seed": cfg.stage_seed(name),
        }
        if not report.get("passed", True) and status == 0:
            status = 10 + STAGES.index(name)
    if "ens" in ctx:
        container.save_ensemble(out / "ensemble.fpkl", ctx["ens"])
    if "flow" in ctx:
        container.save_flow(out / "flow.fpkl", ctx["flow"])
    if "martingale_stats" in ctx:
        container.write_martingale_csv(out / "martingale.csv",
                                       ctx["martingale_stats"])
    if "converge_table" in ctx:
        container.write_table_csv(
            out / "converge.csv", ctx["converge_table"]["pairs"],
            ["t", "n", "n2", "distance"],
        )
    summary["exit_status"] = status
    container.write_json_report(out / "summary.json", summary)
    container.write_meta_sidecar(out / "meta.json",
                                 {"config_model": cfg.model_name})
    return status


# ---------------------------------------------------------------------------
# mkv and snse front-ends
# ---------------------------------------------------------------------------


def run_mkv(raw: dict, out_dir, seed_override=None,
            tol_scale: float = 1.0) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sec = raw.get("mkv")
    if not isinstance(sec, dict):
        raise ConfigError("config needs an [mkv] table")
    if "seed" not in sec:
        raise ConfigError("[mkv] must set an explicit seed")
    seed = int(seed_override if seed_override is not None else sec["seed"])
    name = str(sec.get("model", "mean-field-ou"))
    params = sec.get("params", {})
    model = get_model(name, **params)
    x0 = np.asarray(sec.get("x0", [1.0]), dtype=float)
    n = int(sec.get("n", x0.size))
    steps = int(sec.get("steps", 200))
    paths = int(sec.get("paths", 20000))
    tol = tol_scale * float(sec.get("tol", 2e-2))
    max_iter = int(sec.get("max_iter", 10))
    fam = raw.get("family", {})
    family = separating_family(int(fam.get("d_max", min(n, 2))),
                               int(fam.get("per_dim", 4)),
                               box=float(fam.get("box", 4.0)))
    result = solve_mkv_picard(model, x0, n, steps, paths, seed, family,
                              tol=tol, max_iter=max_iter)
    report = {
        "model": model.name,
        "seed": seed,
        "tol": tol,
        "picard": result.to_dict(),
        "mean_at_end": [float(v) for v in
                        result.flow.measures[-1].mean()],
    }
    passed = result.converged
    if bool(sec.get("oracle", True)):
        oracle_flow, oracle_ens = solve_mkv_interacting(
            model, x0, n, steps, paths, seed + 1)
        cross = verify_superposition(result.flow, oracle_flow, family,
                                     2.0 * 3.0 / np.sqrt(paths))
        report["oracle_distance"] = float(cross.max_distance)
        report["oracle_tol"] = float(cross.tol)
        passed = passed and cross.passed
    nl = verify_nonlinear_superposition(model, result.flow, result.ensemble,
                                        family, tol)
    report["nonlinear_check"] = {
        "max_distance": nl["superposition"].max_distance,
        "integrability": nl["integrability"],
        "max_abs_z": nl["max_abs_z"],
        "passed": nl["passed"],
    }
    passed = passed and nl["passed"]
    report["passed"] = bool(passed)
    container.write_json_report(out / "mkv.json", report)
    container.write_table_csv(
        out / "mkv_trace.csv",
        [{"iteration": i + 1, "distance": float(d)}
         for i, d in enumerate(result.distance_trace)],
        ["iteration", "distance"],
    )
    container.write_meta_sidecar(out / "meta.json", {"subcommand": "mkv"})
    return 0 if passed else 25


def run_snse_demo(raw: dict, out_dir, seed_override=None,
                  tol_scale: float = 1.0) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sec = raw.get("snse")
    if not isinstance(sec, dict):
        raise ConfigError("config needs an [snse] table")
    if "seed" not in sec:
        raise ConfigError("[snse] must set an explicit seed")
    seed = int(seed_override if seed_override is not None else sec["seed"])
    cfg = SNSEConfig.with_decay(
        k_max=int(sec.get("k_max", 4)),
        viscosity=float(sec.get("viscosity", 0.1)),
        q0=float(sec.get("q0", 0.02)),
        decay=float(sec.get("decay", 2.0)),
        horizon=float(sec.get("horizon", 1.0)),
    )
    steps = int(sec.get("steps", 400))
    paths = int(sec.get("paths", 200))
    n = cfg.dim

    bundle = snse_assumption_bundle(cfg, seed=seed * 1000)
    model, triple = bundle["model"], bundle["triple"]

    tensor = interaction_tensor(cfg)
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((1000, n))
    b_of = np.einsum("ijl,mj,ml->mi", tensor, states, states)
    cancel = np.abs(np.einsum("mi,mi->m", b_of, states))
    cube = np.linalg.norm(states, axis=1) ** 3
    cancel_rel = float(np.max(cancel / cube))

    checks = [
        check_symmetry_psd(model, bundle["plan"]),
        check_coercivity(model, bundle["gauge"], bundle["params"],
                         bundle["plan"]),
        check_growth(model, triple, bundle["gauge"], bundle["params"],
                     bundle["plan"]),
        check_lyapunov(model, bundle["lyapunov"], bundle["plan"]),
        check_gauge_class(bundle["gauge"], triple, bundle["plan"],
                          horizon=cfg.horizon),
    ]
    checks_pass = all(r.verdict == "pass" for r in checks)

    x0 = np.zeros(n)
    x0[0] = 1.0
    noise_model = build_snse_coefficients(cfg, with_viscosity=False,
                                          with_convection=False)
    ens_noise = simulate_em(noise_model, x0, n, steps, paths, seed + 1)
    noise_report = snse_energy_check(ens_noise, cfg, noise_only=True)

    ens_full = simulate_em(model, x0, n, steps, paths, seed + 2)
    energy_report = snse_energy_check(ens_full, cfg)
    flow = ensemble_flow(ens_full)
    s2 = superposition_integrability(flow, model)

    passed = bool(
        cancel_rel <= 1e-12 * tol_scale
        and checks_pass
        and noise_report["passed"]
        and energy_report["passed"]
        and np.isfinite(s2)
    )
    report = {
        "config": cfg.to_dict(),
        "dim": n,
        "seed": seed,
        "cancellation_rel_max": cancel_rel,
        "checks": [r.to_dict() for r in checks],
        "noise_only": {k: v for k, v in noise_report.items()},
        "energy": {k: v for k, v in energy_report.items()},
        "integrability": float(s2),
        "passed": passed,
    }
    container.write_json_report(out / "snse.json", report)
    container.write_meta_sidecar(out / "meta.json",
                                 {"subcommand": "snse-demo"})
    return 0 if passed else 26


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpklab",
        description="Staged verification pipeline for coordinate "
                    "diffusion models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ["run", "check-assumptions", "solve", "simulate", "verify",
                 "converge", "mkv", "snse-demo"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML or JSON config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--stages", default=None,
                       help="comma-separated stage subset (run only)")
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--tol-scale", type=float, default=1.0)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        if args.command == "mkv":
            return run_mkv(raw, args.out, args.seed_override, args.tol_scale)
        if args.command == "snse-demo":
            return run_snse_demo(raw, args.out, args.seed_override,
                                 args.tol_scale)
        cfg = RunConfig(raw, seed_override=args.seed_override,
                        tol_scale=args.tol_scale)
        if args.stages:
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        else:
            stages = _SUBCOMMAND_STAGES[args.command]
        return run_pipeline(cfg, args.out, stages)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FpkLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
