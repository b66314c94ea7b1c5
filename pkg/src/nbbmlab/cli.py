"""Command-line front end: experiment orchestration and reproducible outputs.

Every run resolves its configuration (defaults < config file < flags),
echoes it into the output directory, writes CSV/JSON artefacts, and ends
with a manifest of file checksums plus a one-line JSON summary on stdout.
Seeds for the module calls are derived from the master seed by a fixed
SHA-256 scheme (recorded in the manifest), so identical configurations
give byte-identical outputs.

Exit codes: 0 success, 1 numerical failure, 2 invalid arguments.
"""

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import coupling, fbpde, killedbm, stationary, waves
from .measures import from_positions, wasserstein_w1
from .nbbm import advance_to, log_trajectory, new_system, save_checkpoint

SEED_SCHEME = "sha256/v1 + numpy SeedSequence spawn"


class ConfigError(Exception):
    pass


def derive_seed(master_seed: int, *stream) -> int:
    """64-bit seed from the master seed and stream identifiers (stable)."""
    tag = "nbbm-seeds-v1:" + ":".join([str(master_seed)] + [str(s) for s in stream])
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")


def load_config(path) -> dict:
    """Flat key-value JSON config; flags override its entries."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a flat JSON object")
    return cfg


def _resolve(defaults: dict, cfg: dict, flags: dict) -> dict:
    out = dict(defaults)
    for k, v in cfg.items():
        key = k.replace("-", "_")
        if key not in defaults:
            raise ConfigError(f"unknown config key {k!r}")
        out[key] = v
    for k, v in flags.items():
        if v is not None:
            out[k] = v
    return out


def _int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(tok) for tok in str(text).split(",") if tok]


def _float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(tok) for tok in str(text).split(",") if tok]


class _OutputDir:
    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files = []

    def file(self, name) -> Path:
        p = self.path / name
        self.files.append(p)
        return p

    def write_csv(self, name, header, rows) -> Path:
        p = self.file(name)
        with open(p, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(
                    repr(float(v)) if isinstance(v, float) else str(v)
                    for v in row) + "\n")
        return p

    def write_json(self, name, obj) -> Path:
        p = self.file(name)
        with open(p, "w") as fh:
            json.dump(obj, fh, sort_keys=True, indent=1)
            fh.write("\n")
        return p

    def finalise(self, resolved: dict, master_seed) -> None:
        self.write_json("resolved-config.json", resolved)
        digests = {}
        for p in sorted(self.files):
            if p.name == "manifest.json":
                continue
            digests[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
        self.write_json("manifest.json", {
            "files": digests,
            "seed_scheme": SEED_SCHEME,
            "master_seed": master_seed,
        })


# ---------------------------------------------------------------------------
# subcommand handlers: each returns the summary dict
# ---------------------------------------------------------------------------

def _cmd_simulate(cfg, out):
    n = int(cfg["n"])
    seed = derive_seed(cfg["seed"], "simulate")
    ps = new_system(n, cfg["init"], seed=seed)
    if cfg["t"] > 0:
        log_trajectory(ps, float(cfg["t"]), float(cfg["log_interval"]),
                       out.file("trajectory.csv"))
    else:
        with open(out.file("trajectory.csv"), "w") as fh:
            fh.write("time,L,A,M,n_events\n")
            fh.write(f"{ps.time!r},{ps.leftmost!r},{ps.median!r},"
                     f"{ps.barycentre!r},{ps.n_events}\n")
    save_checkpoint(ps, out.file("checkpoint.json"))
    summary = {"n": n, "t": ps.time, "n_events": ps.n_events,
               "L": ps.leftmost, "M": ps.barycentre}
    if n <= 16:
        summary["positions"] = [float(x) for x in ps.positions]
    return summary


def _cmd_stationary(cfg, out):
    n = int(cfg["n"])
    if cfg["horizon"] is not None and cfg["burn_in"] is not None \
            and float(cfg["horizon"]) <= float(cfg["burn_in"]):
        raise ConfigError("conflicting scale parameters: horizon <= burn-in")
    ens = stationary.estimate_stationary(
        n,
        burn_in=cfg["burn_in"], horizon=cfg["horizon"],
        delta_sample=float(cfg["delta_sample"]), centring=cfg["centring"],
        seed=derive_seed(cfg["seed"], "stationary", n), init=cfg["init"])
    ens.mean_profile.to_csv(out.file("mean_profile.csv"))
    gaps = stationary.snapshot_gaps(ens)
    out.write_csv("gaps.csv", "index,gap",
                  [(i, float(g)) for i, g in enumerate(gaps)])
    digests = [hashlib.sha256(s.atoms.tobytes()).hexdigest()[:16]
               for s in ens.snapshots]
    out.write_json("ensemble.json", {
        "n": n, "burn_in": ens.burn_in, "horizon": ens.horizon,
        "delta_sample": ens.delta_sample, "centring": ens.centring,
        "n_snapshots": len(ens.snapshots), "snapshot_digests": digests,
    })
    mean_gap, gap_se = stationary.selection_gap_report(ens)
    return {"n": n, "n_snapshots": len(ens.snapshots),
            "mean_gap": mean_gap, "gap_se": gap_se}


def _cmd_velocity(cfg, out):
    rows = []
    for n in _int_list(cfg["n"]):
        est = stationary.estimate_velocity(
            n, horizon=float(cfg["horizon"]),
            n_replicas=int(cfg["replicas"]),
            seed=derive_seed(cfg["seed"], "velocity", n),
            burn_in=float(cfg["burn_in"]))
        rows.append((n, est.v_hat, est.std_error))
    out.write_csv("velocity.csv", "N,v_hat,std_error", rows)
    return {"results": [{"n": r[0], "v_hat": r[1], "std_error": r[2]}
                        for r in rows]}


def _parse_scheme(text):
    if text in ("split", "split_cut"):
        return "split_cut", None
    if text.startswith("penalised"):
        n = int(text.split(":", 1)[1]) if ":" in text else 64
        return "penalised", n
    raise ConfigError(f"unknown scheme {text!r}")


def _cmd_pde(cfg, out):
    scheme, n_pen = _parse_scheme(cfg["scheme"])
    params = fbpde.FlowParams(dx=float(cfg["dx"]), dt=float(cfg["dt"]),
                              x_window=float(cfg["window"]), scheme=scheme,
                              n_penalty=n_pen or 64)
    init = cfg["init"]
    if init.startswith("file:"):
        from .measures import tailcdf_from_csv
        init = tailcdf_from_csv(init[5:])
    t_end = float(cfg["t"])
    saves = _float_list(cfg["save"]) if cfg["save"] else [t_end]
    if scheme == "split_cut":
        traj = fbpde.solve_density(init, t_end, params, save_times=saves)
        for prof in traj.profiles:
            prof.to_csv(out.file(f"profile_t{prof.t:g}.csv"))
        times, bnd = traj.times, traj.boundary
        final_l = traj.final.boundary
    else:
        traj = fbpde.solve_cdf(init, t_end, params, save_times=saves)
        for tl, tt in zip(traj.tails, traj.tail_times):
            tl.to_csv(out.file(f"profile_t{tt:g}.csv"))
        times, bnd = traj.times, traj.boundary
        final_l = float(bnd[-1])
    rows = [(float(t), float(l), float(l / t) if t > 0 else 0.0)
            for t, l in zip(times[::20], bnd[::20])]
    out.write_csv("boundary.csv", "t,L,L_over_t", rows)
    return {"t_end": t_end, "L": final_l,
            "L_over_t": final_l / t_end if t_end else 0.0}


def _cmd_wave(cfg, out):
    if cfg["action"] != "dump":
        raise ConfigError(f"unknown wave action {cfg['action']!r}")
    wave = waves.travelling_wave(float(cfg["c"]))
    xs = np.arange(0.0, float(cfg["xmax"]) + 1e-12, float(cfg["dx"]))
    out.write_csv("wave.csv", "x,density,tail",
                  [(float(x), float(wave.density(x)), float(wave.tail(x)))
                   for x in xs])
    return {"c": wave.speed, "points": len(xs), "mean": wave.mean}


def _init_spec(text):
    if text == "zeros":
        return "zeros"
    if text == "pimin":
        return waves.sample_pi_min
    if text.startswith("pic:"):
        return waves.travelling_wave(float(text[4:])).sample
    if text.startswith("delta:"):
        return ("delta", float(text[6:]))
    raise ConfigError(f"unknown init {text!r}")


def _cmd_couple(cfg, out):
    ts = _float_list(cfg["t"])
    reports = coupling.contraction_estimate(
        int(cfg["n"]), _init_spec(cfg["init_a"]), _init_spec(cfg["init_b"]),
        ts, int(cfg["replicas"]),
        seed=derive_seed(cfg["seed"], "couple"), mode=cfg["mode"])
    out.write_csv("contraction.csv", "t,lhs,rhs,margin",
                  [(r.t, r.lhs, r.rhs, r.margin) for r in reports])
    return {"n": int(cfg["n"]),
            "all_ok": all(r.ok for r in reports),
            "margins": [r.margin for r in reports]}


def _cmd_killedbm(cfg, out):
    if cfg["boundary"]:
        boundary = killedbm.boundary_from_csv(cfg["boundary"])
    else:
        boundary = killedbm.linear_boundary(
            float(cfg["boundary_l0"]), float(cfg["boundary_speed"]),
            float(cfg["t"]) + 1.0)
    init = _init_spec(cfg["init"])
    samples = killedbm.simulate_killed(
        init, boundary, float(cfg["t"]), float(cfg["dt"]),
        int(cfg["paths"]), seed=derive_seed(cfg["seed"], "killedbm"))
    out.write_csv("tau.csv", "tau",
                  [(float(t),) for t in samples.observed_tau()])
    out.write_csv("survivors.csv", "x",
                  [(float(x),) for x in samples.survivors])
    rep = killedbm.killing_time_test(samples) if \
        samples.observed_tau().size >= 1000 else None
    summary = {"paths": samples.n_paths,
               "survival_fraction": samples.survival_fraction}
    if rep:
        summary.update({"ks_stat": rep.ks_stat, "p_value": rep.p_value,
                        "mean_tau": rep.mean_tau})
    return summary


def _cmd_selection(cfg, out):
    rows = []
    for n in _int_list(cfg["n"]):
        ens = stationary.estimate_stationary(
            n, burn_in=cfg["burn_in"], horizon=cfg["horizon"],
            seed=derive_seed(cfg["seed"], "selection", n), init="pimin")
        mean_gap, gap_se = stationary.selection_gap_report(ens)
        rows.append((n, mean_gap, gap_se))
    out.write_csv("gaps.csv", "N,gap,se", rows)
    return {"gaps": [{"n": r[0], "gap": r[1], "se": r[2]} for r in rows]}


def _cmd_conjecture(cfg, out):
    rep = fbpde.conjecture_experiment(float(cfg["lam"]), float(cfg["t"]))
    out.write_csv("conjecture.csv", "t,L_over_t,sup_distance",
                  [(float(t), float(l), float(s)) for t, l, s
                   in zip(rep.times, rep.boundary_over_t, rep.sup_distance)])
    return {"lam": rep.lam,
            "final_speed": float(rep.boundary_over_t[-1]),
            "final_sup_distance": float(rep.sup_distance[-1])}


# ---------------------------------------------------------------------------
# verify: reduced-scale property battery
# ---------------------------------------------------------------------------

def _verify_checks(seed):
    rng = np.random.default_rng(seed)

    def wave_mass():
        xs = np.linspace(0, 40, 40001)
        return abs(np.trapezoid(waves.pi_min(xs), xs) - 1.0) < 1e-6

    def wave_residual():
        xs = np.linspace(0.01, 20, 500)
        return float(np.max(np.abs(waves.wave_ode_residual(
            waves.MINIMAL_WAVE, xs)))) < 1e-10

    def w1_bruteforce():
        import itertools
        for _ in range(30):
            k = int(rng.integers(2, 6))
            x, y = rng.normal(size=k), rng.normal(size=k)
            best = min(sum(abs(x[i] - y[p[i]]) for i in range(k)) / k
                       for p in itertools.permutations(range(k)))
            if abs(best - wasserstein_w1(from_positions(x),
                                         from_positions(y))) > 1e-12:
                return False
        return True

    def sampler_mean():
        mu = waves.sample_pi_min(rng, 4000)
        return abs(mu.atoms.mean() - math.sqrt(2)) < 3.0 / math.sqrt(4000) + 0.02

    def particle_barycentre():
        ps = new_system(8, waves.sample_pi_min, seed=int(rng.integers(2**32)))
        advance_to(ps, 2.0)
        b = (ps.positions - ps.leftmost).mean()
        return abs(ps.barycentre - (ps.leftmost + b)) < 1e-12

    def pde_mass():
        params = fbpde.FlowParams(dx=0.02, dt=0.002, x_window=25.0)
        traj = fbpde.solve_density("pimin", 0.5, params)
        return abs(traj.final.mass() - 1.0) < 1e-6

    def stretch_reflexive():
        grid = np.arange(-6.0, 24.0, 0.02)
        u = fbpde.wave_tail_on_grid(waves.MINIMAL_WAVE, grid)
        return fbpde.stretch_ge(u, u, 0.04)

    def coupling_diagonal():
        cp = coupling.new_coupled(8, "zeros", "zeros",
                                  seed=int(rng.integers(2**32)))
        coupling.advance_coupled(cp, 1.0)
        return cp.distance() == 0.0

    def killing_exponential():
        bd = killedbm.linear_boundary(0.0, math.sqrt(2), 2.0)
        s = killedbm.simulate_killed(waves.sample_pi_min, bd, 2.0, 2e-3,
                                     4000, seed=int(rng.integers(2**32)))
        return killedbm.killing_time_test(s).p_value > 1e-3

    def selection_positive():
        ens = stationary.estimate_stationary(16, burn_in=20.0, horizon=60.0,
                                             seed=int(rng.integers(2**32)))
        return stationary.selection_gap(ens) > 0.0

    return [("wave_mass", wave_mass), ("wave_residual", wave_residual),
            ("w1_bruteforce", w1_bruteforce), ("sampler_mean", sampler_mean),
            ("particle_barycentre", particle_barycentre),
            ("pde_mass", pde_mass), ("stretch_reflexive", stretch_reflexive),
            ("coupling_diagonal", coupling_diagonal),
            ("killing_exponential", killing_exponential),
            ("selection_positive", selection_positive)]


def _cmd_verify(cfg, out):
    if cfg["suite"] not in ("quick", "full"):
        raise ConfigError(f"unknown suite {cfg['suite']!r}")
    seed = derive_seed(cfg["seed"], "verify")
    results = []
    for name, check in _verify_checks(seed):
        ok = bool(check())
        results.append((name, ok))
        print(f"{'ok  ' if ok else 'FAIL'} {name}")
    out.write_csv("verify.csv", "check,ok", results)
    if not all(ok for _, ok in results):
        raise ArithmeticError("verification failures: " + ", ".join(
            name for name, ok in results if not ok))
    return {"suite": cfg["suite"], "checks": len(results), "failures": 0}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "simulate": {"n": 2, "t": 1.0, "init": "zeros", "log_interval": 0.5,
                 "seed": 0, "out": "out/simulate"},
    "stationary": {"n": 64, "burn_in": None, "horizon": None,
                   "delta_sample": 1.0, "centring": "leftmost",
                   "init": "zeros", "seed": 0, "out": "out/stationary"},
    "velocity": {"n": "2,64", "replicas": 8, "horizon": 120.0,
                 "burn_in": 20.0, "seed": 0, "out": "out/velocity"},
    "pde": {"init": "heaviside", "t": 1.0, "dx": 0.01, "dt": 5e-4,
            "window": 40.0, "scheme": "split", "save": "",
            "seed": 0, "out": "out/pde"},
    "wave": {"action": "dump", "c": math.sqrt(2), "xmax": 20.0, "dx": 0.01,
             "seed": 0, "out": "out/wave"},
    "couple": {"n": 64, "init_a": "pimin", "init_b": "pimin", "t": "0.5,1",
               "replicas": 50, "mode": "restricted", "seed": 0,
               "out": "out/couple"},
    "killedbm": {"boundary": "", "boundary_speed": math.sqrt(2),
                 "boundary_l0": 0.0, "init": "pimin", "t": 1.0, "dt": 1e-3,
                 "paths": 10000, "seed": 0, "out": "out/killedbm"},
    "selection": {"n": "16,32", "burn_in": None, "horizon": None, "seed": 0,
                  "out": "out/selection"},
    "conjecture": {"lam": 2.0, "t": 10.0, "seed": 0, "out": "out/conjecture"},
    "verify": {"suite": "quick", "seed": 0, "out": "out/verify"},
}

_HANDLERS = {
    "simulate": _cmd_simulate, "stationary": _cmd_stationary,
    "velocity": _cmd_velocity, "pde": _cmd_pde, "wave": _cmd_wave,
    "couple": _cmd_couple, "killedbm": _cmd_killedbm,
    "selection": _cmd_selection, "conjecture": _cmd_conjecture,
    "verify": _cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbbmlab",
        description="particle-selection simulator and free-boundary PDE lab")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, *specs):
        sp = subs.add_parser(name)
        sp.add_argument("--config", default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=None)
        for flag, kw in specs:
            sp.add_argument(flag, **kw)
        return sp

    add("simulate", ("--n", {"type": int}), ("--t", {"type": float}),
        ("--init", {}), ("--log-interval", {"type": float, "dest": "log_interval"}))
    add("stationary", ("--n", {"type": int}),
        ("--burn-in", {"type": float, "dest": "burn_in"}),
        ("--horizon", {"type": float}),
        ("--delta-sample", {"type": float, "dest": "delta_sample"}),
        ("--centring", {"choices": ["leftmost", "median"]}), ("--init", {}))
    add("velocity", ("--n", {}), ("--replicas", {"type": int}),
        ("--horizon", {"type": float}),
        ("--burn-in", {"type": float, "dest": "burn_in"}))
    add("pde", ("--init", {}), ("--t", {"type": float}),
        ("--dx", {"type": float}), ("--dt", {"type": float}),
        ("--window", {"type": float}), ("--scheme", {}), ("--save", {}))
    wave = add("wave", ("--c", {"type": float}), ("--xmax", {"type": float}),
               ("--dx", {"type": float}))
    wave.add_argument("action", nargs="?", default=None)
    add("couple", ("--n", {"type": int}), ("--init-a", {"dest": "init_a"}),
        ("--init-b", {"dest": "init_b"}), ("--t", {}),
        ("--replicas", {"type": int}),
        ("--mode", {"choices": ["restricted", "literal"]}))
    add("killedbm", ("--boundary", {}),
        ("--boundary-speed", {"type": float, "dest": "boundary_speed"}),
        ("--boundary-l0", {"type": float, "dest": "boundary_l0"}),
        ("--init", {}), ("--t", {"type": float}), ("--dt", {"type": float}),
        ("--paths", {"type": int}))
    add("selection", ("--n", {}),
        ("--burn-in", {"type": float, "dest": "burn_in"}),
        ("--horizon", {"type": float}))
    add("conjecture", ("--lam", {"type": float}), ("--t", {"type": float}))
    add("verify", ("--suite", {}))
    return parser


def run(argv) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    flags = {k: v for k, v in vars(ns).items()
             if k not in ("config", "subcommand")}
    sub = ns.subcommand
    try:
        cfg_file = load_config(ns.config) if ns.config else {}
        resolved = _resolve(_DEFAULTS[sub], cfg_file, flags)
        _validate_common(resolved)
    except ConfigError as exc:
        print(json.dumps({"error": str(exc), "exit": 2}, sort_keys=True))
        return 2
    out = _OutputDir(resolved["out"])
    try:
        summary = _HANDLERS[sub](resolved, out)
    except ConfigError as exc:
        print(json.dumps({"error": str(exc), "exit": 2}, sort_keys=True))
        return 2
    except Exception as exc:  # numerical failure
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}", "exit": 1},
                         sort_keys=True))
        return 1
    out.finalise(resolved, resolved.get("seed"))
    print(json.dumps(dict(summary, subcommand=sub), sort_keys=True))
    return 0


def _validate_common(cfg: dict) -> None:
    for key in ("n", "replicas", "paths"):
        if key in cfg and cfg[key] is not None and not isinstance(cfg[key], str):
            if int(cfg[key]) < 1:
                raise ConfigError(f"{key} must be positive")
    for key in ("t", "horizon", "dt", "dx"):
        if key in cfg and cfg[key] is not None:
            if float(cfg[key]) < 0:
                raise ConfigError(f"{key} must be nonnegative")


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
