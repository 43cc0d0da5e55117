"""Batch command-line front end.

    presymfield <command> --config run.toml [--set table.key=value ...]

Commands: modes, propagate, gnh, classify, hodge.  Exit codes: 0 success,
1 usage/config error, 2 spectral precondition, 3 constraint violation,
4 chain non-termination, 5 I/O shape error.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import logging
import os
import sys
import warnings

import numpy as np
import tomli

from . import grid as g
from . import io
from .hodge import HodgeProjector, orthogonality_defect
from .models import ConstraintViolation, MaxwellModel, PhaseSpaceState, build_model
from .presym import PresymplecticSystem, classify_submanifold, constraint_chain
from .spectral import (SpectralError, WaveState, cached_eigendecompose, check_decomposition,
                       symplectic_pairing)

log = logging.getLogger("presymfield")

EXIT_OK, EXIT_CONFIG, EXIT_SPECTRAL, EXIT_CONSTRAINT, EXIT_NONTERMINATION, EXIT_IO = 0, 1, 2, 3, 4, 5

DEFAULTS = {
    "model": {"kind": "scalar", "flip_sign": False},
    "grid": {"dim": 1, "n": 8, "length": 1.0},
    "bc": {"kind": "dirichlet"},
    "tolerances": {"rtol": 1e-9, "ctol": 1e-8},
    "output": {"dir": "out"},
    "run": {"times": [0.0, 1.0], "initial": "random", "mode": 0, "max_steps": 50,
            "dense_cutoff": 4000, "gauge_rate": 0.0, "input": "random"},
}
TABLES = tuple(DEFAULTS)


class ConfigError(ValueError):
    pass


class NonTermination(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# -- config ------------------------------------------------------------------

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def load_config(path: str | None, overrides: list[str] = ()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    base_dir = os.getcwd()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomli.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        unknown = set(user) - set(TABLES)
        if unknown:
            raise ConfigError(f"unknown config tables: {sorted(unknown)}")
        cfg = _merge(cfg, user)
        base_dir = os.path.dirname(os.path.abspath(path))
    for item in overrides:
        key, sep, val = item.partition("=")
        table, dot, name = key.strip().partition(".")
        if not sep or not dot or table not in TABLES:
            raise ConfigError(f"bad override {item!r}; expected table.key=value")
        cfg[table][name] = _parse_value(val.strip())
    cfg["_base_dir"] = base_dir
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    tol = cfg["tolerances"]
    for k, v in tol.items():
        if not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"tolerance {k} must be positive, got {v!r}")
    times = cfg["run"].get("times")
    if isinstance(times, list):
        t = np.asarray(times, dtype=float)
        if t.size == 0 or np.any(np.diff(t) <= 0):
            raise ConfigError("run.times must be a non-empty strictly increasing list")
    if cfg["model"]["kind"] not in ("scalar", "maxwell"):
        raise ConfigError(f"model.kind must be scalar or maxwell, got {cfg['model']['kind']!r}")


def _path(cfg, p: str) -> str:
    return p if os.path.isabs(p) else os.path.join(cfg["_base_dir"], p)


def grid_from_config(cfg) -> g.GridSpec:
    gc = cfg["grid"]
    dim = int(gc.get("dim", 1))
    cells = gc.get("cells", gc.get("n", 8))
    cells = [int(cells)] * dim if np.isscalar(cells) else [int(c) for c in cells]
    if "spacing" in gc:
        sp_ = gc["spacing"]
        spacing = [float(sp_)] * dim if np.isscalar(sp_) else [float(h) for h in sp_]
    else:
        length = gc.get("length", 1.0)
        lengths = [float(length)] * dim if np.isscalar(length) else [float(x) for x in length]
        spacing = [L / n for L, n in zip(lengths, cells)]
    hole = gc.get("hole")
    try:
        return g.GridSpec(tuple(cells), tuple(spacing), None if hole is None else tuple(map(tuple, hole)))
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


def bc_from_config(cfg) -> g.BoundaryCondition:
    bc = cfg["bc"]
    try:
        return g.BoundaryCondition(str(bc.get("kind", "dirichlet")), bc.get("robin"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def model_from_config(cfg):
    tol = cfg["tolerances"]
    try:
        return build_model(cfg["model"]["kind"], grid_from_config(cfg), bc_from_config(cfg),
                           ktol=tol.get("ktol"), ctol=tol.get("ctol", 1e-8))
    except (g.UnsupportedError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _outdir(cfg) -> str:
    d = _path(cfg, cfg["output"].get("dir", "out"))
    os.makedirs(d, exist_ok=True)
    return d


def _cache_dir(cfg, args):
    if args.cache_dir:
        return args.cache_dir
    c = cfg["output"].get("cache_dir")
    return _path(cfg, c) if c else None


def _fingerprint(model, cfg, what: str) -> dict:
    return dict(model.fingerprint(), operator=what, flip=bool(cfg["model"].get("flip_sign")),
                rtol=cfg["tolerances"].get("rtol"))


def _decompose(model, op, cfg, args, what: str):
    run = cfg["run"]
    tol = cfg["tolerances"]
    if cfg["model"].get("flip_sign"):
        op = -op
    kw = {"ktol": tol.get("ktol"), "rtol": tol.get("rtol", 1e-9),
          "dense_cutoff": int(run.get("dense_cutoff", 4000)), "n_modes": run.get("n_modes")}
    return cached_eigendecompose(op, _fingerprint(model, cfg, what), _cache_dir(cfg, args), **kw)


def _times(cfg) -> np.ndarray:
    run = cfg["run"]
    if "t_count" in run:
        t = np.linspace(float(run.get("t_start", 0.0)), float(run["t_stop"]), int(run["t_count"]))
    else:
        t = np.asarray(run["times"], dtype=float)
    if t.size == 0 or np.any(np.diff(t) <= 0):
        raise ConfigError("time grid must be strictly increasing")
    return t


# -- commands ------------------------------------------------------------------

def cmd_modes(cfg, args) -> int:
    model = model_from_config(cfg)
    if isinstance(model, MaxwellModel):
        op, what = g.build_vector_laplacian(model.grid, model.bc), "vector_laplacian"
    else:
        op, what = -model.laplacian, "neg_laplacian"
    dec = _decompose(model, op, cfg, args, what)
    res, orth = check_decomposition(dec, -op if cfg["model"].get("flip_sign") else op)
    out = _outdir(cfg)
    rows = [(k, lam, int(k < dec.kernel_count)) for k, lam in enumerate(dec.eigenvalues)]
    io.write_table_csv(os.path.join(out, "modes.csv"), ["k", "lambda", "kernel"], rows)
    io.write_json(os.path.join(out, "modes.json"), {
        "operator": what, "n": dec.n, "pairs": dec.m, "kernel_count": dec.kernel_count,
        "ktol": dec.ktol, "op_norm": dec.op_norm, "complete": dec.complete,
        "max_relative_residual": res, "orthonormality_defect": orth,
    })
    print(f"modes: {dec.m} pairs, kernel_count={dec.kernel_count}, smallest={dec.eigenvalues[0]:.12g}")
    return EXIT_OK


def _initial_state(model, cfg, rng):
    run = cfg["run"]
    init = run.get("initial", "random")
    if init == "random":
        return model.random_state(rng)
    if init == "mode":
        k = int(run.get("mode", 0))
        if isinstance(model, MaxwellModel):
            T = model.transverse_basis
            if not 0 <= k < T.shape[1]:
                raise ConfigError(f"mode {k} out of range (0..{T.shape[1] - 1})")
            return model.state(np.zeros(model.nodes.size), T[:, k], np.zeros(model.edges.size))
        V = model.decomposition.eigenvectors
        if not 0 <= k < V.shape[1]:
            raise ConfigError(f"mode {k} out of range (0..{V.shape[1] - 1})")
        return model.state(V[:, k], np.zeros(model.space.size))
    if init == "harmonic":
        if not isinstance(model, MaxwellModel):
            raise ConfigError("harmonic initial data needs the maxwell model")
        H = model.harmonic_basis
        if H.shape[1] == 0:
            raise ConfigError("the grid has no harmonic fields (add a hole)")
        return model.state(np.zeros(model.nodes.size), np.zeros(model.edges.size), H[:, 0])
    comps = io.read_state_csv(_path(cfg, init))
    return _state_from_components(model, comps)


def _state_from_components(model, comps) -> PhaseSpaceState:
    grid = model.grid
    if isinstance(model, MaxwellModel):
        need = {"Qperp": grid.count("node"), "Q": grid.count("edge"), "P": grid.count("edge")}
    else:
        need = {"Q": grid.count("node"), "P": grid.count("node")}
    for name, n in need.items():
        if name not in comps:
            raise io.IOShapeError(f"state file lacks component {name}")
        if comps[name].size != n:
            raise io.IOShapeError(f"component {name} has {comps[name].size} entries, grid has {n}")
    return PhaseSpaceState(comps["Q"], comps["P"], comps.get("Qperp"))


def cmd_propagate(cfg, args) -> int:
    model = model_from_config(cfg)
    rng = np.random.default_rng(args.seed)
    times = _times(cfg)
    if isinstance(model, MaxwellModel):
        model.__dict__["decomposition"] = _decompose(model, model.curlcurl, cfg, args, "curl_curl")
        rate = cfg["run"].get("gauge_rate", 0.0)
        rate = np.full(model.nodes.size, float(rate)) if np.isscalar(rate) else np.asarray(rate, float)
        s0 = _initial_state(model, cfg, rng)
        model.require_constrained(s0)
        probe = model.random_state(rng)
        evolve = lambda s, t: model.evolve(s, t, rate)
        mass = model.me
    else:
        model.__dict__["decomposition"] = _decompose(model, -model.laplacian, cfg, args, "neg_laplacian")
        s0 = _initial_state(model, cfg, rng)
        probe = model.random_state(rng)
        evolve = model.evolve
        mass = model.mass
    pair = lambda a, b: symplectic_pairing(mass, _wave(model, a), _wave(model, b))
    out = _outdir(cfg)
    e0 = model.energy(s0)
    w0 = pair(s0, probe)
    series, reports = [], []
    for i, t in enumerate(times):
        st = evolve(s0, float(t))
        pt = evolve(probe, float(t))
        io.write_state_csv(os.path.join(out, f"state_{i:04d}.csv"), st)
        e = model.energy(st)
        w = pair(st, pt)
        rep = model.check_constraints(st)
        series.append((float(t), e, float(np.linalg.norm(st.Q)), float(np.linalg.norm(st.P)),
                       abs(e - e0) / max(abs(e0), 1e-300), abs(w - w0) / max(abs(w0), 1e-300)))
        reports.append({"t": float(t), "energy": e, "constraints": rep})
    io.write_table_csv(os.path.join(out, "series.csv"),
                       ["t", "energy", "q_norm", "p_norm", "energy_drift", "symplectic_drift"], series)
    io.write_json(os.path.join(out, "manifest.json"), {
        "model": model.fingerprint(), "seed": args.seed, "times": [float(t) for t in times],
        "initial_energy": e0, "max_energy_drift": max(r[4] for r in series),
        "max_symplectic_drift": max(r[5] for r in series), "steps": reports,
    })
    print(f"propagate: {len(times)} times, max energy drift {max(r[4] for r in series):.3e}")
    return EXIT_OK


def _wave(model, s) -> WaveState:
    if isinstance(model, MaxwellModel):
        return WaveState(model.edges.restrict(s.Q), model.edges.restrict(s.P))
    return WaveState(model.space.restrict(s.Q), model.space.restrict(s.P))


def _raw_system(cfg) -> PresymplecticSystem | None:
    run = cfg["run"]
    if "omega" not in run:
        return None
    hint = run.get("format", "auto")
    Omega = io.read_matrix(_path(cfg, run["omega"]), hint)
    if "hamiltonian" not in run:
        raise ConfigError("run.omega given without run.hamiltonian")
    A = io.read_matrix(_path(cfg, run["hamiltonian"]), hint)
    n = Omega.shape[0]
    b = io.read_vector(_path(cfg, run["linear"])) if "linear" in run else np.zeros(n)
    if Omega.shape != (n, n) or A.shape != (n, n) or b.shape != (n,):
        raise io.IOShapeError(f"inconsistent shapes: Omega {Omega.shape}, A {A.shape}, b {b.shape}")
    if np.abs(Omega + Omega.T).max() > 1e-12 * max(np.abs(Omega).max(), 1.0):
        raise io.IOShapeError("Omega is not antisymmetric")
    return PresymplecticSystem.from_arrays(Omega, A, b)


def _chain_report(cfg):
    sysm = _raw_system(cfg)
    model = None
    if sysm is None:
        model = model_from_config(cfg)
        sysm = model.system()
    res = constraint_chain(sysm, max_steps=int(cfg["run"].get("max_steps", 50)),
                           tol=cfg["tolerances"].get("tol"))
    rep = {"dims": res.dims, "steps": res.steps, "terminated": res.terminated,
           "empty": bool(res.final.empty), "ambient_dim": sysm.dim}
    if res.terminated and not res.final.empty:
        cls = classify_submanifold(sysm.form, res.final)
        rep.update(final_dim=res.final.dim, gauge_count=res.gauge_dim, **cls.summary())
    else:
        rep.update(final_dim=res.final.dim, gauge_count=None, **{"class": None})
    if isinstance(model, MaxwellModel):
        rep["predicted_gauge_count"] = model.predicted_gauge_count()
    return rep


def cmd_gnh(cfg, args) -> int:
    rep = _chain_report(cfg)
    io.write_json(os.path.join(_outdir(cfg), "gnh.json"), rep)
    if not rep["terminated"]:
        raise NonTermination(f"chain did not terminate within {rep['steps']} steps; dims so far {rep['dims']}")
    print(f"gnh: dims={rep['dims']} final_dim={rep['final_dim']} gauge={rep['gauge_count']} "
          f"class={rep['class']}")
    return EXIT_OK


def cmd_classify(cfg, args) -> int:
    rep = _chain_report(cfg)
    small = {k: rep[k] for k in ("class", "terminated")}
    small["relations"] = rep.get("relations")
    io.write_json(os.path.join(_outdir(cfg), "classify.json"), small)
    if not rep["terminated"]:
        raise NonTermination(f"chain did not terminate within {rep['steps']} steps")
    print(rep["class"])
    return EXIT_OK


def cmd_hodge(cfg, args) -> int:
    grid, bc = grid_from_config(cfg), bc_from_config(cfg)
    if not bc.is_vector:
        raise ConfigError("hodge needs a relative or absolute bc")
    proj = HodgeProjector(grid, bc, cfg["tolerances"].get("ktol"))
    src = cfg["run"].get("input", "random")
    if src == "random":
        u = proj.edges.embed(np.random.default_rng(args.seed).standard_normal(proj.edges.size))
    else:
        u = io.read_field_csv(_path(cfg, src), expected=grid.count("edge"))
    outside = np.delete(u, proj.edges.index)
    if outside.size and np.max(np.abs(outside)) > 0:
        raise ConstraintViolation("input has nonzero tangential boundary values under the relative bc")
    dec = proj.decompose(proj.edges.restrict(u))
    out = _outdir(cfg)
    for name, part in zip(("harmonic", "transverse", "longitudinal"), dec.parts()):
        io.write_field_csv(os.path.join(out, f"{name}.csv"), proj.edges.embed(part))
    me = proj.me
    norm = lambda x: float(np.sqrt(np.dot(me * x, x)))
    ur = proj.edges.restrict(u)
    div = g.build_weak_div(grid, bc) @ dec.physical
    summary = {"harmonic_dim": proj.harmonic.dim,
               "norms": {"input": norm(ur), "harmonic": norm(dec.harmonic),
                         "transverse": norm(dec.transverse), "longitudinal": norm(dec.longitudinal)},
               "reconstruction_error": norm(sum(dec.parts()) - ur) / max(norm(ur), 1e-300),
               "orthogonality_defect": orthogonality_defect(dec, me),
               "weak_div_physical": float(np.max(np.abs(div))) if div.size else 0.0,
               "bc": bc.kind, "grid": grid.fingerprint()}
    io.write_json(os.path.join(out, "hodge.json"), summary)
    print(f"hodge: harmonic_dim={proj.harmonic.dim} reconstruction={summary['reconstruction_error']:.3e}")
    return EXIT_OK


COMMANDS = {"modes": cmd_modes, "propagate": cmd_propagate, "gnh": cmd_gnh,
            "classify": cmd_classify, "hodge": cmd_hodge}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--cache-dir", help="eigendecomposition cache directory")
    common.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    common.add_argument("--seed", type=int, default=0, help="seed for random states (u64)")
    common.add_argument("--set", action="append", default=[], metavar="TABLE.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="presymfield", description="Constraint analysis and exact evolution of "
                "discretized scalar and Maxwell fields.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {"modes": "eigenvalue table of the model operator",
             "propagate": "exact time evolution of an initial state",
             "gnh": "run the constraint algorithm and report the chain",
             "classify": "report only the class of the final constraint set",
             "hodge": "Hodge decomposition of an edge field"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.set)
        with _threads(args.threads), warnings.catch_warnings():
            warnings.simplefilter("always")
            return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpectralError as exc:
        print(f"spectral error: {exc}", file=sys.stderr)
        return EXIT_SPECTRAL
    except ConstraintViolation as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except NonTermination as exc:
        print(f"non-termination: {exc}", file=sys.stderr)
        return EXIT_NONTERMINATION
    except io.IOShapeError as exc:
        print(f"I/O shape error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
