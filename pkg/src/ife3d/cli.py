"""Command-line front end: run configuration, dispatch, and artifacts.

Configurations are single JSON documents mirroring the flags; flags override
file values.  Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 I/O error.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["RunConfig", "ConfigError", "parse_config", "run", "main",
           "EXIT_CONFIG", "EXIT_SOLVE", "EXIT_IO"]

EXIT_CONFIG = 2
EXIT_SOLVE = 3
EXIT_IO = 4

EXPERIMENTS = ("mesh", "solve", "converge", "infsup", "precond-bench",
               "timedomain")


class ConfigError(ValueError):
    pass


@dataclass
class InterfaceSpec:
    kind: str = "sphere"     # 'sphere' | 'plane' | 'torus'
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.6
    point: tuple = (0.0, 0.0, 0.0)
    normal: tuple = (1.0, 0.0, 0.0)
    r_tube: float = 0.2
    r_ring: float = float(np.pi / 5.0)

    def build(self):
        from .geometry import PlaneLevelSet, SphereLevelSet, TorusLevelSet
        if self.kind == "sphere":
            return SphereLevelSet(self.center, self.radius)
        if self.kind == "plane":
            return PlaneLevelSet(self.point, self.normal)
        if self.kind == "torus":
            return TorusLevelSet(self.center, self.r_tube, self.r_ring)
        raise ConfigError(f"interface.kind: unknown kind {self.kind!r}")


@dataclass
class RunConfig:
    experiment: str = "converge"
    interface: InterfaceSpec = field(default_factory=InterfaceSpec)
    rho: float = 100.0
    alpha: tuple = None          # (plus, minus); overrides rho when given
    beta: tuple = None
    meshes: tuple = (4, 8)
    N: int = 8
    tol: float = 1e-8
    max_it: int = 1000
    restart: int = 50
    l: int = 1
    amg_cycles: int = 2
    amg_direct_threshold: int = 20000
    method: str = "gmres"
    widths: tuple = (0, 1, 2)
    steps: int = 32
    t_end: float = 1.5
    output: str = "."
    seed: int = 0
    threads: int = 1

    def coefficients(self):
        from .ife_local import CoefficientPair
        a = self.alpha if self.alpha is not None else (self.rho, 1.0)
        b = self.beta if self.beta is not None else (self.rho, 1.0)
        return CoefficientPair(alpha_plus=a[0], alpha_minus=a[1],
                               beta_plus=b[0], beta_minus=b[1])

    def solver_options(self):
        from .analysis import SolverOptions
        return SolverOptions(tol=self.tol, max_it=self.max_it,
                             restart=self.restart, l=self.l,
                             amg_cycles=self.amg_cycles, method=self.method,
                             amg_direct_threshold=self.amg_direct_threshold)

    def to_dict(self):
        d = asdict(self)
        return d


_SCHEMA = {
    "experiment": str, "rho": (int, float), "alpha": (list, tuple),
    "beta": (list, tuple), "meshes": (list, tuple), "N": int,
    "tol": (int, float), "max_it": int, "restart": int, "l": int,
    "amg_cycles": int, "amg_direct_threshold": int, "method": str,
    "widths": (list, tuple), "steps": int, "t_end": (int, float),
    "output": str, "seed": int, "threads": int, "interface": dict,
}
_IFACE_SCHEMA = {
    "kind": str, "center": (list, tuple), "radius": (int, float),
    "point": (list, tuple), "normal": (list, tuple),
    "r_tube": (int, float), "r_ring": (int, float),
}


def _validate(d):
    for key, val in d.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        if val is not None and not isinstance(val, _SCHEMA[key]):
            raise ConfigError(f"{key}: expected {_SCHEMA[key]}, got "
                              f"{type(val).__name__}")
    iface = d.get("interface")
    if iface is not None:
        for key, val in iface.items():
            if key not in _IFACE_SCHEMA:
                raise ConfigError(f"interface.{key}: unknown key")
            if not isinstance(val, _IFACE_SCHEMA[key]):
                raise ConfigError(f"interface.{key}: expected "
                                  f"{_IFACE_SCHEMA[key]}")
    if "experiment" in d and d["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment: must be one of {EXPERIMENTS}")
    if "N" in d and d["N"] < 1:
        raise ConfigError("N: must be >= 1")
    if "meshes" in d and d["meshes"] is not None:
        if any((not isinstance(m, int)) or m < 1 for m in d["meshes"]):
            raise ConfigError("meshes: entries must be integers >= 1")
    for key in ("tol", "t_end"):
        if key in d and d[key] is not None and d[key] <= 0:
            raise ConfigError(f"{key}: must be positive")
    for key in ("max_it", "restart", "steps", "threads"):
        if key in d and d[key] is not None and d[key] < 1:
            raise ConfigError(f"{key}: must be >= 1")
    for key in ("l", "amg_cycles", "seed", "amg_direct_threshold"):
        if key in d and d[key] is not None and d[key] < 0:
            raise ConfigError(f"{key}: must be >= 0")


def parse_config(path=None, overrides=None):
    """Load a JSON config, apply flag overrides, validate, and build.

    Defaults are filled for everything not given (tol 1e-8, restart 50,
    l=1, amg_cycles 2); unknown keys are rejected with the field path.
    """
    data = {}
    if path is not None:
        try:
            with open(path) as f:
                data = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
    if overrides:
        data = {**data, **{k: v for k, v in overrides.items()
                           if v is not None}}
    _validate(data)
    iface_data = data.pop("interface", None)
    cfg = RunConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                       for k, v in data.items()})
    if iface_data:
        iface_kwargs = {k: (tuple(v) if isinstance(v, list) else v)
                        for k, v in iface_data.items()}
        cfg.interface = InterfaceSpec(**iface_kwargs)
    elif cfg.experiment == "timedomain":
        cfg.interface = InterfaceSpec(kind="torus",
                                      center=(0.0, 0.0, -0.3))
    return cfg


def serialize_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def _apply_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        pass


def _out(cfg, name):
    os.makedirs(cfg.output, exist_ok=True)
    return os.path.join(cfg.output, name)


def run(cfg):
    """Dispatch one experiment; returns a process exit status."""
    from . import analysis, writers
    from .assembly import IfeDiscretization
    from .mesh import build_background_mesh

    _apply_threads(cfg.threads)
    np.random.seed(cfg.seed)

    if cfg.experiment in ("solve", "converge", "infsup", "precond-bench") \
            and cfg.interface.kind != "sphere":
        raise ConfigError(f"interface.kind: experiment {cfg.experiment!r} "
                          "uses the spherical benchmark solution")
    if cfg.experiment == "timedomain" and cfg.interface.kind != "torus":
        raise ConfigError("interface.kind: the time-domain run is set up "
                          "for the torus scatterer")

    try:
        if cfg.experiment == "mesh":
            mesh = build_background_mesh(cfg.N)
            path = _out(cfg, f"mesh_N{cfg.N}.vtk")
            writers.write_vtk(path, mesh)
            line = (f"mesh N={cfg.N}: {mesh.num_nodes} nodes "
                    f"{mesh.num_edges} edges {mesh.num_faces} faces "
                    f"{mesh.num_tets} tets -> {path}")
            print(line)
            disc = IfeDiscretization(mesh, cfg.interface.build(),
                                     cfg.coefficients())
            if disc.cuts:
                ipath = _out(cfg, f"interface_N{cfg.N}.vtk")
                writers.write_interface_vtk(ipath, disc.cuts)
                print(f"mesh N={cfg.N}: {len(disc.cuts)} interface elements "
                      f"-> {ipath}")
            return 0

        if cfg.experiment == "solve":
            sol = analysis.ManufacturedSolution(coeffs=cfg.coefficients(),
                                                r1=cfg.interface.radius)
            disc, reduced, u_full, report = analysis.solve_benchmark(
                cfg.N, sol, cfg.solver_options())
            l2, hc = analysis.compute_errors(disc, u_full, sol.u, sol.curl_u)
            print(f"solve N={cfg.N}: iters={report.iterations} "
                  f"converged={report.converged} L2={l2:.4e} Hcurl={hc:.4e}")
            writers.write_csv(_out(cfg, "residuals.csv"),
                              ["iteration", "relative_residual"],
                              list(enumerate(report.residuals)))
            field = writers.cell_field_from_edge_dofs(disc, u_full)
            writers.write_vtk(_out(cfg, f"solution_N{cfg.N}.vtk"), disc.mesh,
                              cell_vectors={"u": field})
            return 0 if report.converged else EXIT_SOLVE

        if cfg.experiment == "converge":
            table = analysis.run_convergence(
                rho=cfg.rho, meshes=cfg.meshes,
                options=cfg.solver_options(), r1=cfg.interface.radius,
                verbose=True)
            writers.write_csv(_out(cfg, "convergence.csv"), table.header(),
                              table.table_rows())
            ok = all(r["report"].converged for r in table.rows
                     if r["report"] is not None)
            return 0 if ok else EXIT_SOLVE

        if cfg.experiment == "infsup":
            results = analysis.infsup_study(
                beta_ratio=(cfg.beta[0] / cfg.beta[1]) if cfg.beta
                else cfg.rho,
                alpha_ratio=(cfg.alpha[0] / cfg.alpha[1]) if cfg.alpha
                else cfg.rho,
                meshes=cfg.meshes, r1=cfg.interface.radius, verbose=True)
            writers.write_csv(
                _out(cfg, "infsup.csv"),
                ["N", "assignment", "eta_s", "lambda_min"],
                [[r["N"], r["assignment"], r["eta_s"], r["lambda_min"]]
                 for r in results])
            return 0

        if cfg.experiment == "precond-bench":
            rows = analysis.precond_bench(
                rho=cfg.rho, N=cfg.N, widths=cfg.widths, tol=cfg.tol,
                max_it=cfg.max_it,
                amg_direct_threshold=cfg.amg_direct_threshold,
                include_unpreconditioned=True, verbose=True)
            writers.write_csv(
                _out(cfg, "precond_bench.csv"),
                ["method", "l", "preconditioned", "iterations", "converged"],
                [[r["method"], "" if r["l"] is None else r["l"],
                  r["preconditioned"],
                  r["iterations"] if r["converged"] else "--",
                  r["converged"]] for r in rows])
            return 0

        if cfg.experiment == "timedomain":
            td = analysis.TimeDomainConfig(
                N=cfg.N, steps=cfg.steps, t_end=cfg.t_end,
                torus_center=cfg.interface.center,
                torus_r_tube=cfg.interface.r_tube,
                torus_r_ring=cfg.interface.r_ring,
                solver=cfg.solver_options())
            result = analysis.run_time_domain(td)
            writers.write_csv(_out(cfg, "energy.csv"),
                              ["time", "l2_norm"],
                              list(zip(result.times, result.l2_trace)))
            for t, state in result.states:
                fld = writers.cell_field_from_edge_dofs(result.disc, state)
                writers.write_vtk(
                    _out(cfg, f"field_t{t:.6f}.vtk"), result.disc.mesh,
                    cell_vectors={"u": fld})
            print(f"timedomain N={cfg.N}: {cfg.steps} steps, final |u| = "
                  f"{result.l2_trace[-1]:.6e}")
            return 0
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    raise ConfigError(f"unknown experiment {cfg.experiment!r}")


def _add_common(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--output", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("IFE3D_THREADS", "0")) or None)
    p.add_argument("--rho", type=float, help="coefficient contrast")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-it", dest="max_it", type=int)
    p.add_argument("--restart", type=int)
    p.add_argument("--l", type=int, help="smoother expanding width")
    p.add_argument("--amg-cycles", dest="amg_cycles", type=int)
    p.add_argument("--amg-direct-threshold", dest="amg_direct_threshold",
                   type=int)
    p.add_argument("--method", choices=("gmres", "cg", "direct"))
    p.add_argument("--interface", dest="interface_kind",
                   choices=("sphere", "plane", "torus"))
    p.add_argument("--radius", type=float, help="sphere interface radius")


def _csv_ints(s):
    return [int(v) for v in s.split(",")]


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="ife3d",
        description="Immersed finite elements for 3D H(curl) interface "
                    "problems")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        _add_common(p)
        if name in ("mesh", "solve", "precond-bench", "timedomain"):
            p.add_argument("--N", type=int)
        if name in ("converge", "infsup"):
            p.add_argument("--meshes", type=_csv_ints)
        if name == "precond-bench":
            p.add_argument("--widths", type=_csv_ints)
        if name == "timedomain":
            p.add_argument("--steps", type=int)
            p.add_argument("--t-end", dest="t_end", type=float)
    args = ap.parse_args(argv)

    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("config", "interface_kind", "radius")
                 and v is not None}
    overrides["experiment"] = args.experiment
    try:
        cfg = parse_config(args.config, overrides)
        if args.interface_kind:
            cfg.interface.kind = args.interface_kind
        if args.radius:
            cfg.interface.radius = args.radius
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
