"""Command line runner: ``bdeg solve|sweep|check|example``.

Every command reads a JSON RunConfig, writes its reports into the output
directory under a lockfile, and records a manifest (config echo, versions,
timings). Reports are deterministic; only the manifest carries timings.
Exit code 0 means every requested check passed and every solve converged.
"""
from __future__ import annotations

import json
import logging
import math
import platform
import sys
import time
from importlib import metadata
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np
from filelock import FileLock, Timeout

from . import __version__
from . import conditions as cond
from . import example as ex
from .config import RunConfig
from .field_core import ComplexField, RealField, dump_field, fft_workers, interpolate
from .scheme import SweepConfig, analytic_sweep, run_sweep, sweep_report
from .solver import disk_normalized_solution

log = logging.getLogger("bdeg")

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_LOCKED = 0, 1, 2, 3


def _clean(obj):
    """Make an object strict-JSON serialisable; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _versions() -> dict:
    out = {"bdeg": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "click", "filelock"):
        out[dist] = metadata.version(dist)
    return out


class Run:
    """Output directory, timings and manifest of one command invocation."""

    def __init__(self, command: str, cfg: RunConfig, out: Path):
        self.command, self.cfg, self.out = command, cfg, out
        self.timings: dict[str, float] = {}
        self.checks: dict[str, bool] = {}
        self.files: list[str] = []

    @contextmanager
    def timed(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[stage] = time.perf_counter() - t0

    def check(self, name: str, ok) -> bool:
        self.checks[name] = bool(ok)
        return bool(ok)

    def report(self, name: str, data) -> None:
        write_json(self.out / name, data)
        self.files.append(name)

    def dump(self, name: str, F) -> None:
        dump_field(F, self.out / name)
        self.files.append(name)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def manifest(self, extra: dict | None = None) -> None:
        data = {
            "command": self.command,
            "config": self.cfg.to_dict(),
            "versions": _versions(),
            "fft_workers": fft_workers(),
            "checks": self.checks,
            "files": sorted(self.files),
            "exit_code": EXIT_OK if self.passed else EXIT_FAILED,
            "timings": self.timings,
        }
        if extra:
            data.update(extra)
        write_json(self.out / "manifest.json", data)


def _load(config, out, grid_n, alpha, k_list) -> RunConfig:
    data = json.loads(Path(config).read_text()) if config else {}
    if grid_n is not None:
        data["grid_n"] = grid_n
    if alpha is not None:
        data["alpha"] = alpha
    if k_list is not None:
        data["k_list"] = [float(x) for x in k_list.split(",") if x.strip()]
    if out is not None:
        data["output_dir"] = str(out)
    return RunConfig.from_dict(data)


def _execute(command: str, body, config, out, grid_n, alpha, k_list):
    try:
        cfg = _load(config, out, grid_n, alpha, k_list)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        click.echo(f"invalid config: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out_dir / ".bdeg.lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        click.echo(f"output directory {out_dir} is locked by another run", err=True)
        sys.exit(EXIT_LOCKED)
    try:
        run = Run(command, cfg, out_dir)
        try:
            with run.timed("total"):
                extra = body(run)
        except ValueError as exc:
            click.echo(f"{command}: {exc}", err=True)
            run.check("valid_input", False)
            run.manifest({"error": str(exc)})
            sys.exit(EXIT_INVALID)
        run.manifest(extra)
    finally:
        lock.release()
    for name, ok in run.checks.items():
        click.echo(f"{'PASS' if ok else 'FAIL'} {name}")
    sys.exit(EXIT_OK if run.passed else EXIT_FAILED)


def _common(fn):
    fn = click.option("--k-list", default=None, help="Comma separated truncation levels.")(fn)
    fn = click.option("--alpha", type=float, default=None, help="Example exponent alpha.")(fn)
    fn = click.option("--grid-n", type=int, default=None, help="Grid points per side.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(fn)
    fn = click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
                      help="JSON RunConfig.")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Degenerate Beltrami equations: solves, sweeps and condition checks."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


# solve ---------------------------------------------------------------------


def solve_body(run: Run):
    cfg = run.cfg
    mu = cfg.coefficient_obj()
    if mu.degenerate:
        raise ValueError(f"coefficient {mu.description!r} is degenerate; set a truncation level k")
    spec = cfg.grid()
    with run.timed("solve"):
        qmap = disk_normalized_solution(mu, spec, cfg.tol, cfg.max_iter, cfg.extension)
    with run.timed("invert"):
        if not qmap.provenance.get("normalization_failed"):
            qmap = qmap.with_inverse()
    prov = qmap.provenance
    run.check("converged", prov["converged"])
    run.check("normalized", not prov.get("normalization_failed", False))
    run.dump("forward.csv", qmap.forward)
    if qmap.inverse is not None:
        run.dump("inverse.csv", qmap.inverse)
    summary = {
        "coefficient": mu.description,
        "iterations": prov["iterations"],
        "residual_l2": prov["residual_l2"],
        "converged": prov["converged"],
        "normalization": qmap.normalization,
        "boundary_defect": prov.get("boundary_defect"),
        "inverse": prov.get("inverse"),
    }
    run.report("solve_report.json", summary)
    return {"residual_l2": prov["residual_l2"], "iterations": prov["iterations"]}


@main.command()
@_common
def solve(config, out, grid_n, alpha, k_list):
    """Solve one non-degenerate coefficient and dump the map."""
    _execute("solve", solve_body, config, out, grid_n, alpha, k_list)


# sweep ---------------------------------------------------------------------


def sweep_body(run: Run):
    cfg = run.cfg
    spec = cfg.grid()
    Q = cfg.majorant_obj()
    with run.timed("sweep"):
        if cfg.pipeline == "analytic":
            result = analytic_sweep(cfg.example_params(), cfg.k_list, spec, Q, cfg.slack)
        else:
            sc = SweepConfig(cfg.coefficient_obj(truncated=False), cfg.k_list, spec, cfg.tol, cfg.max_iter,
                             cfg.extension, Q, cfg.slack)
            result = run_sweep(sc)
    solved = {e.k for e in result.per_k}
    for k in cfg.k_list:
        run.check(f"solved k={k:g}", k in solved)
    for e in result.per_k:
        run.check(f"converged k={e.k:g}", e.converged)
        if e.majorant is not None:
            run.check(f"majorant k={e.k:g}", e.majorant["pass"])
        if e.energy_check is not None:
            run.check(f"energy k={e.k:g}", e.energy_check[2])
        if cfg.dump_fields:
            run.dump(f"forward_k{e.k:g}.csv", e.map.forward)
    report = sweep_report(result)
    report["pipeline"] = cfg.pipeline
    report["slack"] = cfg.slack
    run.report("sweep_report.json", report)
    return None


@main.command()
@_common
def sweep(config, out, grid_n, alpha, k_list):
    """Run the truncation sweep and write sweep_report.json."""
    _execute("sweep", sweep_body, config, out, grid_n, alpha, k_list)


# check ---------------------------------------------------------------------


def _fmo_function(cfg: RunConfig, Q):
    kind = cfg.fmo_function
    if kind == "majorant":
        return lambda w: Q(w)
    if kind == "log":
        return lambda w: np.log(1 / np.abs(w))
    if kind == "inverse_sqrt":
        return lambda w: np.abs(w) ** -0.5
    return lambda w: np.ones(np.shape(w))


def _check_maps(cfg: RunConfig):
    """(forward, inverse) callables used by the continuity and ring checks."""
    kind = cfg.coefficient["kind"]
    if kind == "example":
        # forward: the degenerate solution f unless a truncation level is given
        p = cfg.example_params(cfg.truncation_level())
        fwd = (lambda z: ex.example_f(p, z)) if cfg.coefficient.get("k") is None else (lambda z: ex.example_fk(p, z))
        return fwd, (lambda y: ex.example_gk(p, y))
    if kind == "zero":
        return (lambda z: np.asarray(z, complex)), (lambda y: np.asarray(y, complex))
    if kind == "radial":
        c = float(cfg.coefficient.get("nu", 0.0))
        s = (1 + c) / (1 - c)

        def power(e):
            return lambda z: np.where(np.abs(z) > 0, np.asarray(z, complex) * np.abs(z) ** (e - 1), 0j)

        return power(s), power(1 / s)
    return None, None


def check_body(run: Run):
    cfg = run.cfg
    spec = cfg.grid()
    Q = cfg.majorant_obj()
    if Q is None:
        raise ValueError("check needs a majorant (config key 'majorant')")
    th = cfg.thresholds
    expect = cfg.expect
    l1 = None
    fmo, div, ring = [], [], []
    continuity = None
    points = [complex(*pt) for pt in cfg.points]

    if "l1" in cfg.checks or "continuity" in cfg.checks:
        with run.timed("l1"):
            l1 = cond.l1_norm(Q, spec)
    if "l1" in cfg.checks:
        run.check("l1 finite", math.isfinite(l1))
    if "divergence" in cfg.checks:
        with run.timed("divergence"):
            for w0 in points:
                rep = cond.divergence_integral_check(
                    Q, w0, cfg.delta,
                    floor=th.get("divergence_floor", cond.DIVERGENCE_FLOOR),
                    ratio_threshold=th.get("convergence_ratio", cond.CONVERGENCE_RATIO))
                div.append(rep)
                want = expect.get("divergence")
                run.check(f"divergence at {w0}", rep.verdict == want if want else rep.verdict != "inconclusive")
    if "fmo" in cfg.checks:
        phi = _fmo_function(cfg, Q)
        with run.timed("fmo"):
            for x0 in points:
                rep = cond.fmo_estimate(phi, x0, cfg.epsilons,
                                        spread=th.get("fmo_spread", cond.FMO_SPREAD),
                                        slope_threshold=th.get("fmo_slope", cond.FMO_SLOPE))
                fmo.append(rep)
                want = expect.get("fmo")
                run.check(f"fmo at {x0}", rep.verdict == want if want else rep.verdict != "inconclusive")

    fwd, inv = _check_maps(cfg)
    if "continuity" in cfg.checks:
        if fwd is None:
            raise ValueError(f"continuity check has no map for coefficient kind {cfg.coefficient['kind']!r}")
        c = cfg.continuity
        z0 = complex(*c.get("z0", [0.75, 0.0]))
        r0 = float(c.get("r0", 0.1))
        with run.timed("continuity"):
            C, profile = cond.modulus_of_continuity_check(fwd, z0, r0, l1, int(c.get("samples", 1000)),
                                                          cfg.seed)
        continuity = {"z0": [z0.real, z0.imag], "r0": r0, "empirical_C": C,
                      "profile_max_distance": float(profile[-1, 0])}
        run.check("continuity constant finite", math.isfinite(C))
    if "ring" in cfg.checks:
        if inv is None:
            raise ValueError(f"ring check has no radial map for coefficient kind {cfg.coefficient['kind']!r}")
        rng = np.random.default_rng(cfg.seed)
        with run.timed("ring"):
            for _ in range(cfg.ring_pairs):
                r, R = np.sort(rng.uniform(1 / 3, 1.0, 2))
                lhs, rhs, ok = cond.ring_modulus_check(inv, Q, float(r), float(R))
                ring.append({"r": float(r), "R": float(R), "lhs": lhs, "rhs": rhs, "pass": ok})
        run.check("ring modulus", all(x["pass"] for x in ring))

    report = cond.conditions_report(l1, fmo, div, continuity, ring)
    report["majorant"] = Q.description
    if cfg.coefficient["kind"] == "example":
        report["closed_form_l1"] = ex.example_q_l1(cfg.example_params())
    run.report("conditions_report.json", report)
    return None


@main.command()
@_common
def check(config, out, grid_n, alpha, k_list):
    """Run the regularity-condition battery and write conditions_report.json."""
    _execute("check", check_body, config, out, grid_n, alpha, k_list)


# example -------------------------------------------------------------------


def example_body(run: Run):
    cfg = run.cfg
    if cfg.coefficient["kind"] != "example":
        raise ValueError("the example command needs the example coefficient")
    spec = cfg.grid()
    p = cfg.example_params(cfg.truncation_level())
    z = spec.nodes()

    with run.timed("analytic"):
        fk = ComplexField(spec, ex.example_fk(p, z))
        disk = np.abs(z) <= 1
        gk = ComplexField(spec, np.where(disk, ex.example_gk(p, z), np.nan), mask=disk)
        kinv = RealField(spec, np.where(disk, ex.example_inverse_dilatation(p, z), np.nan), mask=disk)
        q = RealField(spec, ex.example_Q(p, z))
    for name, F in (("fk.csv", fk), ("gk.csv", gk), ("K_inverse.csv", kinv), ("Q.csv", q)):
        run.dump(name, F)

    with run.timed("solve"):
        qmap = disk_normalized_solution(ex.example_truncated(p), spec, cfg.tol, cfg.max_iter, cfg.extension)
        qmap = qmap.with_inverse()
    prov = qmap.provenance
    map_err = float(np.max(np.abs(qmap.forward.values[disk] - fk.values[disk])))
    inv_sel = qmap.inverse.mask & (np.abs(z) <= 0.95)
    inv_err = float(np.max(np.abs(qmap.inverse.values[inv_sel] - gk.values[inv_sel])))

    rng = np.random.default_rng(cfg.seed)
    u = rng.random((1000, 2))
    pts = np.sqrt(u[:, 0]) * np.exp(2j * np.pi * u[:, 1])
    comp_err = float(np.max(np.abs(ex.example_gk(p, ex.example_fk(p, pts)) - pts)))

    f0, f1 = complex(ex.example_fk(p, 0j)), complex(ex.example_fk(p, 1 + 0j))
    n0 = complex(interpolate(qmap.forward, 0j))
    n1 = complex(interpolate(qmap.forward, 1 + 0j))
    rows = [
        {"quantity": "sup map error", "value": map_err, "tolerance": 5e-2},
        {"quantity": "sup inverse error (|w| <= 0.95)", "value": inv_err, "tolerance": None},
        {"quantity": "composition error", "value": comp_err, "tolerance": 1e-12},
        {"quantity": "analytic |f_k(0)|", "value": abs(f0), "tolerance": 0.0},
        {"quantity": "analytic |f_k(1) - 1|", "value": abs(f1 - 1), "tolerance": 0.0},
        {"quantity": "numeric |f_k(0)|", "value": abs(n0), "tolerance": None},
        {"quantity": "numeric |f_k(1) - 1|", "value": abs(n1 - 1), "tolerance": None},
        {"quantity": "residual", "value": prov["residual_l2"], "tolerance": cfg.tol},
    ]
    run.check("converged", prov["converged"])
    run.check("sup map error", map_err <= 5e-2)
    run.check("composition error", comp_err <= 1e-12)
    run.check("normalization exact", f0 == 0 and f1 == 1)

    table = {"alpha": p.alpha, "k": p.k, "R_k": p.R_k, "rho_k": p.rho_k, "grid_n": spec.n,
             "half_width": spec.half_width, "rows": rows}
    run.report("example_table.json", table)
    lines = ["quantity,value,tolerance"]
    for r in rows:
        tol = "" if r["tolerance"] is None else repr(float(r["tolerance"]))
        lines.append(f"{r['quantity']},{r['value']!r},{tol}")
    (run.out / "example_table.csv").write_text("\n".join(lines) + "\n")
    run.files.append("example_table.csv")
    return None


@main.command()
@_common
def example(config, out, grid_n, alpha, k_list):
    """Dump the closed-form example fields and a numeric cross-validation table."""
    _execute("example", example_body, config, out, grid_n, alpha, k_list)


if __name__ == "__main__":
    main()
