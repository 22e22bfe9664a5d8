"""Batch front end: ``mflab --config run.ini --output out/``.

A config is a sectioned INI file; one config describes one run. Every
run that reaches execution writes ``manifest.json`` listing the produced
files with SHA-256 checksums.

Exit codes: 0 success, 2 analytic outcome reported as data (divergence,
non-convergence, no bracket), 1 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from . import blowup as bu
from . import meanfield as mf
from . import measure as ms
from . import rng as rngmod
from . import solver as sv
from . import tmprober as tm
from .errors import BadParameter, MeanFieldError, NoBracket, SolverFailure
from .field import TorusGrid, write_field, write_field_csv

log = logging.getLogger("mflab")

COMMANDS = ("solve", "minimize", "continue", "blowup-scan", "tm-sweep", "quantize", "check-assumptions")
V0_PRESETS = ("zero", "mode", "random", "bubble")

EXIT_OK, EXIT_ERROR, EXIT_ANALYTIC = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    spec: mf.ProblemSpec
    options: sv.SolverOptions
    v0: str = "zero"
    v0_amplitude: float = 0.5
    v0_scale: float = 10.0
    v0_kmax: int = 4
    lambda_path: list[float] = dc_field(default_factory=list)
    threshold: float = 5.0
    radii: list[float] | None = None
    scales: list[float] | None = None
    bracket: tuple[float, float] | None = None
    sweep_lambdas: list[float] = dc_field(default_factory=list)
    slope_tol: float = tm.DEFAULT_SLOPE_TOL
    direction: str = "auto"
    support: list[float] = dc_field(default_factory=list)
    output_dir: Path = Path("mflab-out")
    seed: int = 0
    raw: dict = dc_field(default_factory=dict)


def _floats(text):
    return [float(x) for x in str(text).replace(",", " ").split()]


class _Reader:
    """Pulls typed values out of the parsed INI, collecting violations."""

    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp
        self.violations: list[str] = []

    def get(self, section, key, conv, default=None, check=None, message=None):
        if not self.cp.has_option(section, key):
            return default
        raw = self.cp.get(section, key)
        try:
            value = conv(raw)
        except (TypeError, ValueError):
            self.violations.append(f"{section}.{key}: cannot parse {raw!r}")
            return default
        if check is not None and not check(value):
            self.violations.append(f"{section}.{key}: {message or 'out of range'} (got {raw})")
            return default
        return value


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _int(text):
    x = float(text)
    if x != int(x):
        raise ValueError(text)
    return int(x)


def parse_config(text: str, overrides: dict | None = None):
    """Parse and validate; returns ``(RunConfig or None, violations)``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        return None, [f"config: {exc}"]
    overrides = overrides or {}
    r = _Reader(cp)
    pos = lambda x: x > 0  # noqa: E731

    command = r.get("run", "command", str.strip, None)
    if command is None:
        r.violations.append("run.command: missing")
    elif command not in COMMANDS:
        r.violations.append(f"run.command: unknown command {command!r}")
    seed = r.get("run", "seed", _int, 0, lambda s: 0 <= s < 2**64, "seed must be a u64")
    output_dir = r.get("run", "output_dir", str.strip, "mflab-out")

    variant = r.get("problem", "variant", mf.Variant.parse, mf.Variant.SAWADA_SUZUKI)
    lam = r.get("problem", "lambda", float, 1.0, lambda x: x > 0 and math.isfinite(x),
                "lambda must be positive")
    L = r.get("problem", "side_length", float, 2 * math.pi, pos, "side_length must be positive")
    N = r.get("problem", "resolution", _int, 64)
    if N is not None and N % 2:
        r.violations.append("problem.resolution: resolution must be even")
        N = None
    elif N is not None and N < 8:
        r.violations.append("problem.resolution: resolution must be >= 8")
        N = None
    padded = r.get("problem", "padded", _bool, False)

    measure = None
    mname = r.get("problem", "measure", str.strip, "dirac_one")
    try:
        if mname == "two_mass":
            t = r.get("problem", "t", float, 0.5)
            if t is not None and not (0.0 <= t <= 1.0):
                r.violations.append(f"problem.t: t ∉ [0,1] (got {t})")
            else:
                measure = ms.preset("two_mass", t=t)
        elif mname == "uniform_quadrature":
            n = r.get("problem", "n", _int, 1, lambda n: n >= 1, "n must be >= 1")
            measure = ms.preset("uniform_quadrature", n=n)
        elif mname.startswith("file:"):
            measure = ms.load(mname[5:].strip())
        else:
            measure = ms.preset(mname)
    except (BadParameter, OSError) as exc:
        r.violations.append(f"problem.measure: {exc}")

    opts = None
    try:
        opts = sv.SolverOptions(
            tol=r.get("solver", "tol", float, 1e-10),
            max_iter=r.get("solver", "max_iter", _int, 500),
            damping=r.get("solver", "damping", float, 1.0),
            linesearch_c=r.get("solver", "linesearch_c", float, 1e-4),
            fd_eps=r.get("solver", "fd_eps", float, 1e-6),
            divergence_floor=r.get("solver", "divergence_floor", float, -1e6),
        )
    except BadParameter as exc:
        r.violations.append(f"solver: {exc}")
    v0 = r.get("solver", "v0", str.strip, "zero", lambda s: s in V0_PRESETS,
               f"v0 must be one of {', '.join(V0_PRESETS)}")
    v0_amp = r.get("solver", "v0_amplitude", float, 0.5)
    v0_scale = r.get("solver", "v0_scale", float, 10.0, pos, "v0_scale must be positive")
    v0_kmax = r.get("solver", "v0_kmax", _int, 4, lambda k: k >= 1, "v0_kmax must be >= 1")

    path = r.get("continuation", "lambda_path", _floats, [])
    if not path and cp.has_section("continuation"):
        start = r.get("continuation", "lambda_start", float)
        stop = r.get("continuation", "lambda_stop", float)
        step = r.get("continuation", "lambda_step", float, None, pos, "lambda_step must be positive")
        if None not in (start, stop, step):
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            path = [start + k * step for k in range(max(count, 0))]
    if any(x <= 0 for x in path):
        r.violations.append("continuation.lambda_path: every lambda must be positive")

    threshold = r.get("diagnostics", "threshold", float, 5.0)
    radii = r.get("diagnostics", "radii", _floats, None)
    if radii is not None and L is not None and any(not (0 < x < L / 2) for x in radii):
        r.violations.append("diagnostics.radii: every radius must lie in (0, L/2)")
    scales = r.get("diagnostics", "scales", _floats, None)
    if scales is not None and (any(s <= 0 for s in scales) or sorted(set(scales)) != scales):
        r.violations.append("diagnostics.scales: must be positive and strictly increasing")
    bracket = r.get("diagnostics", "bracket", _floats, None)
    if bracket is not None and (len(bracket) != 2 or min(bracket) <= 0):
        r.violations.append("diagnostics.bracket: need two positive lambdas")
    sweep_lambdas = r.get("diagnostics", "lambdas", _floats, [])
    slope_tol = r.get("diagnostics", "slope_tol", float, tm.DEFAULT_SLOPE_TOL, pos)
    direction = r.get("diagnostics", "direction", str.strip, "auto",
                      lambda d: d in ("auto", "+", "-"), "direction must be auto, + or -")
    support = r.get("diagnostics", "support", _floats, [])

    if "seed" in overrides and overrides["seed"] is not None:
        seed = overrides["seed"]
        if not 0 <= seed < 2**64:
            r.violations.append("--seed: must be a u64")
    if overrides.get("output"):
        output_dir = overrides["output"]

    if command == "continue" and not path:
        r.violations.append("continuation.lambda_path: required for command 'continue'")
    if command == "tm-sweep" and bracket is None and not sweep_lambdas:
        r.violations.append("diagnostics.bracket: tm-sweep needs a bracket or lambdas")
    if command == "quantize" and not support:
        r.violations.append("diagnostics.support: quantize needs at least one alpha")

    if r.violations:
        return None, r.violations
    try:
        grid = TorusGrid(L, N)
        spec = mf.ProblemSpec(variant, lam, measure, grid, padded)
    except BadParameter as exc:
        return None, [f"problem: {exc}"]
    cfg = RunConfig(
        command=command, spec=spec, options=opts, v0=v0, v0_amplitude=v0_amp,
        v0_scale=v0_scale, v0_kmax=v0_kmax, lambda_path=path, threshold=threshold,
        radii=radii, scales=scales, bracket=tuple(bracket) if bracket else None,
        sweep_lambdas=sweep_lambdas, slope_tol=slope_tol, direction=direction,
        support=support, output_dir=Path(output_dir), seed=seed,
        raw={s: dict(cp.items(s)) for s in cp.sections()},
    )
    return cfg, []


def validate(config_path) -> list[str]:
    """Every constraint violation in the config file; empty when valid."""
    text = Path(config_path).read_text(encoding="utf-8")
    return parse_config(text)[1]


# -- execution -------------------------------------------------------------


class _Writer:
    """Single writer for run artifacts; tracks files for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name) -> Path:
        self.files.append(name)
        return self.root / name

    def text(self, name, content):
        self.path(name).write_bytes(content.encode("utf-8"))

    def json(self, name, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def field(self, name, grid, v):
        write_field(self.path(name), grid, v)

    def manifest(self, cfg: RunConfig, status: str, exit_code: int, detail: str = ""):
        entries = []
        for name in sorted(set(self.files)):
            digest = hashlib.sha256((self.root / name).read_bytes()).hexdigest()
            entries.append({"path": name, "sha256": digest, "bytes": (self.root / name).stat().st_size})
        manifest = {
            "tool": "mflab",
            "version": __version__,
            "command": cfg.command,
            "seed": cfg.seed,
            "rng": {"name": rngmod.NAME, "version": rngmod.VERSION},
            "config": cfg.raw,
            "status": status,
            "exit_code": exit_code,
            "detail": detail,
            "files": entries,
        }
        (self.root / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return manifest


def initial_field(cfg: RunConfig):
    grid = cfg.spec.grid
    if cfg.v0 == "zero":
        return grid.zeros()
    if cfg.v0 == "mode":
        x1, _ = grid.coords
        return cfg.v0_amplitude * np.cos(2 * math.pi * x1 / grid.L)
    if cfg.v0 == "random":
        gen = rngmod.Xoshiro256(cfg.seed)
        return rngmod.random_band_limited(grid, gen, cfg.v0_kmax, cfg.v0_amplitude)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return bu.liouville_bubble(grid, bu.BubbleSpec(bu.grid_center(grid), cfg.v0_scale))


def _solution_summary(sol: sv.Solution) -> dict:
    return {
        "lambda": sol.spec.lam,
        "variant": sol.spec.variant.value,
        "method": sol.method,
        "status": sol.status,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual_norm": sol.residual_norm,
        "functional_value": sol.functional_value,
        "sup_norm": sol.sup_norm,
        "l2_norm": sol.spec.grid.norm(sol.v),
    }


def _write_solution(w: _Writer, sol: sv.Solution, stem="solution"):
    w.json(f"{stem}.json", _solution_summary(sol))
    w.field(f"{stem}.mfe1", sol.spec.grid, sol.v)
    write_field_csv(w.path(f"{stem}.csv"), sol.spec.grid, sol.v)
    sv.write_trace(w.path(f"{stem}_trace.csv"), sol.trace)


def _run_solve(cfg, w):
    solve = sv.newton_solve if cfg.command == "solve" else sv.minimize
    try:
        sol = solve(cfg.spec, initial_field(cfg), cfg.options)
    except SolverFailure as exc:
        if exc.solution is not None:
            _write_solution(w, exc.solution)
        return EXIT_ANALYTIC, type(exc).__name__, str(exc)
    _write_solution(w, sol)
    if sol.converged:
        return EXIT_OK, "converged", ""
    return EXIT_ANALYTIC, sol.status, "did not reach tolerance"


def _run_continue(cfg, w):
    sols = sv.continuation(cfg.spec, cfg.lambda_path, initial_field(cfg), cfg.options)
    rows = ["index,lambda,status,converged,iterations,residual_norm,functional_value,sup_norm,l2_norm"]
    all_ok = True
    for k, (lam, sol) in enumerate(zip(cfg.lambda_path, sols)):
        if sol is None:
            rows.append(f"{k},{lam!r},unsolved,false,,,,,")
            all_ok = False
            continue
        s = _solution_summary(sol)
        all_ok &= sol.converged
        rows.append(
            f"{k},{lam!r},{sol.status},{str(sol.converged).lower()},{sol.iterations},"
            f"{s['residual_norm']!r},{s['functional_value']!r},{s['sup_norm']!r},{s['l2_norm']!r}"
        )
        w.field(f"step_{k:03d}.mfe1", sol.spec.grid, sol.v)
    w.text("continuation.csv", "\r\n".join(rows) + "\r\n")
    if all_ok:
        return EXIT_OK, "converged", ""
    return EXIT_ANALYTIC, "incomplete", "some continuation steps did not converge"


def _run_blowup_scan(cfg, w):
    """Synthetic bubble family with lambda calibrated to unit Liouville mass."""
    spec = cfg.spec
    grid = spec.grid
    scales = cfg.scales or [10.0, 20.0, 40.0]
    center = bu.grid_center(grid)
    reports = []
    for k, mu in enumerate(scales):
        b = bu.BubbleSpec(center, mu)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            v = bu.liouville_bubble(grid, b)
        lam = grid.integrate(bu.liouville_density(grid, b))
        s = spec.with_lambda(lam)
        peaks = bu.detect_peaks(grid, v, cfg.threshold)
        rep = bu.estimate_masses(s, v, peaks, cfg.radii)
        reports.append(rep)
        d = rep.to_dict(grid)
        d["scale"] = mu
        d["lambda"] = lam
        w.json(f"report_{k:02d}.json", d)
        w.text(f"masses_{k:02d}.csv", rep.mass_table_csv())
    summary = {"scales": scales}
    if len(reports) >= 2:
        verdict = bu.concentration_verdict(reports)
        summary["concentrating"] = verdict.concentrating
        summary["minimum_mass_ok"] = verdict.minimum_mass_ok
        summary["final_masses"] = verdict.final_masses
    if len(reports) >= 3:
        probe = bu.residual_vanishing_probe(grid, reports, scales)
        w.text("vanishing.csv", probe.to_csv(scales))
        summary["vanishing_slopes"] = probe.slopes
        summary["consistent_with_vanishing"] = probe.consistent_with_vanishing
    w.json("blowup_summary.json", summary)
    return EXIT_OK, "done", ""


def _run_tm_sweep(cfg, w):
    spec = cfg.spec
    scales = cfg.scales or tm.default_scales(spec.grid)
    direction = tm.family_direction(spec) if cfg.direction == "auto" else cfg.direction
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        family = tm.probe_family(spec.grid, scales, direction)
    lambdas = list(cfg.sweep_lambdas)
    if cfg.bracket:
        lambdas = sorted(set(lambdas) | set(cfg.bracket))
    res = tm.sweep(spec, lambdas, family, scales, cfg.slope_tol)
    w.text("sweep.csv", res.to_csv())
    if cfg.bracket is None:
        return EXIT_OK, "done", ""
    try:
        est = tm.threshold_estimate(spec, cfg.bracket, family, scales, cfg.slope_tol)
    except NoBracket as exc:
        w.text("threshold.csv", "variant,direction,lambda_lo,lambda_hi,estimate\r\n"
               f"{spec.variant.value},{direction},{cfg.bracket[0]!r},{cfg.bracket[1]!r},\r\n")
        return EXIT_ANALYTIC, "NoBracket", str(exc)
    w.text("threshold.csv", "variant,direction,lambda_lo,lambda_hi,estimate\r\n"
           f"{spec.variant.value},{direction},{cfg.bracket[0]!r},{cfg.bracket[1]!r},{est!r}\r\n")
    return EXIT_OK, "done", ""


def _run_quantize(cfg, w):
    support = cfg.support
    rows = ["alpha_plus,alpha_minus,c_plus,c_minus,n_plus,n_minus,residual"]
    q = bu.quantization_solve(support)
    if isinstance(q, bu.SingleAtomQuantization):
        npl, nmi = (q.n, 0.0) if q.alpha >= 0 else (0.0, q.n)
        res = bu.quantization_residual([(q.alpha, q.mass)])
        rows.append(f"{q.alpha!r},,{q.mass!r},,{npl!r},{nmi!r},{res!r}")
    else:
        for c_plus in [8 * math.pi * k / 4 for k in range(9)]:
            for c_minus in q.minus_masses(c_plus):
                npl, nmi = q.n_values(c_plus, c_minus)
                rows.append(
                    f"{q.alpha_plus!r},{q.alpha_minus!r},{c_plus!r},{c_minus!r},"
                    f"{npl!r},{nmi!r},{q.residual(c_plus, c_minus)!r}"
                )
    w.text("quantization.csv", "\r\n".join(rows) + "\r\n")
    return EXIT_OK, "done", ""


def _run_check(cfg, w):
    v = initial_field(cfg)
    rep = mf.check_assumptions(cfg.spec, v)
    alphas = [a for a in cfg.spec.measure.alphas if a > 0] or [0.25, 0.5, 0.75, 1.0]
    mono = mf.monotonicity_check(cfg.spec.grid, v, alphas)
    w.text("assumptions.txt", rep.to_text() + f"monotone_ok = {str(mono).lower()}\n")
    ok = rep.jensen_ok and rep.sign_ok and mono
    return (EXIT_OK, "done", "") if ok else (EXIT_ANALYTIC, "violations", "assumption check failed")


_RUNNERS = {
    "solve": _run_solve,
    "minimize": _run_solve,
    "continue": _run_continue,
    "blowup-scan": _run_blowup_scan,
    "tm-sweep": _run_tm_sweep,
    "quantize": _run_quantize,
    "check-assumptions": _run_check,
}


def run(cfg: RunConfig) -> int:
    try:
        w = _Writer(Path(cfg.output_dir))
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_ERROR
    try:
        code, status, detail = _RUNNERS[cfg.command](cfg, w)
    except (MeanFieldError, OSError) as exc:
        code, status, detail = EXIT_ERROR, type(exc).__name__, str(exc)
        log.error("%s: %s", status, exc)
    try:
        w.manifest(cfg, status, code, detail)
    except OSError as exc:
        log.error("cannot write manifest: %s", exc)
        return EXIT_ERROR
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mflab", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, type=Path, help="INI run configuration")
    p.add_argument("--output", type=Path, help="output directory (overrides run.output_dir)")
    p.add_argument("--seed", type=int, help="u64 seed for random initial fields")
    p.add_argument("--threads", type=int, default=1,
                   help="accepted for interface compatibility; runs are single-threaded")
    p.add_argument("--validate-only", action="store_true", help="validate the config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    cfg, violations = parse_config(text, {"seed": args.seed, "output": args.output})
    if violations:
        for v in violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_ERROR
    if args.validate_only:
        print("config ok")
        return EXIT_OK
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
