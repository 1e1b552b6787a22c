"""Experiment orchestration: parse a config, run the selected reduction
methods on the assembled problem, emit per-method convergence CSVs plus a
run manifest, and time scaling sweeps over grid resolutions."""

import configparser
import json
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, RiccatiMorError
from .kernels import backend_name, solve_dense_are
from .krylov import gark, pgark
from .metrics import (
    ConvergenceHistory,
    ConvergenceRecord,
    compute_reference,
    gain_error,
    h2_error,
    lift_gain,
    reference_hook,
    relative_residual,
)
from .problems import PdeConfig, Rect, assemble_system
from .reduction import bt_basis, bt_factors, pod_basis, reduce
from .snapshots import integrate_adjoint
from .kernels import thin_svd

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "run_experiment",
    "scaling_sweep",
    "MethodOutcome",
    "RunOutcome",
    "CSV_HEADER",
]

CSV_HEADER = "r,R_P,E_K,E_G,elapsed_s"
SWEEP_HEADER = "method,dx,n,r,iterations,R_P,elapsed_s,status"
REFERENCE_CUTOFF = 2000
KNOWN_METHODS = ("pod", "bt", "gark", "pgark")


@dataclass
class ExperimentConfig:
    problem: PdeConfig
    methods: tuple = ("gark",)
    tol: float = 1e-8
    r_max: int = 60
    sweep: tuple = tuple(range(2, 121))
    horizon: float = 1.0
    steps: int = 50
    use_b_variant: bool = False
    out_dir: str = "results"
    seed: int = 0
    csv_timings: bool = False

    def validate(self):
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        unknown = [m for m in self.methods if m not in KNOWN_METHODS]
        if unknown:
            raise ConfigError("unknown methods {} (choose from {})".format(unknown, KNOWN_METHODS))
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.r_max < 1:
            raise ConfigError("r_max must be at least 1")
        if any(b <= a for a, b in zip(self.sweep, self.sweep[1:])) or not self.sweep:
            raise ConfigError("sweep values must be strictly increasing and nonempty")
        if self.horizon <= 0 or self.steps < 1:
            raise ConfigError("snapshot horizon/steps invalid")
        return self


def _parse_rect(text, key):
    if text is None:
        raise ConfigError("missing problem key {}".format(key))
    parts = text.replace(",", " ").split()
    if len(parts) != 4:
        raise ConfigError("{} needs four numbers (x0 x1 y0 y1)".format(key))
    x0, x1, y0, y1 = map(float, parts)
    return Rect(x0, x1, y0, y1)


def _parse_sweep(text):
    text = text.strip()
    if ":" in text:
        pieces = [int(x) for x in text.split(":")]
        if len(pieces) == 2:
            pieces.append(1)
        if len(pieces) != 3:
            raise ConfigError("sweep range must be start:stop[:step]")
        return tuple(range(pieces[0], pieces[1], pieces[2]))
    return tuple(int(x) for x in text.replace(",", " ").split())


def parse_config(path, *, methods=None, tol=None, out_dir=None, seed=None):
    """Load an INI experiment config; CLI overrides win over file values."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError("cannot read config file {}".format(path))
    try:
        prob = parser["problem"]
        problem = PdeConfig(
            epsilon=prob.getfloat("epsilon"),
            gamma=prob.getfloat("gamma", 0.0),
            domain=_parse_rect(prob.get("domain"), "domain"),
            omega_b=_parse_rect(prob.get("omega_b"), "omega_b"),
            omega_c=_parse_rect(prob.get("omega_c"), "omega_c"),
            dx=prob.getfloat("dx"),
        )
        run = parser["run"] if parser.has_section("run") else {}
        snaps = parser["snapshots"] if parser.has_section("snapshots") else {}
        cfg = ExperimentConfig(
            problem=problem,
            methods=tuple(
                m.strip().lower()
                for m in run.get("methods", "gark").replace(",", " ").split()
            ),
            tol=float(run.get("tol", 1e-8)),
            r_max=int(run.get("r_max", 60)),
            sweep=_parse_sweep(run.get("sweep", "2:121:2")),
            horizon=float(snaps.get("horizon", 1.0)),
            steps=int(snaps.get("steps", 50)),
            use_b_variant=str(run.get("use_b_variant", "false")).lower() in ("1", "true", "yes"),
            out_dir=run.get("out", "results"),
            seed=int(run.get("seed", 0)),
            csv_timings=str(run.get("csv_timings", "false")).lower() in ("1", "true", "yes"),
        )
    except ConfigError as exc:
        raise ConfigError("invalid config: {}".format(exc)) from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError("invalid config: {}".format(exc)) from exc
    if methods is not None:
        cfg = replace(cfg, methods=tuple(m.strip().lower() for m in methods))
    if tol is not None:
        cfg = replace(cfg, tol=float(tol))
    if out_dir is not None:
        cfg = replace(cfg, out_dir=str(out_dir))
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    return cfg.validate()


@dataclass
class MethodOutcome:
    name: str
    status: str  # converged | not_converged | failed
    history: ConvergenceHistory
    events: List[str] = field(default_factory=list)
    error: Optional[str] = None
    elapsed: float = 0.0

    @property
    def converged(self):
        return self.status == "converged"

    def summary(self):
        final = self.history.final
        return {
            "status": self.status,
            "records": len(self.history),
            "final_order": final.order if final else None,
            "final_residual": final.residual if final else None,
            "final_gain_error": final.gain_error if final else None,
            "final_h2_error": final.h2_error if final else None,
            "residual_monotone": self.history.residual_monotone() if len(self.history) >= 3 else True,
            "events": self.events,
            "error": self.error,
            "elapsed_s": self.elapsed,
        }


@dataclass
class RunOutcome:
    exit_code: int
    manifest: dict
    out_dir: Path
    outcomes: dict


def _fmt(value):
    return "" if value is None else "{:.9e}".format(value)


def _write_history_csv(path, history, *, with_timings):
    lines = [CSV_HEADER]
    for rec in history:
        elapsed = _fmt(rec.elapsed) if with_timings else ""
        lines.append(
            "{},{},{},{},{}".format(
                rec.order, _fmt(rec.residual), _fmt(rec.gain_error),
                _fmt(rec.h2_error), elapsed,
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _run_krylov(sys, cfg, reference, method):
    driver = gark if method == "gark" else pgark
    hook = reference_hook(sys, reference)
    start = time.perf_counter()
    try:
        result = driver(
            sys,
            tol=cfg.tol,
            r_max=cfg.r_max,
            use_b_variant=cfg.use_b_variant,
            metrics_hook=hook,
        )
        history = result.history
        status = "converged"
        error = None
    except RiccatiMorError as exc:
        history = getattr(exc, "history", None) or ConvergenceHistory()
        status = "failed"
        error = "{}: {}".format(type(exc).__name__, exc)
    elapsed = time.perf_counter() - start
    events = list(history.events)
    if error:
        events.append(error)
    return MethodOutcome(
        name=method, status=status, history=history, events=events,
        error=error, elapsed=elapsed,
    )


def _sweep_metrics(sys, reference, model, p_red):
    res = relative_residual(sys, model.v, model.w, p_red)
    ek = eg = None
    if reference is not None and reference.gain is not None:
        ek = gain_error(lift_gain(model, p_red, sys.r_weight), reference.gain)
        eg = h2_error(sys, model, reference=reference)
    return res, ek, eg


def _run_sweep_method(sys, cfg, reference, method):
    history = ConvergenceHistory()
    events = []
    start = time.perf_counter()
    error = None
    status = "not_converged"
    try:
        if method == "pod":
            snaps = integrate_adjoint(sys, horizon=cfg.horizon, steps=cfg.steps)
            svd = thin_svd(snaps.states)
            rank = int(np.count_nonzero(svd[1] > 1e-12 * svd[1][0])) if svd[1].size else 0

            def build(r):
                basis, _ = pod_basis(snaps, r, svd=svd)
                return reduce(sys, basis, basis)

        else:
            factors = bt_factors(sys, schur_a=reference.schur_a if reference else None)
            rank = factors.rank

            def build(r):
                return bt_basis(sys, r, factors=factors)

        for r in cfg.sweep:
            if r > rank:
                events.append(
                    "sweep truncated at numerical rank {} (requested r={})".format(rank, r)
                )
                break
            try:
                model = build(r)
                p_red = solve_dense_are(model.a, model.b, model.c, sys.r_weight)
                res, ek, eg = _sweep_metrics(sys, reference, model, p_red)
            except RiccatiMorError as exc:
                events.append("order {} failed: {}".format(r, exc))
                continue
            history.append(
                ConvergenceRecord(
                    order=r, residual=res, gain_error=ek, h2_error=eg,
                    elapsed=time.perf_counter() - start,
                )
            )
            if res <= cfg.tol:
                status = "converged"
                break
    except RiccatiMorError as exc:
        status = "failed"
        error = "{}: {}".format(type(exc).__name__, exc)
        events.append(error)
    return MethodOutcome(
        name=method, status=status, history=history, events=events,
        error=error, elapsed=time.perf_counter() - start,
    )


def _versions():
    return {
        "riccati_mor": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "kernel_backend": backend_name(),
    }


def _config_dict(cfg):
    data = asdict(cfg)
    data["problem"] = asdict(cfg.problem)
    return data


def run_experiment(cfg):
    """Assemble the configured problem, run every requested method, and
    write one convergence CSV per method plus ``manifest.json``.

    CSV contents are a pure function of the config (elapsed cells stay
    empty unless ``csv_timings`` is set, which trades byte-reproducibility
    for wall-clock data; the manifest always carries timings). Returns a
    :class:`RunOutcome` whose exit code is 0 on full success and 3 when any
    method failed or stopped short of the tolerance, with partial CSVs
    preserved.
    """
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sys = assemble_system(cfg.problem)
    assemble_elapsed = time.perf_counter() - t0

    reference = None
    if sys.n <= REFERENCE_CUTOFF:
        reference = compute_reference(sys)

    outcomes = {}
    for method in cfg.methods:
        if method in ("gark", "pgark"):
            outcome = _run_krylov(sys, cfg, reference, method)
        else:
            outcome = _run_sweep_method(sys, cfg, reference, method)
        _write_history_csv(
            out_dir / "{}.csv".format(method), outcome.history,
            with_timings=cfg.csv_timings,
        )
        outcomes[method] = outcome

    exit_code = 0 if all(o.converged for o in outcomes.values()) else 3
    manifest = {
        "config": _config_dict(cfg),
        "versions": _versions(),
        "system": {"n": sys.n, "m": sys.m, "p": sys.p},
        "assembly_elapsed_s": assemble_elapsed,
        "reference": {
            "computed": reference is not None,
            "cutoff": REFERENCE_CUTOFF,
            "elapsed_s": reference.elapsed if reference else None,
            "h2_norm": reference.h2 if reference else None,
        },
        "methods": {name: outcome.summary() for name, outcome in outcomes.items()},
        "exit_code": exit_code,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return RunOutcome(exit_code=exit_code, manifest=manifest, out_dir=out_dir, outcomes=outcomes)


def scaling_sweep(cfg, dx_list, *, timeout_per_size=600.0):
    """Time the Krylov methods over a list of grid spacings.

    Only trends are meaningful (absolute seconds are hardware-dependent).
    Sizes whose projected runtime exceeds the per-size timeout, estimated
    by quadratic extrapolation from the previous size, are skipped and
    recorded as such. Per-size failures are recorded and the sweep
    continues. Writes ``scaling.csv`` into the output directory.
    """
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = [m for m in cfg.methods if m in ("gark", "pgark")] or ["gark"]
    rows = []
    last = {}
    for dx in dx_list:
        problem = replace(cfg.problem, dx=float(dx))
        sys = assemble_system(problem)
        for method in methods:
            prev = last.get(method)
            if prev is not None:
                projected = prev["elapsed"] * (sys.n / prev["n"]) ** 2
                if projected > timeout_per_size:
                    rows.append((method, dx, sys.n, "", "", "", "", "skipped_projected_timeout"))
                    continue
            driver = gark if method == "gark" else pgark
            start = time.perf_counter()
            try:
                result = driver(sys, tol=cfg.tol, r_max=cfg.r_max, use_b_variant=cfg.use_b_variant)
                elapsed = time.perf_counter() - start
                final = result.history.final
                rows.append(
                    (method, dx, sys.n, final.order, len(result.history),
                     _fmt(final.residual), "{:.6f}".format(elapsed), "converged")
                )
                last[method] = {"elapsed": elapsed, "n": sys.n}
            except RiccatiMorError as exc:
                elapsed = time.perf_counter() - start
                rows.append(
                    (method, dx, sys.n, "", "", "", "{:.6f}".format(elapsed),
                     "failed: {}".format(type(exc).__name__))
                )
    lines = [SWEEP_HEADER]
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    path = out_dir / "scaling.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path, rows
