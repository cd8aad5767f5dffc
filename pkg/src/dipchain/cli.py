"""Command-line experiment runner.

``dipchain run <experiment> --config cfg.yaml [--out DIR] [--workers N]``
writes one CSV per panel plus a JSON metadata file echoing the exact
configuration.  ``dipchain list`` prints the registered experiments.

Parameter sweeps are parallel over the field grid; results are merged by
sorted field value, so the output never depends on completion order.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml
from scipy.optimize import curve_fit

from . import dynamics, otoc, pauli, prethermal
from .models import SpinChainModel, build_collective, build_transverse_dipolar

PAPER_FIELDS = (0.16, 0.25, 0.33, 0.41, 0.49, 0.58, 0.66, 0.82, 0.99, 1.2, 1.3)
OTOC_TIMES = (1.9, 3.8, 5.7, 7.6)
BYTES_PER_ENTRY = 16
# dense operators alive at once inside one worker (H, eigenvectors, evolved ops, scratch)
DENSE_COPIES = 8


class GuardError(RuntimeError):
    """Raised when a run would exceed a resource guard."""


# ---------------------------------------------------------------------------
# configuration and results
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    experiment: str
    L: int | None = None
    J: float = -1.0
    u: float = 1.0
    g: list[float] | None = None
    range: str = "full"
    times: list[float] | None = None
    t_max: float | None = None
    dt: float | None = None
    n_max: int | None = None
    out: str = "results"
    workers: int = 1
    seed: int = 0
    memory_limit_gb: float | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {sorted(EXPERIMENTS)}")
        spec = EXPERIMENTS[self.experiment]
        for key, value in spec.defaults.items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if not self.g:
            raise ValueError("field list g must be non-empty")
        self.g = [float(v) for v in self.g]
        if self.L is None or self.L < 2 or self.L > spec.max_L:
            raise ValueError(f"L must lie in [2, {spec.max_L}] for {self.experiment}, got {self.L}")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    @classmethod
    def from_mapping(cls, data: dict, **overrides) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | os.PathLike, **overrides) -> "RunConfig":
        text = Path(path).read_text()
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        return cls.from_mapping(data or {}, **overrides)

    def model(self, g: float) -> SpinChainModel:
        return SpinChainModel(L=self.L, J=self.J, u=self.u, g=g, range=self.range)

    def time_grid(self) -> np.ndarray:
        if self.times is not None:
            return np.asarray(self.times, dtype=float)
        n = int(round(self.t_max / self.dt))
        return np.linspace(0.0, n * self.dt, n + 1)


@dataclass
class ResultTable:
    name: str
    columns: list[str]
    rows: list[list[float]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(len(r) != len(self.columns) for r in self.rows):
            raise ValueError(f"table {self.name} is not rectangular")

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def write(self, directory: str | os.PathLike) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{self.name}.csv"
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([repr(float(v)) for v in row])
        meta_path = directory / f"{self.name}.json"
        meta_path.write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=_jsonable))
        return csv_path, meta_path


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def envelope(t: Sequence[float], y: Sequence[float], period: float) -> tuple[np.ndarray, np.ndarray]:
    """Block averages of ``y`` over consecutive windows of one ``period`` (uniform grid)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if period <= 0:
        raise ValueError("period must be positive")
    step = np.median(np.diff(t)) if len(t) > 1 else period
    w = max(1, int(round(period / step)))
    nb = len(t) // w
    if nb == 0:
        raise ValueError("series shorter than one period")
    return t[:nb * w].reshape(nb, w).mean(1), y[:nb * w].reshape(nb, w).mean(1)


def fit_exponential(t: Sequence[float], y: Sequence[float], period: float | None = None,
                    *, return_stderr: bool = False):
    """Least-squares fit of ``log y = log A - gamma t``.

    With ``period`` the data are first block-averaged over one oscillation
    period.  Returns ``(A, gamma, residual)`` where ``residual`` is the RMS
    deviation in ``log y``; ``return_stderr`` appends the standard error of
    ``gamma`` (zero when fewer than three points survive).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape:
        raise ValueError("t and y must have equal length")
    if period is not None:
        t, y = envelope(t, y, period)
    if len(t) < 4:
        raise ValueError(f"need at least 4 points, got {len(t)}")
    if np.any(y <= 0):
        raise ValueError("exponential fit needs positive data")
    if np.ptp(t) == 0:
        raise ValueError("degenerate fit: all times equal")
    slope, intercept = np.polyfit(t, np.log(y), 1)
    resid = np.log(y) - (intercept + slope * t)
    out = (float(np.exp(intercept)), float(-slope), float(np.sqrt(np.mean(resid ** 2))))
    if return_stderr:
        stderr = np.sqrt(np.sum(resid ** 2) / (len(t) - 2) / np.sum((t - t.mean()) ** 2))
        out += (float(stderr),)
    return out


def _exp_model(g, gamma0, alpha, gamma_inf):
    return gamma0 * np.exp(-alpha * g) + gamma_inf


def compare_rate_fits(g: Sequence[float], gamma: Sequence[float]) -> dict:
    """Residual sums of squares of ``gamma0 e^{-alpha g} + gamma_inf`` and of a straight line."""
    g = np.asarray(g, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if len(g) < 4:
        raise ValueError("rate comparison needs at least 4 field values")
    lin = np.polyfit(g, gamma, 1)
    rss_lin = float(np.sum((np.polyval(lin, g) - gamma) ** 2))
    p0 = (max(gamma[0] - gamma[-1], 1e-6), 1.0 / max(np.ptp(g), 1e-6) * 3, gamma[-1])
    try:
        popt, _ = curve_fit(_exp_model, g, gamma, p0=p0, maxfev=20000)
        rss_exp = float(np.sum((_exp_model(g, *popt) - gamma) ** 2))
    except RuntimeError:
        popt, rss_exp = (np.nan,) * 3, float("inf")
    return {"gamma0": float(popt[0]), "alpha": float(popt[1]), "gamma_inf": float(popt[2]),
            "rss_exponential": rss_exp, "slope": float(lin[0]), "intercept": float(lin[1]),
            "rss_linear": rss_lin}


# ---------------------------------------------------------------------------
# per-field workers (top level so they pickle)
# ---------------------------------------------------------------------------

def _eig(cfg: RunConfig, g: float) -> dynamics.EigenSystem:
    return dynamics.diagonalize(build_transverse_dipolar(cfg.model(g)))


def _two_point(cfg: RunConfig, g: float) -> dict:
    eig = _eig(cfg, g)
    t = cfg.time_grid()
    L = cfg.L
    Z, Y = build_collective(L, "z"), build_collective(L, "y")
    czz = dynamics.two_point_correlator(Z, Z, eig, t)
    cyy = dynamics.two_point_correlator(Y, Y, eig, t)
    return {"correlators": [[g, ti, a, b] for ti, a, b in zip(t, czz, cyy)]}


def _otoc_sweep(cfg: RunConfig, g: float) -> dict:
    eig = _eig(cfg, g)
    L = cfg.L
    Y = build_collective(L, "y").to_dense()
    Z = build_collective(L, "z").to_dense()
    method = cfg.options.get("method", "direct")
    rows = []
    for t in cfg.time_grid():
        if method == "mqc":
            # with rho = 2Y/sqrt(L) the second moment is C_YZ itself
            c = otoc.mqc_spectrum(otoc.initial_deviation(Y), eig, t, Z, L).second_moment()
        else:
            c = otoc.oto_commutator_direct(Y, Z, eig, t)
        rows.append([g, t, c])
    return {"otoc": rows}


def _averaged(cfg: RunConfig, g: float) -> dict:
    eig = _eig(cfg, g)
    L = cfg.L
    times = cfg.time_grid()
    Z = build_collective(L, "z").to_dense()
    Y = build_collective(L, "y").to_dense()
    zz = np.mean([otoc.oto_commutator_direct(Z, Z, eig, t) for t in times])
    yy = np.mean([otoc.oto_commutator_direct(Y, Y, eig, t) for t in times])
    z2 = dynamics.hs_norm_sq(Z)
    z_tilde = dynamics.time_average_operator(Z, eig, times)
    z_inf = dynamics.diagonal_ensemble(Z, eig)
    row = [g, yy, zz,
           dynamics.hs_norm_sq(z_tilde) / z2, otoc.oto_commutator_of(z_tilde, Z, L),
           dynamics.hs_norm_sq(z_inf) / z2, otoc.oto_commutator_of(z_inf, Z, L)]
    return {"averaged": [row]}


def _series_gaps(cfg: RunConfig, g: float) -> dict:
    backend = cfg.options.get("backend", "dense")
    series = prethermal.transverse_dipolar_series(cfg.model(g), cfg.n_max, backend=backend)
    r = prethermal.series_gaps(series, cfg.options.get("statistic", "mean_abs"))
    return {"gaps": [[g, n + 1, v] for n, v in enumerate(r)]}


def _alt_gaps(cfg: RunConfig, g: float) -> dict:
    series = prethermal.alternative_generator_series(cfg.model(g), cfg.n_max)
    r = prethermal.series_gaps(series, cfg.options.get("statistic", "mean_abs"))
    return {"gaps": [[g, n + 1, v] for n, v in enumerate(r)]}


def _hamming(cfg: RunConfig, g: float) -> dict:
    eig = _eig(cfg, g)
    L = cfg.L
    Z = build_collective(L, "z").to_dense()
    base = pauli.random_baseline(L)
    rows = []
    for t in cfg.time_grid():
        f = pauli.hamming_decompose(dynamics.evolve_operator(Z, eig, t)).f
        rows.extend([g, t, k, f[k], base[k]] for k in range(L + 1))
    return {"hamming": rows}


def _locality(cfg: RunConfig, g: float) -> dict:
    series = prethermal.transverse_dipolar_series(cfg.model(g), cfg.n_max, backend="pauli")
    w = prethermal.locality_profile(series.generator())
    return {"locality": [[g, d, v] for d, v in enumerate(w)]}


def _decay(cfg: RunConfig, g: float) -> dict:
    eig = _eig(cfg, g)
    t = cfg.time_grid()
    Z = build_collective(cfg.L, "z")
    c = dynamics.two_point_correlator(Z, Z, eig, t)
    period = decay_period(g, float(t[-1] - t[0]))
    A, gamma, res, err = fit_exponential(t, c, period, return_stderr=True)
    return {"decay": [[g, A, gamma, err, res, period]], "series": [[g, ti, ci] for ti, ci in zip(t, c)]}


def decay_period(g: float, window: float) -> float:
    """Oscillation period ``pi / g`` of ``<Z(t)Z>``, capped at a quarter of the window."""
    return min(np.pi / abs(g), window / 4) if g != 0 else window / 4


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    worker: Callable[[RunConfig, float], dict]
    panels: dict[str, list[str]]
    defaults: dict
    max_L: int = dynamics.MAX_SITES
    dense: bool = True
    summarize: Callable[[RunConfig, dict], dict] | None = None


def _decay_summary(cfg: RunConfig, tables: dict) -> dict:
    rows = tables["decay"]
    if len(rows) < 4:
        return {"note": "rate comparison skipped (fewer than 4 field values)"}
    return compare_rate_fits([r[0] for r in rows], [r[2] for r in rows])


def _otoc_sim(cfg: RunConfig, g: float) -> dict:
    out = {}
    sub = RunConfig.from_mapping({**asdict(cfg), "experiment": "fig1bc", "times": list(cfg.options.get(
        "otoc_times", OTOC_TIMES))})
    out["otoc_vs_field"] = _otoc_sweep(sub, g)["otoc"]
    sub = RunConfig.from_mapping({**asdict(cfg), "experiment": "fig1bc",
                                  "times": cfg.time_grid().tolist()})
    out["otoc_vs_time"] = _otoc_sweep(sub, g)["otoc"]
    sub = RunConfig.from_mapping({**asdict(cfg), "experiment": "fig2", "times": list(dynamics.EXPERIMENT_TIMES)})
    out["averaged"] = _averaged(sub, g)["averaged"]
    return out


_AVG_COLS = ["g", "C_YY_avg", "C_ZZ_avg", "tr_Ztilde_sq", "C_Ztilde_Z", "tr_Zinf_sq", "C_Zinf_Z"]

EXPERIMENTS: dict[str, Experiment] = {e.name: e for e in [
    Experiment("fig1a", "two-point correlators <Z(t)Z> and <Y(t)Y>", _two_point,
               {"correlators": ["g", "Jt", "C_Z", "C_Y"]},
               {"L": 12, "g": [0.25, 1.0], "t_max": 10.0, "dt": 0.05}),
    Experiment("fig1bc", "OTO commutator C_YZ versus field and time", _otoc_sweep,
               {"otoc": ["g", "Jt", "C_YZ"]},
               {"L": 12, "g": list(PAPER_FIELDS), "times": list(OTOC_TIMES)}),
    Experiment("fig2", "time-averaged OTOCs, Tr(Z~^2) and the diagonal ensemble", _averaged,
               {"averaged": _AVG_COLS},
               {"L": 12, "g": list(PAPER_FIELDS), "times": list(dynamics.EXPERIMENT_TIMES)}),
    Experiment("fig3a", "eigenvalue difference r(n_M) of the prethermal series", _series_gaps,
               {"gaps": ["g", "n_M", "r"]},
               {"L": 12, "g": [0.25, 0.5, 1.0, 2.0], "n_max": 12, "times": [0.0]}),
    Experiment("fig3bcd", "Hamming-weight distribution of Z(t)", _hamming,
               {"hamming": ["g", "Jt", "k", "f_k", "baseline"]},
               {"L": 13, "g": [0.05, 0.5, 5.0], "times": [1000.0]}),
    Experiment("sm-decay", "exponential decay rate of <Z(t)Z> versus field", _decay,
               {"decay": ["g", "A", "gamma", "gamma_err", "residual", "period"], "series": ["g", "Jt", "C_Z"]},
               {"L": 12, "g": list(PAPER_FIELDS), "t_max": 10.0, "dt": 0.02},
               summarize=_decay_summary),
    Experiment("sm-otoc-sim", "simulated OTOC panels (field, time, averages, diagonal ensemble)", _otoc_sim,
               {"otoc_vs_field": ["g", "Jt", "C_YZ"], "otoc_vs_time": ["g", "Jt", "C_YZ"],
                "averaged": _AVG_COLS},
               {"L": 12, "g": list(PAPER_FIELDS), "t_max": 10.0, "dt": 0.25}),
    Experiment("sm-locality", "correlation-distance weights of the prethermal generator", _locality,
               {"locality": ["g", "distance", "weight"]},
               {"L": 8, "g": [0.25, 0.5, 1.0, 2.0], "n_max": 8, "times": [0.0]}, max_L=16, dense=False),
    Experiment("sm-prexx", "r(n_M) with the nearest-neighbour Ising-y generator", _alt_gaps,
               {"gaps": ["g", "n_M", "r"]},
               {"L": 11, "g": [0.25, 0.5, 1.0, 2.0], "n_max": 6, "times": [0.0]}),
]}


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _available_memory() -> float:
    try:
        return float(os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_AVPHYS_PAGES"))
    except (ValueError, OSError, AttributeError):  # pragma: no cover - non-POSIX
        return float("inf")


def estimate_memory(cfg: RunConfig) -> float:
    """Rough peak bytes for the whole run."""
    if not EXPERIMENTS[cfg.experiment].dense:
        return 0.0
    per_worker = DENSE_COPIES * BYTES_PER_ENTRY * float(4 ** cfg.L)
    return per_worker * min(cfg.workers, len(cfg.g))


def check_resources(cfg: RunConfig) -> None:
    limit = cfg.memory_limit_gb * 2 ** 30 if cfg.memory_limit_gb is not None else _available_memory()
    need = estimate_memory(cfg)
    if need > limit:
        raise GuardError(f"estimated {need / 2 ** 30:.1f} GiB exceeds the limit of {limit / 2 ** 30:.1f} GiB; "
                         "lower L or the worker count")


def _package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover - running from a source tree
        return "unknown"


def run_experiment(cfg: RunConfig) -> list[ResultTable]:
    """Run one registered experiment and return its tables (one per panel)."""
    exp = EXPERIMENTS[cfg.experiment]
    check_resources(cfg)
    start = time.perf_counter()
    grid = sorted(set(cfg.g))
    if cfg.workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(grid))) as pool:
            results = dict(zip(grid, pool.map(exp.worker, [cfg] * len(grid), grid)))
    else:
        results = {g: exp.worker(cfg, g) for g in grid}
    merged = {panel: [row for g in grid for row in results[g].get(panel, [])] for panel in exp.panels}
    wall = time.perf_counter() - start
    meta = {"config": asdict(cfg), "engine_version": _package_version(), "numpy": np.__version__,
            "wall_time_s": wall, "experiment": exp.name, "description": exp.description}
    if exp.summarize is not None:
        meta["summary"] = exp.summarize(cfg, merged)
    return [ResultTable(f"{exp.name}_{panel}", cols, merged[panel], {**meta, "panel": panel})
            for panel, cols in exp.panels.items()]


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dipchain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a registered experiment")
    run.add_argument("experiment")
    run.add_argument("--config", help="JSON or YAML file with RunConfig keys")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--workers", type=int, help="parallel workers over the field grid")
    sub.add_parser("list", help="list registered experiments")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, exp in EXPERIMENTS.items():
            print(f"{name:12s} {exp.description}")
        return 0
    try:
        overrides = {"out": args.out, "workers": args.workers}
        if args.config:
            cfg = RunConfig.from_file(args.config, experiment=args.experiment, **overrides)
        else:
            cfg = RunConfig.from_mapping({"experiment": args.experiment}, **overrides)
        tables = run_experiment(cfg)
    except GuardError as exc:
        return _error("resource_guard", str(exc), 3)
    except (ValueError, OSError, yaml.YAMLError) as exc:
        return _error("invalid_config", str(exc), 2)
    for table in tables:
        csv_path, _ = table.write(cfg.out)
        print(csv_path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
