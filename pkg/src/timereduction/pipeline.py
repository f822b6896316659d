"""End-to-end runs: simulate or load data, invert, score, and write artifacts."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation

from . import __version__
from .basis import MAX_BASIS_SIZE, write_basis_csv
from .carleman import IterationHistory
from .estimator import TimeReductionInversion
from .forward import BoundaryData, add_noise, extract_boundary, load_boundary_data, save_boundary_data, simulate
from .grid import Grid2D, OmegaGrid
from .phantoms import PHANTOM_NAMES, Inclusion, Phantom, make_phantom
from .reduction import write_coefficients_csv, write_cutoff_curve_csv

log = logging.getLogger(__name__)

FINE_SCALE = {"nx": 241, "stride": 2}

SCHEMAS = {
    "boundary_p.csv": "rows: node, x, y, then t followed by the Dirichlet trace at every boundary node",
    "boundary_q.csv": "rows: node, x, y, then t followed by the outward normal derivative at every boundary node",
    "boundary.json": "boundary data sidecar: noise level, seed, time grid, Omega descriptor",
    "basis_samples.csv": "t, weight, then psi, dpsi, ddpsi per basis function",
    "basis_S.csv": "N x N matrix S[m, n] = int psi_n'' psi_m",
    "basis_D.csv": "N x N matrix D[m, n] = int psi_n' psi_m",
    "coefficients.csv": "node, m, dirichlet, neumann",
    "cutoff_curve.csv": "N, residual",
    "U_comp.csv": "i, j, x, y, u_1..u_N",
    "f_comp.csv": "i, j, x, y, value",
    "a_comp.csv": "i, j, x, y, value",
    "f_true.csv": "i, j, x, y, value",
    "a_true.csv": "i, j, x, y, value",
    "decay.csv": "iter, consecutive_relative_difference, relative_difference_l2",
    "history.csv": "iter, consecutive_relative_difference, residual, seconds",
    "timings.csv": "stage, seconds",
    "report.json": "run report",
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run.  Cross-field checks happen in ``validate``."""

    phantom: str | None = "donut"
    data_path: str | None = None
    nx: int = 61
    stride: int = 1
    box_min: float = -3.0
    box_max: float = 3.0
    omega_min: float = -1.0
    omega_max: float = 1.0
    T: float = 1.0
    Nt: int = 201
    delta: float = 0.1
    seed: int | None = 1
    c: float = 1.0
    a0: float = 0.5
    n_basis: int | str = 35
    cutoff_tol: float = 1e-3
    x0: tuple[float, float] = (0.0, 5.5)
    beta: float = 25.0
    lam: float = 45.0
    b: float | str = "auto"
    weight_range: float = 2.0
    eps: float = 1e-3
    kappa0: float = 1e-5
    max_iters: int = 50
    clamp_M: float | None = None
    reg_eta: float = 1e-11
    stop_norm: str = "l2"
    projection: str = "spline"
    initial: str = "linear"
    solver: str = "direct"
    outdir: str = "runs/latest"

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @property
    def dt(self) -> float:
        return self.T / (self.Nt - 1)

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.box_min, self.box_max, self.omega_min, self.omega_max, self.nx)

    def validate(self) -> "RunConfig":
        if (self.phantom is None) == (self.data_path is None):
            raise ValueError("give exactly one of phantom and data_path")
        if self.phantom is not None and self.phantom not in PHANTOM_NAMES:
            raise ValueError(f"unknown phantom {self.phantom!r}; choose from {', '.join(PHANTOM_NAMES)}")
        if self.Nt < 2 or self.T <= 0:
            raise ValueError("need T > 0 and Nt >= 2")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if self.phantom is not None:
            grid = self.grid
            grid.omega(self.stride)
            if self.dt > grid.max_stable_dt():
                raise ValueError(f"CFL violated: dt={self.dt:g} exceeds {grid.max_stable_dt():.6g}")
        if self.n_basis != "auto" and not (isinstance(self.n_basis, int) and 1 <= self.n_basis <= MAX_BASIS_SIZE):
            raise ValueError(f"n_basis must be 'auto' or an integer in [1, {MAX_BASIS_SIZE}]")
        inside = all(self.omega_min <= v <= self.omega_max for v in self.x0)
        if inside:
            raise ValueError(f"x0={self.x0} lies in the closure of Omega")
        self.estimator()._validate_params()
        return self

    def estimator(self) -> TimeReductionInversion:
        names = TimeReductionInversion().get_params()
        return TimeReductionInversion(**{k: getattr(self, k) for k in names})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["x0"] = list(self.x0)
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def relative_l2(comp: np.ndarray, true: np.ndarray) -> float:
    norm = np.linalg.norm(true)
    if norm == 0:
        raise ValueError("true field is identically zero")
    return float(np.linalg.norm(comp - true) / norm)


def donut_localization(comp: np.ndarray, mask: np.ndarray, dilation: int = 2) -> float:
    """Fraction of the top quartile of ``comp - median(background)`` within the dilated mask."""
    excess = comp - np.median(comp[~mask])
    top = excess >= np.quantile(excess, 0.75)
    return float((top & binary_dilation(mask, iterations=dilation)).sum() / top.sum())


def metrics(comp: np.ndarray, true: np.ndarray, inclusions: dict[str, Inclusion] | None = None) -> dict:
    """Relative L2 and sup errors plus per-inclusion peak values."""
    comp, true = np.asarray(comp), np.asarray(true)
    if comp.shape != true.shape:
        raise ValueError(f"computed field {comp.shape} and true field {true.shape} differ in shape")
    out = {
        "relative_l2": relative_l2(comp, true),
        "sup_error": float(np.abs(comp - true).max() / np.abs(true).max()),
        "inclusions": {},
    }
    for label, inc in (inclusions or {}).items():
        if inc.mask.shape != comp.shape:
            raise ValueError(f"mask of inclusion {label!r} does not match the grid")
        if not inc.mask.any():
            continue
        peak = float(comp[inc.mask].max())
        entry = {"true": inc.value, "max": peak, "relative_error": abs(peak - inc.value) / abs(inc.value)}
        if label == "donut":
            entry["localization"] = donut_localization(comp, inc.mask)
        out["inclusions"][label] = entry
    return out


def write_grid_csv(path, omega: OmegaGrid, values: np.ndarray) -> Path:
    """One row per node: ``i, j, x, y`` followed by the value(s) there."""
    path = Path(path)
    vals = np.asarray(values).reshape(omega.size, -1)
    cols = ["value"] if vals.shape[1] == 1 else [f"u_{m + 1}" for m in range(vals.shape[1])]
    c = omega.coords
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y"] + cols)
        for k in range(omega.size):
            i, j = divmod(k, omega.n)
            w.writerow([i, j, f"{c[i]:.17g}", f"{c[j]:.17g}"] + [f"{v:.17g}" for v in vals[k]])
    return path


def write_history_csv(history: IterationHistory, outdir) -> list[Path]:
    """``history.csv`` with wall times and the timing-free ``decay.csv``."""
    outdir = Path(outdir)
    hist, decay = outdir / "history.csv", outdir / "decay.csv"
    with hist.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "consecutive_relative_difference", "residual", "seconds"])
        for k in range(history.n_iter):
            w.writerow([k + 1, f"{history.rel_diff_inf[k]:.17g}", f"{history.residual[k]:.17g}", f"{history.seconds[k]:.6f}"])
    with decay.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "consecutive_relative_difference", "relative_difference_l2"])
        for k in range(history.n_iter):
            w.writerow([k + 1, f"{history.rel_diff_inf[k]:.17g}", f"{history.rel_diff_l2[k]:.17g}"])
    return [hist, decay]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(outdir, config: RunConfig, files: list[Path], complete: bool, failure: dict | None = None) -> Path:
    outdir = Path(outdir)
    entries = {}
    for p in sorted(set(files), key=lambda q: q.name):
        if p.exists():
            entries[p.name] = {"schema": SCHEMAS.get(p.name, ""), "sha256": _sha256(p)}
    manifest = {
        "version": __version__,
        "config_hash": config.hash(),
        "config": config.to_dict(),
        "complete": complete,
        "files": entries,
    }
    if failure:
        manifest["failure"] = failure
    path = outdir / "MANIFEST.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def emit_plot_data(fields: dict[str, np.ndarray], history: IterationHistory | None, omega: OmegaGrid, outdir) -> list[Path]:
    """Grid CSVs named ``<key>.csv`` plus the decay curve."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [write_grid_csv(outdir / f"{name}.csv", omega, values) for name, values in fields.items()]
    if history is not None:
        paths += write_history_csv(history, outdir)
    return paths


def _truth_on_omega(phantom: Phantom, grid: Grid2D, stride: int) -> tuple[np.ndarray, np.ndarray, dict]:
    sl = grid.omega_slice
    f = phantom.f[sl, sl][::stride, ::stride]
    a = phantom.a[sl, sl][::stride, ::stride]
    incl = {
        k: Inclusion(v.field, v.value, v.mask[sl, sl][::stride, ::stride]) for k, v in phantom.inclusions.items()
    }
    return f, a, incl


@dataclass
class RunReport:
    config: RunConfig
    N: int
    converged: bool
    n_iter: int
    final_difference: float
    contraction_ratio: float | None
    metrics: dict = field(default_factory=dict)
    outdir: str = ""

    def to_dict(self) -> dict:
        return {
            "version": __version__,
            "config_hash": self.config.hash(),
            "config": self.config.to_dict(),
            "N": self.N,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "final_difference": self.final_difference,
            "contraction_ratio": self.contraction_ratio,
            "metrics": self.metrics,
        }


class _Stages:
    """Tracks the current stage, its timing, and every file written so far."""

    def __init__(self, config: RunConfig, outdir: Path):
        self.config, self.outdir = config, outdir
        self.files: list[Path] = []
        self.timings: list[tuple[str, float]] = []

    def __call__(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            out = fn(*args, **kwargs)
        except Exception as exc:
            self.timings.append((name, time.perf_counter() - t0))
            self.files.append(self._write_timings())
            write_manifest(self.outdir, self.config, self.files, complete=False, failure={"stage": name, "error": str(exc)})
            raise StageError(name, exc) from exc
        self.timings.append((name, time.perf_counter() - t0))
        return out

    def _write_timings(self) -> Path:
        path = self.outdir / "timings.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "seconds"])
            for name, sec in self.timings:
                w.writerow([name, f"{sec:.6f}"])
        return path

    def finish(self):
        self.files.append(self._write_timings())
        write_manifest(self.outdir, self.config, self.files, complete=True)


def _simulate_data(config: RunConfig) -> tuple[BoundaryData, Phantom]:
    grid = config.grid
    X, Y = grid.mesh
    phantom = make_phantom(config.phantom, X, Y, c=config.c, a0=config.a0)
    wave = simulate(phantom, grid, config.dt, config.Nt)
    clean = extract_boundary(wave, grid, stride=config.stride)
    data = add_noise(clean, config.delta, config.seed)
    meta = dict(data.meta, phantom=config.phantom, c=config.c, a0=config.a0)
    return dataclasses.replace(data, meta=meta), phantom


def simulate_stage(config: RunConfig) -> BoundaryData:
    """Write noisy boundary data and the true fields; returns the data."""
    config.validate()
    if config.phantom is None:
        raise ValueError("simulation needs a phantom")
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stages = _Stages(config, outdir)
    data, phantom = stages("simulate", _simulate_data, config)
    f, a, _ = _truth_on_omega(phantom, config.grid, config.stride)
    stages.files += stages("write", save_boundary_data, data, outdir)
    stages.files += stages("write", emit_plot_data, {"f_true": f, "a_true": a}, None, data.omega, outdir)
    stages.finish()
    return data


def _truth_from_meta(data: BoundaryData):
    meta = data.meta
    if "phantom" not in meta or "grid" not in meta:
        return None
    grid = Grid2D(**meta["grid"])
    X, Y = grid.mesh
    phantom = make_phantom(meta["phantom"], X, Y, c=meta.get("c", 1.0), a0=meta.get("a0", 0.5))
    return _truth_on_omega(phantom, grid, meta.get("stride", 1))


def run(config: RunConfig) -> RunReport:
    """Simulate (or load) data, invert, score and write every artifact to ``config.outdir``."""
    config.validate()
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stages = _Stages(config, outdir)

    if config.data_path is not None:
        data = stages("load", load_boundary_data, config.data_path)
        truth = stages("truth", _truth_from_meta, data)
    else:
        data, phantom = stages("simulate", _simulate_data, config)
        truth = _truth_on_omega(phantom, config.grid, config.stride)
    stages.files += stages("write", save_boundary_data, data, outdir)

    est = config.estimator()
    stages("invert", est.fit, data)
    omega = data.omega
    stages.files += write_basis_csv(est.basis_, outdir)
    stages.files.append(write_coefficients_csv(est.coefficients_, outdir / "coefficients.csv"))
    if est.cutoff_ is not None:
        stages.files.append(write_cutoff_curve_csv(est.cutoff_, outdir / "cutoff_curve.csv"))

    fields = {"U_comp": est.U_, "f_comp": est.f_, "a_comp": est.a_}
    scores = {}
    if truth is not None:
        f_true, a_true, incl = truth
        fields.update(f_true=f_true, a_true=a_true)
        scores["f"] = metrics(est.f_, f_true, {k: v for k, v in incl.items() if v.field == "f"})
        if np.any(a_true):
            scores["a"] = metrics(est.a_, a_true, {k: v for k, v in incl.items() if v.field == "a"})
    stages.files += stages("emit", emit_plot_data, fields, est.history_, omega, outdir)

    hist = est.history_
    ratios = hist.contraction_ratios()
    report = RunReport(
        config=config,
        N=est.basis_.N,
        converged=bool(hist.converged),
        n_iter=hist.n_iter,
        final_difference=hist.rel_diff_l2[-1],
        contraction_ratio=float(np.median(ratios[-5:])) if ratios.size else None,
        metrics=scores,
        outdir=str(outdir),
    )
    path = outdir / "report.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    stages.files.append(path)
    stages.finish()
    return report


def load_report(outdir) -> dict:
    return json.loads((Path(outdir) / "report.json").read_text())
