"""Monte-Carlo sweep harness: specs, trial runner, CSV and SVG artifacts.

A sweep is a pure function of ``(spec, base_seed)``: per-trial seeds derive
from the base seed, the axis value and the trial index, results aggregate
in index order, and every algorithm inside one trial sees the identical
instance. CSV content is therefore byte-stable across runs and worker
counts, except for the wall-clock ``mean_runtime_ms`` column.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from . import block_oracle, solvers
from .errors import InvalidSpec, RecoveryError
from .metrics import TrialOutcome, is_failure, relative_mse
from .model import SolverConfig
from .synth import gen_instance, trial_seed

__all__ = [
    "ALGORITHMS",
    "ExperimentSpec",
    "SweepCell",
    "SweepResult",
    "parse_experiment_config",
    "run_trial",
    "run_sweep",
    "emit_csv",
    "read_sweep_csv",
    "emit_plot",
]

log = logging.getLogger(__name__)

ALGORITHMS: dict[str, Callable] = {
    "resbl_qm": solvers.solve_resbl_qm,
    "mfocuss": solvers.solve_mfocuss,
    "tmfocuss": solvers.solve_tmfocuss,
    "iter_l2": solvers.solve_iter_l2,
    "titer_l2": solvers.solve_titer_l2,
    "exact_oracle": block_oracle.solve_exact,
}

CSV_HEADER = (
    "axis,axis_value,algorithm,trials,failures,failure_rate,"
    "mean_iterations,mean_runtime_ms,base_seed"
)


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one Monte-Carlo sweep.

    Exactly one axis is swept: ``k`` (number of nonzero rows, with ``m``
    fixed) or ``m_over_n`` (dictionary overcompleteness, with ``k`` fixed).
    All instance preconditions are validated for every grid point up front.
    """

    axis: str
    values: tuple[float, ...]
    n: int = 25
    m: Optional[int] = 100
    l: int = 3
    k: Optional[int] = None
    snr_db: Optional[float] = 25.0
    beta_low: float = 0.5
    beta_high: float = 1.0
    algorithms: tuple[str, ...] = ("resbl_qm", "mfocuss", "tmfocuss", "iter_l2", "titer_l2")
    trials: int = 100
    base_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    out_dir: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.axis not in ("k", "m_over_n"):
            raise InvalidSpec(f"axis must be 'k' or 'm_over_n', got {self.axis!r}")
        if len(self.values) == 0:
            raise InvalidSpec("values must be a nonempty list")
        if np.any(np.diff(self.values) <= 0):
            raise InvalidSpec(f"values must be strictly increasing, got {self.values}")
        if self.trials < 1:
            raise InvalidSpec(f"trials must be >= 1, got {self.trials}")
        if len(self.algorithms) == 0:
            raise InvalidSpec("algorithms must be a nonempty list")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise InvalidSpec(
                f"unknown algorithms {unknown}; available: {sorted(ALGORITHMS)}"
            )
        if len(set(self.algorithms)) != len(self.algorithms):
            raise InvalidSpec("algorithms must not repeat")
        if self.n < 1 or self.l < 1:
            raise InvalidSpec(f"n and l must be >= 1, got n={self.n}, l={self.l}")
        if self.axis == "k" and self.m is None:
            raise InvalidSpec("sweeping k requires a fixed m")
        if self.axis == "m_over_n" and self.k is None:
            raise InvalidSpec("sweeping m_over_n requires a fixed k")
        if self.snr_db is not None and not np.isfinite(self.snr_db):
            raise InvalidSpec("snr_db must be finite or None for noiseless")
        if not (0.0 <= self.beta_low <= self.beta_high <= 1.0):
            raise InvalidSpec(
                f"need 0 <= beta_low <= beta_high <= 1, got "
                f"[{self.beta_low}, {self.beta_high})"
            )
        for value in self.values:
            n, m, l, k = self.cell_dims(value)
            if self.axis == "k" and k != value:
                raise InvalidSpec(f"k values must be integers, got {value}")
            if m < 1:
                raise InvalidSpec(f"axis value {value} yields m={m} < 1")
            if not (1 <= k <= min(n * l, m)):
                raise InvalidSpec(
                    f"axis value {value}: k={k} outside [1, min(n*l, m)={min(n * l, m)}]"
                )

    def cell_dims(self, axis_value: float) -> tuple[int, int, int, int]:
        """Instance dimensions ``(n, m, l, k)`` at one grid point."""
        if self.axis == "k":
            return self.n, int(self.m), self.l, int(axis_value)
        return self.n, int(round(axis_value * self.n)), self.l, int(self.k)


@dataclass(frozen=True)
class SweepCell:
    """Aggregated outcomes of one (axis value, algorithm) pair."""

    axis_value: float
    algorithm: str
    trials: int
    failures: int
    failure_rate: float
    mean_iterations: float
    mean_runtime: float

    def __post_init__(self):
        if self.failures > self.trials:
            raise ValueError("failures cannot exceed trials")
        if not (0.0 <= self.failure_rate <= 1.0):
            raise ValueError(f"failure_rate must lie in [0, 1], got {self.failure_rate}")


@dataclass(frozen=True)
class SweepResult:
    """All cells of a sweep plus the spec that produced them."""

    spec: ExperimentSpec
    cells: tuple[SweepCell, ...]


_CONFIG_INT_KEYS = {"n", "m", "l", "k", "trials", "base_seed"}
_CONFIG_FLOAT_KEYS = {"beta_low", "beta_high"}
_SOLVER_INT_KEYS = {"max_iter", "lambda_freeze_after"}
_SOLVER_FLOAT_KEYS = {
    "tol", "prune_threshold", "p", "epsilon_initial", "epsilon_floor",
    "epsilon_factor", "b_ridge",
}


def parse_experiment_config(text: str) -> ExperimentSpec:
    """Parse the flat ``key = value`` sweep configuration schema.

    Recognized keys: ``axis`` (k | m_over_n), ``values`` (comma separated,
    strictly increasing), ``algorithms`` (comma separated), ``n``, ``m``,
    ``l``, ``k``, ``snr_db`` (number or ``noiseless``), ``beta_low``,
    ``beta_high``, ``trials``, ``base_seed``, ``out_dir`` and solver
    overrides prefixed ``solver.`` (for example ``solver.p = 0.8``).
    Blank lines and lines starting with ``#`` are ignored. Unknown keys
    raise ``InvalidSpec``.
    """
    fields: dict = {}
    solver_kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidSpec(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key == "axis":
                fields["axis"] = value
            elif key == "values":
                fields["values"] = tuple(float(v) for v in value.split(","))
            elif key == "algorithms":
                fields["algorithms"] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "snr_db":
                fields["snr_db"] = None if value.lower() == "noiseless" else float(value)
            elif key == "out_dir":
                fields["out_dir"] = value
            elif key in _CONFIG_INT_KEYS:
                fields[key] = int(value)
            elif key in _CONFIG_FLOAT_KEYS:
                fields[key] = float(value)
            elif key.startswith("solver."):
                sub = key[len("solver."):]
                if sub in _SOLVER_INT_KEYS:
                    solver_kwargs[sub] = None if value.lower() == "none" else int(value)
                elif sub in _SOLVER_FLOAT_KEYS:
                    solver_kwargs[sub] = float(value)
                elif sub == "lambda_mode":
                    solver_kwargs[sub] = value
                elif sub == "learn_b":
                    solver_kwargs[sub] = value.lower() in ("1", "true", "yes")
                else:
                    raise InvalidSpec(f"line {lineno}: unknown solver key {key!r}")
            else:
                raise InvalidSpec(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise InvalidSpec(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    if "axis" not in fields or "values" not in fields:
        raise InvalidSpec("config must define at least 'axis' and 'values'")
    try:
        solver = SolverConfig(**solver_kwargs)
        return ExperimentSpec(solver=solver, **fields)
    except ValueError as exc:
        raise InvalidSpec(str(exc)) from exc


def run_trial(spec: ExperimentSpec, axis_value: float, trial_index: int) -> list[TrialOutcome]:
    """Run every requested algorithm on one freshly generated instance.

    All algorithms see the identical instance, whose seed derives from
    ``(base_seed, axis_value, trial_index)``. A solver raising a numerical
    error counts as a failed trial and is logged; it never aborts a sweep.
    """
    n, m, l, k = spec.cell_dims(axis_value)
    seed = trial_seed(spec.base_seed, axis_value, trial_index)
    problem, truth = gen_instance(
        n, m, l, k, spec.beta_low, spec.beta_high, spec.snr_db, seed
    )
    outcomes = []
    for name in spec.algorithms:
        solve = ALGORITHMS[name]
        start = time.perf_counter()
        try:
            result = solve(problem, spec.solver)
            failed = is_failure(result.x_hat, truth)
            iterations = result.iterations
            mse = relative_mse(result.x_hat, truth.x_gen)
        except (RecoveryError, np.linalg.LinAlgError) as exc:
            log.warning(
                "%s failed at axis=%s trial=%d: %s", name, axis_value, trial_index, exc
            )
            failed, iterations, mse = True, 0, 1.0
        runtime = time.perf_counter() - start
        outcomes.append(TrialOutcome(name, failed, iterations, runtime, mse))
    return outcomes


def _trial_task(args) -> tuple[int, int, list[TrialOutcome]]:
    spec, value_index, trial_index = args
    value = spec.values[value_index]
    return value_index, trial_index, run_trial(spec, value, trial_index)


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> SweepResult:
    """Execute all (axis value, trial) cells, optionally across processes.

    Aggregation happens in (axis value, algorithm name) order from a
    structure indexed by task identity, so the result does not depend on
    the number of workers or on completion order.
    """
    tasks = [
        (spec, vi, t) for vi in range(len(spec.values)) for t in range(spec.trials)
    ]
    by_cell: dict[tuple[int, int], list[TrialOutcome]] = {}
    if workers <= 1:
        for task in tasks:
            vi, t, outcomes = _trial_task(task)
            by_cell[(vi, t)] = outcomes
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for vi, t, outcomes in pool.map(_trial_task, tasks, chunksize=4):
                by_cell[(vi, t)] = outcomes
    cells = []
    for vi, value in enumerate(spec.values):
        per_alg: dict[str, list[TrialOutcome]] = {a: [] for a in spec.algorithms}
        for t in range(spec.trials):
            for outcome in by_cell[(vi, t)]:
                per_alg[outcome.algorithm].append(outcome)
        for name in sorted(spec.algorithms):
            outs = per_alg[name]
            failures = sum(o.failed for o in outs)
            cells.append(
                SweepCell(
                    axis_value=value,
                    algorithm=name,
                    trials=len(outs),
                    failures=failures,
                    failure_rate=failures / len(outs),
                    mean_iterations=float(np.mean([o.iterations for o in outs])),
                    mean_runtime=float(np.mean([o.runtime for o in outs])),
                )
            )
    return SweepResult(spec, tuple(cells))


def emit_csv(result: SweepResult, path: Union[str, Path]) -> None:
    """Write one CSV row per (axis value, algorithm) cell, full precision."""
    lines = [CSV_HEADER]
    for c in result.cells:
        lines.append(
            f"{result.spec.axis},{c.axis_value!r},{c.algorithm},{c.trials},"
            f"{c.failures},{c.failure_rate!r},{c.mean_iterations!r},"
            f"{c.mean_runtime * 1e3!r},{result.spec.base_seed}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_sweep_csv(path: Union[str, Path]) -> list[dict]:
    """Parse a CSV produced by ``emit_csv`` back into per-cell dicts."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing sweep CSV header")
    names = CSV_HEADER.split(",")
    out = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(names):
            raise ValueError(f"{path}: malformed row {line!r}")
        row = dict(zip(names, parts))
        for key in ("axis_value", "failure_rate", "mean_iterations", "mean_runtime_ms"):
            row[key] = float(row[key])
        for key in ("trials", "failures", "base_seed"):
            row[key] = int(row[key])
        out.append(row)
    return out


_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)

_AXIS_LABELS = {"k": "nonzero rows K", "m_over_n": "overcompleteness M/N"}


def emit_plot(result: SweepResult, path: Union[str, Path]) -> None:
    """Render failure-rate curves as a self-contained SVG file.

    One polyline plus one circle marker per data point for each algorithm,
    legend entries sorted by algorithm name; no external renderer needed
    beyond any SVG viewer. Output bytes depend only on the result.
    """
    spec = result.spec
    width, height = 640, 420
    left, right, top, bottom = 62.0, width - 170.0, 24.0, height - 52.0
    values = sorted({c.axis_value for c in result.cells})
    vmin, vmax = min(values), max(values)
    span = vmax - vmin

    def sx(v: float) -> float:
        if span == 0.0:
            return (left + right) / 2.0
        return left + (v - vmin) / span * (right - left)

    def sy(rate: float) -> float:
        return bottom - rate * (bottom - top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        '<g font-family="sans-serif" font-size="12">',
    ]
    for frac in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        yy = sy(frac)
        parts.append(
            f'<line x1="{left:.2f}" y1="{yy:.2f}" x2="{right:.2f}" y2="{yy:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 8:.2f}" y="{yy + 4:.2f}" text-anchor="end">{frac:.1f}</text>'
        )
    for v in values:
        xx = sx(v)
        parts.append(
            f'<line x1="{xx:.2f}" y1="{bottom:.2f}" x2="{xx:.2f}" y2="{bottom + 5:.2f}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{xx:.2f}" y="{bottom + 18:.2f}" text-anchor="middle">{v:g}</text>'
        )
    parts.append(
        f'<line x1="{left:.2f}" y1="{top:.2f}" x2="{left:.2f}" y2="{bottom:.2f}" '
        f'stroke="black" stroke-width="1.5"/>'
    )
    parts.append(
        f'<line x1="{left:.2f}" y1="{bottom:.2f}" x2="{right:.2f}" y2="{bottom:.2f}" '
        f'stroke="black" stroke-width="1.5"/>'
    )
    xlabel = _AXIS_LABELS.get(spec.axis, spec.axis)
    parts.append(
        f'<text x="{(left + right) / 2:.2f}" y="{height - 14}" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(top + bottom) / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(top + bottom) / 2:.2f})">failure rate</text>'
    )
    names = sorted({c.algorithm for c in result.cells})
    for idx, name in enumerate(names):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = sorted(
            (c.axis_value, c.failure_rate) for c in result.cells if c.algorithm == name
        )
        coords = " ".join(f"{sx(v):.2f},{sy(r):.2f}" for v, r in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for v, r in pts:
            parts.append(
                f'<circle cx="{sx(v):.2f}" cy="{sy(r):.2f}" r="3.5" fill="{color}"/>'
            )
        ly = top + 16 + idx * 18
        parts.append(
            f'<line x1="{right + 12:.2f}" y1="{ly:.2f}" x2="{right + 34:.2f}" '
            f'y2="{ly:.2f}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{right + 40:.2f}" y="{ly + 4:.2f}">{name}</text>')
    parts.append("</g>")
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
