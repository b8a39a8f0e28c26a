"""Euler-Maruyama Monte Carlo for competing Brownian particles.

The rank permutation is frozen over each step: the particle holding rank k
at the start of a step moves by ``g_k dt + sqrt(sigma2_k dt) z`` with one
standard normal ``z`` per particle.  Collisions are probability-zero events
that a time grid cannot witness, so they are observed through proximity:
for each tracked rank window the spread ``Y_{k+n-1} - Y_k`` is recorded at
every grid time ``t_1..t_S`` (t = 0 is excluded) and compared to a ladder of
thresholds.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from ._backend import get_kernel
from .model import (
    FiniteSystemSpec,
    InfiniteSystemSpec,
    InvalidInputError,
    rank_permutation,
    spec_to_dict,
    validate_finite_spec,
    validate_infinite_spec,
)
from .conditions import PreconditionError
from .rng import derive_stream

__all__ = [
    "DEFAULT_EPSILONS",
    "ResourceError",
    "SimulationError",
    "SimConfig",
    "PathStats",
    "WindowStats",
    "MonteCarloResult",
    "step",
    "num_steps",
    "simulate_path",
    "simulate_paths",
    "monte_carlo",
    "simulate_infinite_truncated",
    "simulate_trajectory",
    "convergence_check",
    "result_to_json",
    "result_to_csv",
    "trajectory_to_csv",
]

DEFAULT_EPSILONS = (1e-1, 1e-2, 1e-3)
# floats of z held in memory per batch
_BATCH_FLOATS = 4_000_000


class SimulationError(RuntimeError):
    pass


class ResourceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    T: float = 1.0
    dt: float = 1e-3
    paths: int = 1000
    seed: int = 0
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    track_windows: tuple[tuple[int, int], ...] = ()
    truncation_M: int | None = None
    buffer_B: int = 0
    max_steps: int = 10_000_000
    threads: int = 1
    backend: str | None = None

    def echo(self) -> dict[str, Any]:
        """Config fields that affect results (threads/backend excluded)."""
        out = asdict(self)
        out.pop("threads")
        out.pop("backend")
        out["epsilons"] = list(self.epsilons)
        out["track_windows"] = [list(w) for w in self.track_windows]
        return out


def num_steps(T: float, dt: float) -> int:
    """ceil(T / dt), ignoring representation noise in the quotient."""
    return max(1, math.ceil(T / dt - 1e-9))


def _check_config(config: SimConfig, n_tracked: int) -> None:
    if not (config.T > 0 and math.isfinite(config.T)):
        raise InvalidInputError("T must be > 0")
    if not (config.dt > 0 and config.dt <= config.T):
        raise InvalidInputError("dt must satisfy 0 < dt <= T")
    if config.paths < 1:
        raise InvalidInputError("paths must be >= 1")
    if any(not e > 0 for e in config.epsilons):
        raise InvalidInputError("epsilons must be > 0")
    for k, n in config.track_windows:
        if n < 2 or k < 1 or k + n - 1 > n_tracked:
            raise InvalidInputError(
                f"window ({k}, {n}) must satisfy k >= 1, n >= 2, k+n-1 <= {n_tracked}")


@dataclass
class PathStats:
    """Statistics of one path; window keys are ``(k, n)`` with 1-based k."""

    min_spread: dict[tuple[int, int], float]
    proximity_counts: dict[tuple[tuple[int, int], float], int]
    com_end: float
    min_gap: float
    boundary_contact: bool = False


def step(x, dt: float, z, g, sigma2) -> np.ndarray:
    """One Euler step: each particle moves with the coefficients of its current rank."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    g = np.asarray(g, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if not (x.shape == z.shape == g.shape == sigma2.shape):
        raise InvalidInputError("x, z, g and sigma2 must have equal length")
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    names = rank_permutation(x).as_index()
    drift = g * dt
    vol = np.sqrt(sigma2 * dt)
    out = x.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        out[names] = x[names] + (drift + vol * z[names])
    if not np.all(np.isfinite(out)):
        raise SimulationError("non-finite position after step")
    return out


# ----------------------------------------------------------------------------
# batched path engine
# ----------------------------------------------------------------------------


@dataclass
class _Batch:
    min_spread: np.ndarray
    counts: np.ndarray
    com_end: np.ndarray
    min_gap: np.ndarray
    contact: np.ndarray


def _run_paths(spec: FiniteSystemSpec, config: SimConfig, path_indices: Sequence[int],
               buffer_start: int | None = None, z_override=None) -> _Batch:
    steps = num_steps(config.T, config.dt)
    N = spec.N
    if steps > config.max_steps:
        raise ResourceError(f"{steps} steps exceed the cap of {config.max_steps}")
    h = config.T / steps
    drift = np.asarray(spec.g, dtype=float) * h
    vol = np.sqrt(np.asarray(spec.sigma2, dtype=float) * h)
    x0 = np.asarray(spec.x0, dtype=float)
    windows = config.track_windows
    win_lo = np.array([k - 1 for k, _ in windows], dtype=np.int64)
    win_hi = np.array([k + n - 2 for k, n in windows], dtype=np.int64)
    eps = np.asarray(config.epsilons, dtype=float)
    track_top = int(win_hi.max()) if len(windows) else -1
    buffer_start = N if buffer_start is None else buffer_start
    kernel = get_kernel(config.backend)

    # per-path results do not depend on chunk boundaries, so chunks may follow threads
    per_batch = max(1, _BATCH_FLOATS // max(1, steps * N))
    if config.threads > 1:
        per_batch = min(per_batch, -(-len(path_indices) // config.threads))
    chunks = [path_indices[i:i + per_batch] for i in range(0, len(path_indices), per_batch)]

    def run(chunk):
        if z_override is not None:
            z = z_override
        else:
            z = np.empty((len(chunk), steps, N))
            for j, idx in enumerate(chunk):
                z[j] = derive_stream(config.seed, idx).standard_normal((steps, N))
        out = kernel(x0, drift, vol, z, win_lo, win_hi, eps, buffer_start, track_top)
        bad = out[5]
        if (bad >= 0).any():
            j = int(np.flatnonzero(bad >= 0)[0])
            raise SimulationError(
                f"non-finite position on path {chunk[j]} at step {int(bad[j])}")
        return out[:5]

    if config.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    # chunk results are concatenated in path-index order
    parts = [np.concatenate([r[i] for r in results]) for i in range(5)]
    return _Batch(*parts)


def _path_stats(batch: _Batch, j: int, config: SimConfig) -> PathStats:
    windows = [tuple(w) for w in config.track_windows]
    return PathStats(
        min_spread={w: float(batch.min_spread[j, a]) for a, w in enumerate(windows)},
        proximity_counts={(w, float(e)): int(batch.counts[j, a, b])
                          for a, w in enumerate(windows)
                          for b, e in enumerate(config.epsilons)},
        com_end=float(batch.com_end[j]),
        min_gap=float(batch.min_gap[j]),
        boundary_contact=bool(batch.contact[j]),
    )


def _require_valid(spec: FiniteSystemSpec) -> None:
    # a single particle is a plain Brownian motion; allowed here for diagnostics
    problems = validate_finite_spec(spec)
    if spec.N == 1:
        problems = [p for p in problems if not p.startswith("N must")]
    if problems:
        raise InvalidInputError("; ".join(problems))


def simulate_path(spec: FiniteSystemSpec, config: SimConfig, path_index: int,
                  z=None) -> PathStats:
    """Run one path from ``spec.x0``; deterministic in ``(config.seed, path_index)``.

    ``z`` (shape ``(steps, N)``) replaces the random draws when given.
    """
    _require_valid(spec)
    _check_config(config, spec.N)
    z_override = None if z is None else np.asarray(z, dtype=float)[None, :, :]
    batch = _run_paths(spec, config, [path_index], z_override=z_override)
    return _path_stats(batch, 0, config)


def simulate_paths(spec: FiniteSystemSpec, config: SimConfig) -> list[PathStats]:
    _require_valid(spec)
    _check_config(config, spec.N)
    batch = _run_paths(spec, config, list(range(config.paths)))
    return [_path_stats(batch, j, config) for j in range(config.paths)]


# ----------------------------------------------------------------------------
# aggregation
# ----------------------------------------------------------------------------


@dataclass
class WindowStats:
    k: int
    n: int
    min_spread_mean: float
    min_spread_min: float
    proximity_fraction: dict[float, float]
    proximity_stderr: dict[float, float]


@dataclass
class MonteCarloResult:
    config: SimConfig
    spec: dict[str, Any]
    paths: int
    steps: int
    windows: list[WindowStats]
    com_mean: float
    com_mean_stderr: float | None
    com_var: float
    com_var_stderr: float | None
    min_gap: float
    boundary_contact_fraction: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def window(self, k: int, n: int) -> WindowStats:
        for w in self.windows:
            if (w.k, w.n) == (k, n):
                return w
        raise KeyError((k, n))


def _aggregate(batch: _Batch, config: SimConfig, spec_doc: dict, steps: int,
               truncated: bool) -> MonteCarloResult:
    P = batch.com_end.shape[0]
    windows = []
    for a, (k, n) in enumerate(config.track_windows):
        spreads = batch.min_spread[:, a]
        frac, se = {}, {}
        for b, e in enumerate(config.epsilons):
            p = float(np.mean(batch.counts[:, a, b] > 0))
            frac[float(e)] = p
            se[float(e)] = math.sqrt(p * (1 - p) / P)
        windows.append(WindowStats(k, n, float(np.mean(spreads)), float(np.min(spreads)),
                                   frac, se))
    c = batch.com_end
    mean = float(np.mean(c))
    if P > 1:
        var = float(np.var(c, ddof=1))
        se_mean = math.sqrt(var / P)
        dev = c - mean
        m2 = float(np.mean(dev ** 2))
        m4 = float(np.mean(dev ** 4))
        se_var = math.sqrt(max(m4 - m2 * m2, 0.0) / P)
    else:
        var, se_mean, se_var = 0.0, None, None
    return MonteCarloResult(
        config=config,
        spec=spec_doc,
        paths=P,
        steps=steps,
        windows=windows,
        com_mean=mean,
        com_mean_stderr=se_mean,
        com_var=var,
        com_var_stderr=se_var,
        min_gap=float(np.min(batch.min_gap)),
        boundary_contact_fraction=float(np.mean(batch.contact)) if truncated else None,
    )


def _default_windows(config: SimConfig, n_tracked: int) -> SimConfig:
    if config.track_windows or n_tracked < 2:
        return config
    return replace(config, track_windows=((1, n_tracked),))


def monte_carlo(spec: FiniteSystemSpec, config: SimConfig) -> MonteCarloResult:
    """Run ``config.paths`` independent paths and aggregate in path-index order."""
    _require_valid(spec)
    config = _default_windows(config, spec.N)
    _check_config(config, spec.N)
    batch = _run_paths(spec, config, list(range(config.paths)))
    return _aggregate(batch, config, spec_to_dict(spec),
                      num_steps(config.T, config.dt), truncated=False)


def simulate_infinite_truncated(spec: InfiniteSystemSpec, config: SimConfig) -> MonteCarloResult:
    """Simulate the lowest ``truncation_M`` particles of an infinite system.

    The top ``buffer_B`` ranks only shield the tracked ranks from the missing
    particles above; a path is flagged with boundary contact when a buffer
    particle (one of the ``buffer_B`` highest initial names) ever occupies a
    rank at or below the highest tracked rank.
    """
    for v in validate_infinite_spec(spec):
        raise PreconditionError(v.gate, str(v))
    M, B = config.truncation_M, config.buffer_B
    if M is None:
        raise InvalidInputError("infinite systems need truncation_M")
    if B < 0 or M < spec.n0 + B or M - B < 2:
        raise InvalidInputError(
            f"need truncation_M >= n0 + buffer_B and truncation_M - buffer_B >= 2 "
            f"(got M={M}, B={B}, n0={spec.n0})")
    finite = spec.truncate(M)
    if not np.all(np.diff(finite.x0) >= 0):
        raise InvalidInputError("initial configuration must be nondecreasing in the name")
    config = _default_windows(config, min(4, M - B))
    _check_config(config, M - B)
    batch = _run_paths(finite, config, list(range(config.paths)), buffer_start=M - B)
    result = _aggregate(batch, config, spec_to_dict(spec),
                        num_steps(config.T, config.dt), truncated=True)
    result.extra["truncation"] = {"M": M, "B": B, "tracked_ranks": [1, M - B]}
    return result


def convergence_check(spec, config: SimConfig) -> dict[str, Any]:
    """Rerun at ``dt / 2`` and report how far the window statistics move.

    Differences are given both raw and in units of the combined standard
    error of the proximity fractions.
    """
    run = simulate_infinite_truncated if isinstance(spec, InfiniteSystemSpec) else monte_carlo
    coarse = run(spec, config)
    fine = run(spec, replace(config, dt=config.dt / 2))
    rows = []
    for wc, wf in zip(coarse.windows, fine.windows):
        for e in wc.proximity_fraction:
            se = math.hypot(wc.proximity_stderr[e], wf.proximity_stderr[e])
            diff = wf.proximity_fraction[e] - wc.proximity_fraction[e]
            rows.append({
                "window_k": wc.k, "window_n": wc.n, "epsilon": e,
                "fraction_dt": wc.proximity_fraction[e],
                "fraction_dt_half": wf.proximity_fraction[e],
                "diff": diff,
                "diff_in_se": diff / se if se > 0 else (0.0 if diff == 0 else math.inf),
                "min_spread_mean_diff": wf.min_spread_mean - wc.min_spread_mean,
            })
    return {"dt": config.dt, "dt_half": config.dt / 2, "rows": rows}


# ----------------------------------------------------------------------------
# trajectories
# ----------------------------------------------------------------------------


def simulate_trajectory(spec: FiniteSystemSpec, config: SimConfig,
                        path_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Full named trajectory of one path, on the same stream as the kernels."""
    _require_valid(spec)
    steps = num_steps(config.T, config.dt)
    if steps * spec.N > config.max_steps:
        raise ResourceError("trajectory too large for the configured cap")
    h = config.T / steps
    z = derive_stream(config.seed, path_index).standard_normal((steps, spec.N))
    X = np.empty((steps + 1, spec.N))
    X[0] = spec.x0
    for s in range(steps):
        X[s + 1] = step(X[s], h, z[s], spec.g, spec.sigma2)
    return np.arange(steps + 1) * h, X


def trajectory_to_csv(t: np.ndarray, X: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"X_{i}" for i in range(1, X.shape[1] + 1)])
    for ti, row in zip(t, X):
        writer.writerow([repr(float(ti))] + [repr(float(v)) for v in row])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# export
# ----------------------------------------------------------------------------


def result_to_dict(result: MonteCarloResult) -> dict[str, Any]:
    return {
        "config": result.config.echo(),
        "spec": result.spec,
        "paths": result.paths,
        "steps": result.steps,
        "windows": [
            {
                "k": w.k,
                "n": w.n,
                "min_spread_mean": w.min_spread_mean,
                "min_spread_min": w.min_spread_min,
                "proximity": [
                    {"epsilon": e, "fraction": w.proximity_fraction[e],
                     "stderr": w.proximity_stderr[e]}
                    for e in w.proximity_fraction
                ],
            }
            for w in result.windows
        ],
        "com": {
            "mean": result.com_mean,
            "mean_stderr": result.com_mean_stderr,
            "var": result.com_var,
            "var_stderr": result.com_var_stderr,
        },
        "min_gap": result.min_gap,
        "truncation": (
            None if result.boundary_contact_fraction is None
            else dict(result.extra.get("truncation", {}),
                      boundary_contact_fraction=result.boundary_contact_fraction)
        ),
    }


def result_to_json(result: MonteCarloResult) -> str:
    return json.dumps(result_to_dict(result), indent=2) + "\n"


CSV_COLUMNS = ["window_k", "window_n", "epsilon", "proximity_fraction", "stderr",
               "min_spread_mean", "min_spread_min"]


def result_to_csv(result: MonteCarloResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for w in result.windows:
        for e in w.proximity_fraction:
            writer.writerow([w.k, w.n, repr(e), repr(w.proximity_fraction[e]),
                             repr(w.proximity_stderr[e]), repr(w.min_spread_mean),
                             repr(w.min_spread_min)])
    return buf.getvalue()
