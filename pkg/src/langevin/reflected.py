"""The Langevin process reflected at a completely inelastic boundary.

Construction: run the free process, apply Skorokhod reflection
(subtract the running minimum), then excise the time spent at the boundary
with a right-continuous time change. At the boundary the velocity is zero;
away from it the process moves like the free pair. Excursion statistics of
the reflected process are estimated through two limits:

* position limit: x^{-1/6} * E[F] over killed paths from (x, 0), x small,
* velocity limit: u^{-1/2} * E[F] over killed paths from (0, u), u small,

whose ratio is the constant c1 = (3/2)^{1/6} Gamma(1/3)/sqrt(pi).

Occupation histograms merge associatively across independent replicas, so
work can be partitioned over stream ids without changing the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DomainError
from .sampler import (
    ExcursionRecord,
    Path,
    RngStream,
    StepConfig,
    batch_first_passage,
    simulate_path,
)

_SQRT3 = math.sqrt(3.0)


@dataclass
class ReflectedPath:
    """Trajectory of the reflected pair with per-sample boundary flags."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    boundary_flags: np.ndarray
    boundary_tol: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.boundary_flags = np.asarray(self.boundary_flags, dtype=bool)
        n = self.times.size
        if not (self.positions.size == n and self.velocities.size == n and self.boundary_flags.size == n):
            raise DomainError("field lengths must match")
        if np.any(self.positions < 0.0):
            raise DomainError("reflected positions must be nonnegative")
        if not np.array_equal(self.boundary_flags, self.positions <= self.boundary_tol):
            raise DomainError("boundary flags must mark exactly the positions within tolerance")
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("times must be strictly increasing")


@dataclass
class TimeChangeMap:
    """Bookkeeping of the boundary-time excision.

    ``excised`` holds the maximal pre-change intervals removed; ``pre_times``
    and ``post_times`` give the monotone map on the retained samples.
    """

    excised: list
    pre_times: np.ndarray
    post_times: np.ndarray

    def __post_init__(self):
        self.pre_times = np.asarray(self.pre_times, dtype=float)
        self.post_times = np.asarray(self.post_times, dtype=float)
        if np.any(np.diff(self.post_times) < 0.0) or np.any(np.diff(self.pre_times) < 0.0):
            raise DomainError("time change must be monotone")

    @property
    def total_excised(self):
        return float(sum(b - a for a, b in self.excised))


def skorokhod_reflect(p: Path) -> Path:
    """Subtract the running minimum of the position; velocities unchanged."""
    runmin = np.minimum.accumulate(p.positions)
    return Path(p.times.copy(), p.positions - runmin, p.velocities.copy())


def time_change(p: Path, boundary_tol: float) -> tuple[ReflectedPath, TimeChangeMap]:
    """Excise the intervals where the reflected position sits at the boundary
    and reindex time; boundary samples keep a single representative with
    velocity forced to zero (position zero implies velocity zero).
    """
    if not boundary_tol > 0.0:
        raise DomainError("boundary_tol must be positive")
    if np.any(p.positions < 0.0):
        raise DomainError("time_change expects a nonnegative (reflected) path")
    pos = p.positions
    t = p.times
    n = t.size
    flagged = pos <= boundary_tol
    # left-rule durations; the final sample carries no duration
    dur = np.concatenate([np.diff(t), [0.0]])
    excised_dur = np.where(flagged, dur, 0.0)
    excised_before = np.concatenate([[0.0], np.cumsum(excised_dur)[:-1]])
    # keep non-boundary samples and the first sample of each boundary run
    first_of_run = flagged & ~np.concatenate([[False], flagged[:-1]])
    keep = ~flagged | first_of_run
    post_t = t - excised_before
    new_pos = pos[keep]
    new_vel = np.where(flagged[keep], 0.0, p.velocities[keep])
    rp = ReflectedPath(post_t[keep], new_pos, new_vel, flagged[keep], boundary_tol)
    intervals = []
    i = 0
    while i < n:
        if flagged[i]:
            j = i
            while j + 1 < n and flagged[j + 1]:
                j += 1
            end = t[j + 1] if j + 1 < n else t[j]
            intervals.append((float(t[i]), float(end)))
            i = j + 1
        else:
            i += 1
    tc = TimeChangeMap(intervals, t[keep], post_t[keep])
    return rp, tc


def default_boundary_tol(step: float) -> float:
    """Position scale of one step, step^{3/2}: the natural zero-set detector."""
    return step ** 1.5


def simulate_reflected(horizon, cfg: StepConfig, rng: RngStream,
                       boundary_tol: Optional[float] = None) -> ReflectedPath:
    """Reflected path from (0, 0) covering at least [0, horizon] of
    post-change time: free path, Skorokhod reflection, time change."""
    if not horizon > 0.0:
        raise DomainError("horizon must be positive")
    tol = default_boundary_tol(cfg.step) if boundary_tol is None else boundary_tol
    pre_horizon = max(horizon * 1.5, 4.0 * cfg.step)
    for _ in range(40):
        free = simulate_path((0.0, 0.0), pre_horizon, cfg, rng)
        rp, _tc = time_change(skorokhod_reflect(free), tol)
        if rp.times[-1] >= horizon:
            sel = rp.times <= horizon
            # keep at least two samples
            if sel.sum() >= 2:
                return ReflectedPath(rp.times[sel], rp.positions[sel], rp.velocities[sel],
                                     rp.boundary_flags[sel], tol)
            return rp
        pre_horizon *= 2.0
    raise DomainError("could not cover the requested post-change horizon")


def extract_excursions(p: ReflectedPath, min_height: float) -> list[ExcursionRecord]:
    """Maximal intervals with position above tolerance, tall ones only.

    Each record's path is framed by boundary samples (position set to the
    boundary, velocity as sampled); the recorded initial velocity is the
    velocity at the first interior sample, the grid proxy for the take-off
    velocity (zero in the limit for the inelastic boundary).
    """
    if not min_height > 0.0:
        raise DomainError("min_height must be positive")
    flags = p.boundary_flags
    out = []
    n = len(flags)
    i = 0
    while i < n:
        if flags[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and not flags[j + 1]:
            j += 1
        if i > 0 and j + 1 < n:  # complete excursion, framed by boundary samples
            seg = slice(i - 1, j + 2)
            pos = p.positions[seg].copy()
            vel = p.velocities[seg].copy()
            tms = p.times[seg] - p.times[seg][0]
            pos[0] = 0.0
            pos[-1] = 0.0
            u0 = float(vel[1])
            if pos.max() >= min_height and u0 != 0.0:
                out.append(ExcursionRecord(
                    u0=u0,
                    zeta=float(tms[-1]),
                    v_end=float(-p.velocities[j]),
                    path=Path(tms, pos, vel),
                ))
        i = j + 1
    return out


# ---------------------------------------------------------------------------
# occupation measurements (vectorized replicas)
# ---------------------------------------------------------------------------

def reflected_occupation(total_steps, cfg: StepConfig, rng: RngStream, *,
                         x_edges, u_edges, n_replicas=32, burn_in_fraction=0.05,
                         boundary_tol: Optional[float] = None):
    """Occupation histogram of the reflected pair over a phase-space box.

    Runs ``n_replicas`` independent replicas from (0, 0) for
    ``total_steps / n_replicas`` steps each, reflects, drops boundary time
    and the burn-in, and accumulates time in each cell. Replicas use the
    given stream's substreams, so any partition over stream ids merges to
    the same histogram.

    Returns (hist, kept_time, replica_count).
    """
    tol = default_boundary_tol(cfg.step) if boundary_tol is None else boundary_tol
    x_edges = np.asarray(x_edges, dtype=float)
    u_edges = np.asarray(u_edges, dtype=float)
    steps_per = int(total_steps // n_replicas)
    if steps_per < 10:
        raise DomainError("too few steps per replica")
    burn = int(burn_in_fraction * steps_per)
    hist = np.zeros((x_edges.size - 1, u_edges.size - 1))
    kept_time = 0.0
    s = cfg.step
    chunk = max(1, min(steps_per, int(4e6 // max(n_replicas, 1))))
    gen = rng.generator()
    w = np.zeros(n_replicas)
    y = np.zeros(n_replicas)
    runmin = np.zeros(n_replicas)
    done_steps = 0
    while done_steps < steps_per:
        m = min(chunk, steps_per - done_steps)
        xi1 = gen.standard_normal((n_replicas, m))
        xi2 = gen.standard_normal((n_replicas, m))
        dw = math.sqrt(s) * xi1
        wpath = w[:, None] + np.cumsum(dw, axis=1)
        wprev = np.concatenate([w[:, None], wpath[:, :-1]], axis=1)
        dy = s * wprev + s ** 1.5 * (0.5 * xi1 + xi2 / (2.0 * _SQRT3))
        ypath = y[:, None] + np.cumsum(dy, axis=1)
        runmin_path = np.minimum.accumulate(np.minimum(runmin[:, None], ypath), axis=1)
        xref = ypath - runmin_path
        vel = wpath
        if done_steps + m > burn:
            lo = max(burn - done_steps, 0)
            xs = xref[:, lo:]
            us = vel[:, lo:]
            off = xs > tol
            ix = np.searchsorted(x_edges, xs[off], side="right") - 1
            iu = np.searchsorted(u_edges, us[off], side="right") - 1
            ok = (ix >= 0) & (ix < x_edges.size - 1) & (iu >= 0) & (iu < u_edges.size - 1)
            if ok.any():
                flat = ix[ok] * (u_edges.size - 1) + iu[ok]
                hist.ravel()[:] += s * np.bincount(flat, minlength=hist.size)
            kept_time += s * float(off.sum())
        w = wpath[:, -1]
        y = ypath[:, -1]
        runmin = runmin_path[:, -1]
        done_steps += m
    return hist, kept_time, n_replicas


# ---------------------------------------------------------------------------
# excursion-measure estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionalTag:
    """A bounded excursion functional from the closed menu.

    kind is one of "lifetime-exceeds" (F = 1{zeta > a}),
    "max-height-exceeds" (F = 1{max |X| > a}) and
    "endpoint-speed-in" (F = 1{|V_end| in [a, b]}). All three vanish on a
    neighborhood of the zero path, as the limit construction requires.
    """

    kind: str
    a: float
    b: float = math.inf

    def __post_init__(self):
        if self.kind not in ("lifetime-exceeds", "max-height-exceeds", "endpoint-speed-in"):
            raise DomainError(f"unknown functional kind {self.kind!r}")
        if not self.a > 0.0:
            raise DomainError("functional threshold must be positive")
        if self.kind == "endpoint-speed-in" and not self.b > self.a:
            raise DomainError("endpoint-speed-in needs b > a")

    @classmethod
    def lifetime_exceeds(cls, s0):
        return cls("lifetime-exceeds", float(s0))

    @classmethod
    def max_height_exceeds(cls, h0):
        return cls("max-height-exceeds", float(h0))

    @classmethod
    def endpoint_speed_in(cls, a, b):
        return cls("endpoint-speed-in", float(a), float(b))


@dataclass(frozen=True)
class LimitEstimate:
    """Normalized excursion-measure estimate with its Monte Carlo error."""

    value: float
    stderr: float
    small_parameter: float
    n: int
    raw_mean: float = 0.0


def _functional_indicators(tag: FunctionalTag, x0, u0, n, cfg, rng):
    """Per-path indicator values of the tag over killed paths from (x0, u0)."""
    x = np.full(n, float(x0))
    u = np.full(n, float(u0))
    if tag.kind == "lifetime-exceeds":
        out = batch_first_passage(x, u, cfg, rng, censor_time=tag.a)
        return ~np.isfinite(out["zeta"]) | (out["zeta"] > tag.a)
    if tag.kind == "max-height-exceeds":
        out = batch_first_passage(x, u, cfg, rng, height_level=tag.a, stop_at_height=True)
        return out["crossed"]
    out = batch_first_passage(x, u, cfg, rng)
    sp = np.abs(out["v_end"])
    return (sp >= tag.a) & (sp <= tag.b)


def scaled_step_config(cfg: StepConfig, scale: float) -> StepConfig:
    """Shrink the base step to resolve the boundary layer of a small start.

    ``scale`` is the natural time scale of the start (x^{2/3} or u^2); the
    base step becomes min(cfg.step, scale / 50).
    """
    return replace(cfg, step=min(cfg.step, scale / 50.0))


def estimate_n_position_limit(x, stat: FunctionalTag, n, cfg: StepConfig,
                              rng: RngStream) -> LimitEstimate:
    """x^{-1/6} * mean of the functional over killed paths from (x, 0)."""
    if not x > 0.0:
        raise DomainError("x must be positive")
    cfg_x = scaled_step_config(cfg, x ** (2.0 / 3.0))
    ind = _functional_indicators(stat, x, 0.0, n, cfg_x, rng)
    p = float(ind.mean())
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / n)
    norm = x ** (-1.0 / 6.0)
    return LimitEstimate(norm * p, norm * se, x, n, p)


def estimate_nprime_velocity_limit(u, stat: FunctionalTag, n, cfg: StepConfig,
                                   rng: RngStream) -> LimitEstimate:
    """u^{-1/2} * mean of the functional over killed paths from (0, u)."""
    if not u > 0.0:
        raise DomainError("u must be positive")
    cfg_u = scaled_step_config(cfg, u * u)
    ind = _functional_indicators(stat, 0.0, u, n, cfg_u, rng)
    p = float(ind.mean())
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / n)
    norm = u ** -0.5
    return LimitEstimate(norm * p, norm * se, u, n, p)
