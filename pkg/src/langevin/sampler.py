"""Exact-increment Monte Carlo for the Kolmogorov (position, velocity) pair.

Increments of the pair over any step s are jointly Gaussian with covariance
[[s^3/3, s^2/2], [s^2/2, s]], so paths sampled on a grid carry no
discretization bias at the grid times. First-passage times to position zero
are located by sign change on the grid and refined with bisection on exact
conditional (bridge) draws; the only bias left is the possibility that an
excursion dips through zero and back strictly between grid points, which the
step policy keeps confined to a boundary layer where the configured base
step applies.

Away from the boundary the step grows adaptively: from state (x, w) a step s
is safe once x exceeds both 4*s*max(-w, 0) and 16*s^{3/2}, which puts the
boundary more than 20 fluctuation sigmas away, so missed crossings during
far-field steps are beyond machine-negligible (~1e-15 per step). This keeps
the heavy lifetime tail (P(zeta > T) ~ T^{-1/4}) affordable: the expected
number of steps per excursion is a few hundred instead of ~1e5.

Batch kernels vectorize across independent paths; determinism is pinned by
(seed, stream_id) through numpy's SeedSequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .densities import PhaseState, mckean_marginal_cdf
from .ensembles import WeightedEnsemble
from .errors import DomainError, HorizonExceededError, RejectionStallError

_SQRT3 = math.sqrt(3.0)
_STEP_CAP_ITER = 10 ** 6      # internal per-run iteration cap
_FLUCT_MARGIN = 16.0          # x >= 16 s^{3/2} before a far-field step
_DRIFT_MARGIN = 4.0           # x >= 4 s |w_down| before a far-field step


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream: (seed, stream_id) pins the sequence."""

    seed: int
    stream_id: int = 0

    def generator(self, *extra: int) -> np.random.Generator:
        return np.random.default_rng([self.seed & (2 ** 64 - 1), self.stream_id, *extra])

    def substream(self, k: int) -> "RngStream":
        return RngStream(self.seed, (self.stream_id << 16) + k + 1)


@dataclass(frozen=True)
class StepConfig:
    """Stepping policy for killed/path simulations.

    step          base time step, used verbatim inside the boundary layer
    refine_depth  bisection levels for crossing-time refinement
    boundary_tol  position tolerance for "at the boundary"
    adaptive      allow far-field step growth (exactness is unaffected)
    max_step      optional cap on adaptive steps (occupancy measurements)
    """

    step: float = 1e-3
    refine_depth: int = 20
    boundary_tol: float = 1e-9
    adaptive: bool = True
    max_step: Optional[float] = None

    def __post_init__(self):
        if not self.step > 0.0:
            raise DomainError("step must be positive")
        if self.refine_depth < 0:
            raise DomainError("refine_depth must be >= 0")
        if not self.boundary_tol > 0.0:
            raise DomainError("boundary_tol must be positive")
        if self.max_step is not None and not self.max_step > 0.0:
            raise DomainError("max_step must be positive when set")


@dataclass
class Path:
    """Discretized trajectory: strictly increasing times with phase states."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        n = self.times.size
        if self.positions.size != n or self.velocities.size != n:
            raise DomainError("times and states must have matching length")
        if n == 0:
            raise DomainError("a path needs at least one sample")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.positions))
                and np.all(np.isfinite(self.velocities))):
            raise DomainError("path entries must be finite")
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    def state(self, i: int) -> PhaseState:
        return PhaseState(float(self.positions[i]), float(self.velocities[i]))

    def states(self) -> np.ndarray:
        return np.column_stack([self.positions, self.velocities])


@dataclass
class ExcursionRecord:
    """One excursion away from position zero.

    u0     initial velocity (nonzero)
    zeta   lifetime
    v_end  negated velocity at the killing time
    path   optional recorded trajectory starting at position 0
    """

    u0: float
    zeta: float
    v_end: float
    path: Optional[Path] = None

    def __post_init__(self):
        if self.u0 == 0.0 or not math.isfinite(self.u0):
            raise DomainError("u0 must be nonzero and finite")
        if not (self.zeta > 0.0):
            raise DomainError("zeta must be positive")

    def validate_path(self, boundary_tol: float):
        if self.path is None:
            return
        pos = self.path.positions
        if abs(pos[0]) > boundary_tol:
            raise DomainError("excursion path must start at position 0")
        if abs(pos[-1]) > boundary_tol:
            raise DomainError("excursion path must end at the boundary")
        interior = pos[1:-1]
        sgn = math.copysign(1.0, self.u0)
        if interior.size and np.any(sgn * interior <= 0.0):
            raise DomainError("interior positions must have the sign of u0")


# ---------------------------------------------------------------------------
# elementary moves
# ---------------------------------------------------------------------------

def kolmogorov_step(state, s, rng) -> PhaseState:
    """One exact Gaussian increment of the pair over time s.

    (dY, dW) is centered Gaussian with covariance [[s^3/3, s^2/2], [s^2/2, s]],
    realized as dW = sqrt(s) xi1, dY = s^{3/2} (xi1/2 + xi2/(2 sqrt(3))).
    """
    if not (s > 0.0 and math.isfinite(s)):
        raise DomainError(f"s must be positive and finite, got {s}")
    x, u = _as_xu(state)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    xi1, xi2 = gen.standard_normal(2)
    dw = math.sqrt(s) * xi1
    dy = s * u + s ** 1.5 * (0.5 * xi1 + xi2 / (2.0 * _SQRT3))
    return PhaseState(x + dy, u + dw)


def _as_xu(state):
    if isinstance(state, PhaseState):
        return state.x, state.u
    x, u = state
    return float(x), float(u)


def _increments(gen, w, s):
    """Vectorized exact increments from velocities w over steps s."""
    n = w.size
    xi1 = gen.standard_normal(n)
    xi2 = gen.standard_normal(n)
    dw = np.sqrt(s) * xi1
    dy = s * w + s ** 1.5 * (0.5 * xi1 + xi2 / (2.0 * _SQRT3))
    return dy, dw


def _bridge_midpoint(gen, xL, wL, xR, wR, s):
    """Exact conditional state of the pair at the midpoint of a step of
    length s with endpoint states (xL, wL) and (xR, wR).

    Conditionally on both endpoints, position and velocity at the midpoint
    are independent Gaussians with variances s^3/192 and s/16.
    """
    a = xR - xL - s * wL
    b = wR - wL
    z1 = gen.standard_normal(xL.size)
    z2 = gen.standard_normal(xL.size)
    ym = xL + 0.5 * s * wL + 0.5 * a - s * b / 8.0 + np.sqrt(s ** 3 / 192.0) * z1
    wm = wL + 1.5 * a / s - b / 4.0 + np.sqrt(s / 16.0) * z2
    return ym, wm


def _refine_crossing(gen, xL, wL, xR, wR, s, level, downward, depth):
    """Bisection with exact bridge draws to localize a level crossing.

    Left states have not crossed, right states have. Returns relative
    crossing times in [0, s] and the velocity there.
    """
    rL = np.zeros(xL.size)
    rR = np.asarray(s, dtype=float).copy() if np.ndim(s) else np.full(xL.size, float(s))
    xL, wL, xR, wR = (np.array(v, dtype=float) for v in (xL, wL, xR, wR))
    for _ in range(depth):
        sf = rR - rL
        ym, wm = _bridge_midpoint(gen, xL, wL, xR, wR, sf)
        rm = 0.5 * (rL + rR)
        crossed = (ym <= level) if downward else (ym >= level)
        keep_left = ~crossed
        xL = np.where(keep_left, ym, xL)
        wL = np.where(keep_left, wm, wL)
        rL = np.where(keep_left, rm, rL)
        xR = np.where(~keep_left, ym, xR)
        wR = np.where(~keep_left, wm, wR)
        rR = np.where(~keep_left, rm, rR)
    return 0.5 * (rL + rR), 0.5 * (wL + wR)


# ---------------------------------------------------------------------------
# plain path simulation
# ---------------------------------------------------------------------------

def simulate_path(start, horizon, cfg: StepConfig, rng: RngStream) -> Path:
    """Path on the uniform grid of spacing cfg.step covering [0, horizon]."""
    if not horizon >= cfg.step:
        raise DomainError("horizon must be at least one step")
    x0, u0 = _as_xu(start)
    n = int(math.ceil(horizon / cfg.step - 1e-12))
    gen = rng.generator()
    xi1 = gen.standard_normal(n)
    xi2 = gen.standard_normal(n)
    s = cfg.step
    dw = math.sqrt(s) * xi1
    w = u0 + np.concatenate([[0.0], np.cumsum(dw)])
    dy = s * w[:-1] + s ** 1.5 * (0.5 * xi1 + xi2 / (2.0 * _SQRT3))
    y = x0 + np.concatenate([[0.0], np.cumsum(dy)])
    times = s * np.arange(n + 1)
    return Path(times, y, w)


def simulate_paths_marginal(start, t, n_paths, cfg: StepConfig, rng: RngStream):
    """States at time t of n_paths independent paths (vectorized, no storage)."""
    x0, u0 = _as_xu(start)
    n_steps = int(round(t / cfg.step))
    if abs(n_steps * cfg.step - t) > 1e-9 * max(t, 1.0) or n_steps < 1:
        raise DomainError("t must be a positive multiple of cfg.step")
    gen = rng.generator()
    x = np.full(n_paths, x0)
    w = np.full(n_paths, u0)
    s = cfg.step
    for _ in range(n_steps):
        dy, dw = _increments(gen, w, np.full(n_paths, s))
        x += dy
        w += dw
    return x, w


# ---------------------------------------------------------------------------
# killed-path batch kernel
# ---------------------------------------------------------------------------

@dataclass
class OccupancyGrid:
    """Accumulates weighted time in phase-space (and optionally time) cells."""

    x_edges: np.ndarray
    u_edges: np.ndarray
    t_edges: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x_edges = np.asarray(self.x_edges, dtype=float)
        self.u_edges = np.asarray(self.u_edges, dtype=float)
        if self.t_edges is not None:
            self.t_edges = np.asarray(self.t_edges, dtype=float)
        shape = [self.x_edges.size - 1, self.u_edges.size - 1]
        if self.t_edges is not None:
            shape.append(self.t_edges.size - 1)
        self.hist = np.zeros(shape)

    def add(self, x, u, t, wdt):
        ix = np.searchsorted(self.x_edges, x, side="right") - 1
        iu = np.searchsorted(self.u_edges, u, side="right") - 1
        ok = (ix >= 0) & (ix < self.x_edges.size - 1) & (iu >= 0) & (iu < self.u_edges.size - 1)
        if self.t_edges is not None:
            it = np.searchsorted(self.t_edges, t, side="right") - 1
            ok &= (it >= 0) & (it < self.t_edges.size - 1)
            flat = (ix[ok] * (self.u_edges.size - 1) + iu[ok]) * (self.t_edges.size - 1) + it[ok]
        else:
            flat = ix[ok] * (self.u_edges.size - 1) + iu[ok]
        if flat.size:
            self.hist.ravel()[:] += np.bincount(flat, weights=wdt[ok], minlength=self.hist.size)

    @property
    def x_span(self):
        return float(self.x_edges[0]), float(self.x_edges[-1])


def batch_first_passage(x0, u0, cfg: StepConfig, rng: RngStream, *,
                        censor_time=None, state_at=None, stop_at_mark=False,
                        height_level=None, stop_at_height=False, want_height_state=False,
                        track_max=False, occupancy: Optional[OccupancyGrid] = None,
                        occ_weights=None, occ_step_cap=None):
    """Simulate killed paths from (x0_i, u0_i) until the position returns to 0.

    Negative-side starts are handled through the sign flip symmetry of the
    pair; all outputs are in original coordinates. Returns a dict with

    zeta           lifetimes (inf when censored)
    v_end          negated killing velocities (nan when censored)
    alive_at       boolean mask of survival past ``state_at`` plus the states
    crossed        mask of paths whose |position| exceeded height_level
    height_state   bridge-refined states at the level crossing
    max_abs_pos    running max of |position| (if track_max)
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    n = x0.size
    if u0.size != n:
        raise DomainError("x0 and u0 must have matching shapes")
    if np.any((x0 == 0.0) & (u0 == 0.0)):
        raise DomainError("start states must not be (0, 0)")
    if np.any(x0 < 0.0) and np.any(x0 > 0.0):
        pass  # mixed-sign starts are fine; each path is flipped independently
    sgn = np.where(x0 != 0.0, np.sign(x0), np.sign(u0))
    x = sgn * x0
    w = sgn * u0
    t = np.zeros(n)
    gen = rng.generator()

    zeta = np.full(n, np.inf)
    vend = np.full(n, np.nan)
    crossed = np.zeros(n, dtype=bool)
    height_x = np.full(n, np.nan)
    height_u = np.full(n, np.nan)
    max_pos = x.copy() if track_max else None
    at_x = np.full(n, np.nan)
    at_u = np.full(n, np.nan)
    alive_at = np.zeros(n, dtype=bool)

    marks = sorted({m for m in (censor_time, state_at) if m is not None})
    alive = np.arange(n)
    iters = 0
    while alive.size:
        iters += 1
        if iters > _STEP_CAP_ITER:
            raise HorizonExceededError(
                f"{alive.size} paths still alive after {_STEP_CAP_ITER} iterations; "
                "cfg.step is too small for the lifetime tail")
        xa, wa, ta = x[alive], w[alive], t[alive]
        s = _choose_steps(xa, wa, cfg,
                          height_level=height_level if (height_level is not None) else None,
                          height_pending=None if height_level is None else ~crossed[alive],
                          occ_cap=occ_step_cap)
        for m in marks:
            before = ta < m - 1e-15
            s = np.where(before, np.minimum(s, m - ta), s)
        dy, dw = _increments(gen, wa, s)
        xn = xa + dy
        wn = wa + dw
        tn = ta + s
        for m in marks:
            hit = np.abs(tn - m) <= 1e-15 * max(1.0, m)
            tn = np.where(hit, m, tn)

        if occupancy is not None:
            wts = occ_weights[alive] if occ_weights is not None else np.ones(alive.size)
            occupancy.add(sgn[alive] * xa, sgn[alive] * wa, ta, wts * s)

        died = xn <= 0.0
        if died.any():
            idx = np.where(died)[0]
            r, wcross = _refine_crossing(gen, xa[idx], wa[idx], xn[idx], wn[idx],
                                         s[idx], 0.0, True, cfg.refine_depth)
            g = alive[idx]
            zeta[g] = ta[idx] + r
            vend[g] = -sgn[g] * wcross

        survivors = ~died
        if height_level is not None:
            newly = survivors & (xn >= height_level) & ~crossed[alive]
            if newly.any():
                idx = np.where(newly)[0]
                g = alive[idx]
                crossed[g] = True
                if want_height_state:
                    r, wcross = _refine_crossing(gen, xa[idx], wa[idx], xn[idx], wn[idx],
                                                 s[idx], height_level, False, cfg.refine_depth)
                    height_x[g] = sgn[g] * height_level
                    height_u[g] = sgn[g] * wcross
            if stop_at_height:
                survivors &= ~crossed[alive]

        if track_max:
            np.maximum.at(max_pos, alive, np.where(died, xa, xn))

        if state_at is not None:
            at_mark = survivors & (tn == state_at)
            if at_mark.any():
                g = alive[at_mark]
                alive_at[g] = True
                at_x[g] = sgn[g] * xn[at_mark]
                at_u[g] = sgn[g] * wn[at_mark]
            if stop_at_mark:
                survivors &= tn < state_at
        if censor_time is not None:
            survivors &= tn < censor_time

        g = alive[survivors]
        x[g] = xn[survivors]
        w[g] = wn[survivors]
        t[g] = tn[survivors]
        alive = g

    out = {"zeta": zeta, "v_end": vend, "crossed": crossed,
           "alive_at": alive_at, "at_x": at_x, "at_u": at_u,
           "height_x": height_x, "height_u": height_u}
    if track_max:
        out["max_abs_pos"] = max_pos
    if occupancy is not None:
        out["occupancy"] = occupancy
    return out


def _choose_steps(x, w, cfg: StepConfig, *, height_level=None, height_pending=None, occ_cap=None):
    """Step sizes for positive-side states (x > 0): the configured base step
    inside the boundary layer, safe adaptive growth outside it."""
    base = cfg.step
    if not cfg.adaptive:
        return np.full(x.size, base)
    down = np.maximum(-w, 0.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        s_drift = np.where(down > 0.0, x / (_DRIFT_MARGIN * down), np.inf)
    s_fluct = (x / _FLUCT_MARGIN) ** (2.0 / 3.0)
    s = np.maximum(base, np.minimum(s_drift, s_fluct))
    if height_level is not None:
        d = np.maximum(height_level - x, 0.0)
        up = np.maximum(w, 0.0)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            s_hd = np.where(up > 0.0, d / (_DRIFT_MARGIN * up), np.inf)
        s_h = np.maximum(base, np.minimum(s_hd, (d / _FLUCT_MARGIN) ** (2.0 / 3.0)))
        s = np.where(height_pending, np.minimum(s, s_h), s)
    if occ_cap is not None:
        threshold, cap = occ_cap
        s = np.where(x < threshold, np.minimum(s, cap), s)
    if cfg.max_step is not None:
        s = np.minimum(s, cfg.max_step)
    return s


# ---------------------------------------------------------------------------
# excursion-level operations
# ---------------------------------------------------------------------------

def sample_excursion_endpoints(u0, n, cfg: StepConfig, rng: RngStream):
    """(zeta, v_end) for n discretized excursions from (0, u0)."""
    if u0 == 0.0:
        raise DomainError("u0 must be nonzero")
    out = batch_first_passage(np.zeros(n), np.full(n, float(u0)), cfg, rng)
    return out["zeta"], out["v_end"]


def simulate_excursion(u0, cfg: StepConfig, rng: RngStream, with_path=False) -> ExcursionRecord:
    """One excursion from (0, u0), killed at the first return to zero.

    With ``with_path`` the (possibly non-uniform) grid trajectory is
    recorded; the final sample sits exactly on the boundary.
    """
    if u0 == 0.0 or not math.isfinite(u0):
        raise DomainError("u0 must be nonzero and finite")
    sgn = math.copysign(1.0, u0)
    gen = rng.generator()
    x, w, t = 0.0, abs(u0), 0.0
    times, xs, ws = [0.0], [0.0], [u0]
    for _ in range(_STEP_CAP_ITER):
        s = float(_choose_steps(np.array([x]), np.array([w]), cfg)[0])
        dy, dw = _increments(gen, np.array([w]), np.array([s]))
        xn, wn, tn = x + float(dy[0]), w + float(dw[0]), t + s
        if xn <= 0.0:
            r, wc = _refine_crossing(gen, np.array([x]), np.array([w]),
                                     np.array([xn]), np.array([wn]), s, 0.0, True,
                                     cfg.refine_depth)
            zeta = t + float(r[0])
            v_end = -sgn * float(wc[0])
            path = None
            if with_path:
                times.append(zeta)
                xs.append(0.0)
                ws.append(sgn * float(wc[0]))
                path = Path(np.array(times), np.array(xs), np.array(ws))
            return ExcursionRecord(u0=float(u0), zeta=zeta, v_end=v_end, path=path)
        x, w, t = xn, wn, tn
        if with_path:
            times.append(t)
            xs.append(sgn * x)
            ws.append(sgn * w)
    raise HorizonExceededError("no boundary crossing within the step cap")


def sample_first_passage_endpoints(u0, n, rng: RngStream):
    """Exact (discretization-free) samples of (zeta, v_end) from (0, u0), u0 > 0.

    v_end is drawn from the closed-form terminal-velocity density by
    rejection against a proposal with a v^{3/2} head and v^{-3/2} tail
    (bound 18/(5 pi), acceptance ~87%); zeta given v_end is drawn from the
    conditional density proportional to s^{-2} exp(-2(u^2-uv+v^2)/s)
    erf(sqrt(6uv/s)) by rejection against a two-piece inverse-gamma envelope
    obtained from erf(z) <= min(1, 2z/sqrt(pi)).
    """
    from scipy import special

    if not u0 > 0.0:
        raise DomainError("the exact endpoint sampler requires u0 > 0")
    gen = rng.generator()
    budget = max(10 ** 6, 64 * n)

    # terminal velocity: w ~ (3/2pi) w^{3/2}/(1+w^3), then v = u0 * w
    v = np.empty(n)
    got, used = 0, 0
    bound = 18.0 / (5.0 * math.pi)
    while got < n:
        m = int((n - got) * 1.4) + 16
        used += m
        if used > budget:
            raise RejectionStallError("terminal-velocity proposal budget exhausted")
        head = gen.random(m) < 1.0 / 6.0
        uu = gen.random(m)
        with np.errstate(divide="ignore", over="ignore"):
            wprop = np.where(head, uu ** 0.4, (1.0 - uu) ** -2.0)
        q = 5.0 / 12.0 * np.minimum(wprop ** 1.5, wprop ** -1.5)
        f = 1.5 / math.pi * wprop ** 1.5 / (1.0 + wprop ** 3)
        acc = gen.random(m) < f / (bound * q)
        take = wprop[acc][: n - got]
        v[got: got + take.size] = take
        got += take.size
    v *= u0

    # lifetime given v: piecewise envelope with cut s_c = 24 u v / pi
    q2 = u0 * u0 - u0 * v + v * v
    b = 2.0 * q2
    s_c = 24.0 * u0 * v / math.pi
    n1 = np.exp(-b / s_c) / b
    g_cut = special.gammainc(1.5, b / s_c)
    n2 = (2.0 / math.sqrt(math.pi)) * np.sqrt(6.0 * u0 * v) * b ** -1.5 * special.gamma(1.5) * g_cut
    zeta = np.empty(n)
    done = np.zeros(n, dtype=bool)
    used = 0
    while not done.all():
        idx = np.where(~done)[0]
        m = idx.size
        used += m
        if used > budget:
            raise RejectionStallError("lifetime proposal budget exhausted")
        pick1 = gen.random(m) < n1[idx] / (n1[idx] + n2[idx])
        uu = gen.random(m)
        s1 = b[idx] / (b[idx] / s_c[idx] - np.log(np.maximum(uu, 1e-300)))
        u2 = gen.random(m)
        wstar = special.gammaincinv(1.5, u2 * g_cut[idx])
        s2 = b[idx] / np.maximum(wstar, 1e-300)
        s = np.where(pick1, s1, s2)
        z = np.sqrt(6.0 * u0 * v[idx] / s)
        envelope = np.where(pick1, 1.0, 2.0 / math.sqrt(math.pi) * z)
        acc = gen.random(m) < special.erf(z) / envelope
        zeta[idx[acc]] = s[acc]
        done[idx[acc]] = True
    return zeta, v


def sample_first_passage_endpoint(u0, rng: RngStream):
    """Single exact (zeta, v_end) draw from (0, u0)."""
    z, v = sample_first_passage_endpoints(u0, 1, rng)
    return float(z[0]), float(v[0])


# ---------------------------------------------------------------------------
# path operators
# ---------------------------------------------------------------------------

def reverse_path(p: Path) -> Path:
    """Time reversal on the same grid: positions read backwards, velocities
    negated (the right-derivative of the reversed position path)."""
    t0, t1 = p.times[0], p.times[-1]
    return Path(t0 + (t1 - p.times[::-1]), p.positions[::-1].copy(), -p.velocities[::-1])


def conjugate_path(p: Path) -> Path:
    """Negate the velocity component, keep positions."""
    return Path(p.times.copy(), p.positions.copy(), -p.velocities)


def scale_path(p: Path, k: float) -> Path:
    """Diffusive rescaling: t -> t/k^2, y -> y/k^3, w -> w/k."""
    if not k > 0.0:
        raise DomainError("k must be positive")
    return Path(p.times / k ** 2, p.positions / k ** 3, p.velocities / k)


def simulate_two_sided(origin, horizon, cfg: StepConfig, rng: RngStream) -> Path:
    """Two-sided path on [-horizon, horizon] through ``origin`` at time 0.

    The backward half is an independent forward path from (x, -u), glued in
    as its reverse conjugate.
    """
    if not horizon > 0.0:
        raise DomainError("horizon must be positive")
    x0, u0 = _as_xu(origin)
    fwd = simulate_path((x0, u0), horizon, cfg, rng.substream(0))
    aux = simulate_path((x0, -u0), horizon, cfg, rng.substream(1))
    times = np.concatenate([-aux.times[::-1][:-1], fwd.times])
    pos = np.concatenate([aux.positions[::-1][:-1], fwd.positions])
    vel = np.concatenate([-aux.velocities[::-1][:-1], fwd.velocities])
    return Path(times, pos, vel)


def sample_qex_window(u_min, u_max, n, cfg: StepConfig, rng: RngStream) -> WeightedEnsemble:
    """Excursion ensemble estimating the stationary excursion measure
    restricted to initial speeds in [u_min, u_max].

    Initial velocities are uniform on +-[u_min, u_max]; each record carries
    weight |u0| * 2 (u_max - u_min), the importance factor from the |u| du
    intensity against the uniform proposal.
    """
    if not (0.0 < u_min < u_max):
        raise DomainError("need 0 < u_min < u_max")
    gen = rng.generator(7)
    signs = np.where(gen.random(n) < 0.5, -1.0, 1.0)
    u0 = signs * gen.uniform(u_min, u_max, n)
    out = batch_first_passage(np.zeros(n), u0, cfg, rng)
    records = np.rec.fromarrays([u0, out["zeta"], out["v_end"]],
                                names=["u0", "zeta", "v_end"])
    weights = np.abs(u0) * (2.0 * (u_max - u_min))
    return WeightedEnsemble(records, weights, normalization="absolute",
                            meta={"u_min": u_min, "u_max": u_max, "n": n})


def sample_position_at_velocity_zero(n, rng: RngStream, u0=1.0, min_step=1e-5):
    """Positions at the first time the velocity hits zero, from (0, u0).

    The velocity is a Brownian motion; steps adapt to the distance from
    zero velocity ((w/16)^2 keeps the crossing > 10 sigmas away), and the
    crossing is refined with pair-bridge bisection.
    """
    if not u0 > 0.0:
        raise DomainError("u0 must be positive")
    gen = rng.generator()
    x = np.zeros(n)
    w = np.full(n, float(u0))
    pos_at = np.empty(n)
    alive = np.arange(n)
    iters = 0
    while alive.size:
        iters += 1
        if iters > _STEP_CAP_ITER:
            raise HorizonExceededError("velocity-zero passage exceeded the step cap")
        wa = w[alive]
        xa = x[alive]
        s = np.maximum(min_step, (wa / 16.0) ** 2)
        dy, dw = _increments(gen, wa, s)
        xn = xa + dy
        wn = wa + dw
        hit = wn <= 0.0
        if hit.any():
            idx = np.where(hit)[0]
            # bisect on the velocity against level 0 (positions ride along)
            rL = np.zeros(idx.size)
            rR = s[idx].copy()
            xL, wL = xa[idx].copy(), wa[idx].copy()
            xR, wR = xn[idx].copy(), wn[idx].copy()
            for _ in range(30):
                sf = rR - rL
                ym, wm = _bridge_midpoint(gen, xL, wL, xR, wR, sf)
                rm = 0.5 * (rL + rR)
                crossed = wm <= 0.0
                keep_left = ~crossed
                xL = np.where(keep_left, ym, xL)
                wL = np.where(keep_left, wm, wL)
                rL = np.where(keep_left, rm, rL)
                xR = np.where(~keep_left, ym, xR)
                wR = np.where(~keep_left, wm, wR)
                rR = np.where(~keep_left, rm, rR)
            pos_at[alive[idx]] = 0.5 * (xL + xR)
        keep = ~hit
        g = alive[keep]
        x[g] = xn[keep]
        w[g] = wn[keep]
        alive = g
    return pos_at


def mckean_marginal_cdf_u(u0):
    """Curried terminal-velocity cdf for KS tests against excursions from (0, u0)."""
    def cdf(v):
        return mckean_marginal_cdf(abs(u0), np.maximum(np.asarray(v, float), 0.0))
    return cdf
