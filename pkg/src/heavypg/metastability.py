"""Levy-driven ascent on synthetic multi-well objectives: exit and transition times.

The discrete recursion is

    theta_{k+1} = theta_k + eta * grad(theta_k) + eps * eta**(1/alpha) * S_k

with S_k a unit-scale symmetric alpha-stable draw (componentwise in 1-d; a
fixed unit direction times a scalar draw in higher dimension).  Under the
coupling eps = eta**((alpha-1)/alpha) the noise term is exactly eta * S_k and
the recursion is the Euler discretization, with time step eta, of ascent
driven by alpha-stable motion with jump coefficient eps.  Sweeps may instead
set eps directly at fixed eta, so the noise level is not conflated with the
time discretization.

Measured quantities:

* exit time from a ball of radius ``a`` around a chosen local maximum -- the
  first step k with ||theta_k - maximum|| >= a.  For heavy tails the mean
  scales like eps**(-alpha); for alpha = 2 it grows exponentially in
  1/eps**2 (escape over the energy barrier), which is why Gaussian-driven
  search is slow to leave a spurious peak.
* transition time into the radius-``a`` neighborhood of a *different*
  maximum, along with which side was reached first.  The limiting
  right-arrival probability is d_plus**(-alpha) / (d_plus**(-alpha) +
  (-d_minus)**(-alpha)) where d_plus/d_minus are the gap distances from the
  start ball to the neighbor balls.

Runs are vectorized in lockstep but each run consumes noise only from its own
counter-based stream, so results are reproducible per run and independent of
how many runs execute together.  Iterates are clamped to the landscape's
simulation box, which keeps the Euler step stable after arbitrarily large
jumps (the gradient is polynomial, so it is Lipschitz on the box).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from heavypg.stable_random import SeededStream, StableSpec, sample_stable_vector

__all__ = [
    "Landscape",
    "single_well",
    "double_well",
    "triple_well",
    "make_landscape",
    "ExitTimeRecord",
    "TransitionRecord",
    "ExitTimeStudy",
    "TransitionStudy",
    "ScalingFit",
    "BrownianFit",
    "levy_recursion_step",
    "measure_exit_time",
    "measure_transition",
    "fit_scaling_exponent",
    "fit_brownian_law",
    "jump_coefficient",
]

_BLOCK = 512


def jump_coefficient(eta: float, alpha: float) -> float:
    """eps = eta**((alpha-1)/alpha), the jump coefficient induced by step size eta."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    return eta ** ((alpha - 1.0) / alpha)


@dataclass(frozen=True)
class Landscape:
    """Synthetic objective with known maxima and hand-derived gradient.

    1-d kinds are polynomials in theta; the 2-d variant runs the 1-d profile
    along the first coordinate and a quadratic confinement along the second,
    so maxima sit at (m_i, 0).  ``value``/``grad`` accept scalars, (n,) run
    vectors (1-d), or (n, 2) stacks (2-d).
    """

    kind: str
    maxima_1d: tuple[float, ...]
    depth: float
    dim: int = 1
    box: tuple[float, float] = (-6.0, 6.0)
    perp_curvature: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("single_well", "double_well", "triple_well"):
            raise ValueError(f"unknown landscape kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.depth <= 0:
            raise ValueError("depth must be positive")
        if self.box[0] >= self.box[1]:
            raise ValueError("box must be an increasing interval")

    @property
    def maxima(self) -> np.ndarray:
        """Maxima positions, shape (r,) in 1-d and (r, 2) in 2-d."""
        m = np.asarray(self.maxima_1d, dtype=float)
        if self.dim == 1:
            return m
        return np.stack([m, np.zeros_like(m)], axis=1)

    def _profile_value(self, t: np.ndarray) -> np.ndarray:
        if self.kind == "single_well":
            return -0.5 * self.depth * t**2
        prod = np.ones_like(t)
        for m in self.maxima_1d:
            prod = prod * (t - m)
        return -self.depth * prod**2

    def _profile_grad(self, t: np.ndarray) -> np.ndarray:
        if self.kind == "single_well":
            return -self.depth * t
        prod = np.ones_like(t)
        for m in self.maxima_1d:
            prod = prod * (t - m)
        dsum = np.zeros_like(t)
        for m in self.maxima_1d:
            partial = np.ones_like(t)
            for m2 in self.maxima_1d:
                if m2 != m:
                    partial = partial * (t - m2)
            dsum = dsum + partial
        return -2.0 * self.depth * prod * dsum

    def value(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.dim == 1:
            return self._profile_value(theta)
        t, perp = theta[..., 0], theta[..., 1]
        return self._profile_value(t) - 0.5 * self.perp_curvature * perp**2

    def grad(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.dim == 1:
            return self._profile_grad(theta)
        g = np.empty_like(theta)
        g[..., 0] = self._profile_grad(theta[..., 0])
        g[..., 1] = -self.perp_curvature * theta[..., 1]
        return g

    def max_curvature(self, grid: int = 2001) -> float:
        """max |d2J/dt2| of the 1-d profile over the box, for Euler stability checks."""
        t = np.linspace(self.box[0], self.box[1], grid)
        g = self._profile_grad(t)
        curv = np.abs(np.gradient(g, t))
        return float(max(curv.max(), self.perp_curvature if self.dim == 2 else 0.0))

    def stable_eta(self) -> float:
        """Largest step size keeping drift-only Euler monotone on the box."""
        return 1.0 / self.max_curvature()


def single_well(curvature: float = 1.0, dim: int = 1, box=(-6.0, 6.0)) -> Landscape:
    return Landscape("single_well", (0.0,), curvature, dim, box)


def double_well(
    maxima: tuple[float, float] = (-1.0, 1.0),
    depth: float = 0.04,
    dim: int = 1,
    box: tuple[float, float] | None = None,
    perp_curvature: float = 1.0,
) -> Landscape:
    """J(t) = -depth_scale * ((t-m0)(t-m1))**2 with J = 0 at both maxima.

    ``depth`` is the barrier depth |J| at the midpoint; the quartic scale is
    solved from it so configs state the physically meaningful number.
    """
    m0, m1 = float(maxima[0]), float(maxima[1])
    mid = 0.5 * (m0 + m1)
    scale = depth / ((mid - m0) * (mid - m1)) ** 2
    box = box or (m0 - 2.0, m1 + 2.0)
    return Landscape("double_well", (m0, m1), scale, dim, box, perp_curvature)


def triple_well(
    maxima: tuple[float, float, float] | None = None,
    depth: float = 0.5,
    symmetric_width: float = 1.25,
    dim: int = 1,
    box: tuple[float, float] | None = None,
) -> Landscape:
    """Sextic -depth_scale * ((t-mL)(t-mC)(t-mR))**2; symmetric by default.

    ``depth`` directly scales the sextic (the two barriers differ when the
    well spacing is asymmetric, so no single barrier number exists).
    """
    if maxima is None:
        w = symmetric_width
        maxima = (-w, 0.0, w)
    m = tuple(float(v) for v in maxima)
    if not (m[0] < m[1] < m[2]):
        raise ValueError("maxima must be strictly increasing")
    box = box or (m[0] - 1.5, m[2] + 1.5)
    return Landscape("triple_well", m, depth, dim, box)


def make_landscape(kind: str, **kwargs) -> Landscape:
    factory = {"single_well": single_well, "double_well": double_well, "triple_well": triple_well}
    if kind not in factory:
        raise ValueError(f"unknown landscape kind {kind!r}")
    return factory[kind](**kwargs)


@dataclass
class ExitTimeRecord:
    alpha: float
    epsilon: float
    a: float
    eta: float
    run: int
    exit_step: int  # step count at exit; cap when censored
    censored: bool
    exit_sign: int
    in_tube: bool | None = None  # 2-d only: membership of the escape tube


@dataclass
class TransitionRecord:
    start_well: int
    arrival_well: int  # -1 when censored
    transition_step: int
    censored: bool
    direction_sign: int


@dataclass
class ExitTimeStudy:
    landscape: Landscape
    well_index: int
    alpha: float
    a: float
    records: list[ExitTimeRecord]
    paths: dict[tuple[float, int], np.ndarray] = field(default_factory=dict)

    def censored_fraction(self, epsilon: float) -> float:
        rows = [r for r in self.records if r.epsilon == epsilon]
        return sum(r.censored for r in rows) / len(rows)

    @property
    def epsilons(self) -> list[float]:
        return sorted({r.epsilon for r in self.records})


@dataclass
class TransitionStudy:
    landscape: Landscape
    start_well: int
    alpha: float
    a: float
    epsilon: float
    records: list[TransitionRecord]

    @property
    def censored_fraction(self) -> float:
        return sum(r.censored for r in self.records) / len(self.records)

    @property
    def right_probability(self) -> float:
        """Fraction of uncensored runs that arrived at the right neighbor first."""
        arrived = [r for r in self.records if not r.censored]
        if not arrived:
            raise ValueError("no uncensored transitions")
        return sum(r.direction_sign > 0 for r in arrived) / len(arrived)

    def theory_right_probability(self) -> float:
        d_plus, d_minus = neighbor_gaps(self.landscape, self.start_well, self.a)
        wp, wm = d_plus**-self.alpha, (-d_minus) ** -self.alpha
        return wp / (wp + wm)


def neighbor_gaps(landscape: Landscape, well_index: int, a: float) -> tuple[float, float]:
    """Gap distances from the start ball to the two neighbor balls (d_plus, d_minus).

    d_plus > 0 is the distance to the right neighbor's ball along the escape
    direction; d_minus < 0 the (signed) distance to the left neighbor's.
    """
    m = landscape.maxima_1d
    i = well_index
    if not (0 < i < len(m) - 1):
        raise ValueError("start well needs neighbors on both sides")
    d_plus = (m[i + 1] - m[i]) - a
    d_minus = (m[i - 1] - m[i]) + a
    if d_plus <= 0 or d_minus >= 0:
        raise ValueError("neighborhood radius swallows a neighboring well")
    return d_plus, d_minus


def levy_recursion_step(
    theta,
    landscape: Landscape,
    eta: float,
    alpha: float,
    stream: SeededStream,
    epsilon: float | None = None,
    direction: np.ndarray | None = None,
):
    """One ascent-plus-noise step; eps defaults to the eta-coupled coefficient.

    Pass ``epsilon=0`` for drift-only ascent (test mode).  Positions are
    clamped to the landscape box after the step.
    """
    if not (1.0 <= alpha <= 2.0):
        raise ValueError(f"alpha must lie in [1, 2], got {alpha}")
    eps = jump_coefficient(eta, alpha) if epsilon is None else float(epsilon)
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError(f"non-finite iterate {theta}")
    drift = theta + eta * landscape.grad(theta)
    if eps == 0.0:
        return np.clip(drift, landscape.box[0], landscape.box[1])
    scale = eps * eta ** (1.0 / alpha)
    if landscape.dim == 1:
        noise = scale * sample_stable_vector(StableSpec(alpha), max(theta.size, 1), stream)
        noise = noise.reshape(theta.shape) if theta.shape else noise[0]
    else:
        r = np.array([1.0, 0.0]) if direction is None else np.asarray(direction, float)
        r = r / np.linalg.norm(r)
        draws = sample_stable_vector(StableSpec(alpha), theta[..., 0].size, stream)
        noise = (scale * draws).reshape(theta[..., 0].shape)[..., None] * r
    return np.clip(drift + noise, landscape.box[0], landscape.box[1])


def _noise_block(alpha, scale, streams, active, length):
    """(n_active, length) noise drawn per run from that run's own stream."""
    spec = StableSpec(alpha)
    return np.stack(
        [scale * sample_stable_vector(spec, length, streams[r]) for r in active]
    )


def measure_exit_time(
    landscape: Landscape,
    well_index: int,
    alpha: float,
    *,
    a: float,
    runs: int,
    cap: int = 10**7,
    seed: int = 0,
    epsilons: list[float] | None = None,
    etas: list[float] | None = None,
    eta: float = 0.1,
    direction: np.ndarray | None = None,
    tube_halfwidth: float | None = None,
    store_paths: int = 0,
) -> ExitTimeStudy:
    """Monte Carlo first-exit times from the radius-``a`` ball around a maximum.

    Sweep either ``epsilons`` (direct jump coefficients at fixed ``eta``) or
    ``etas`` (the coupled mode, eps = eta**((alpha-1)/alpha) per cell).  Each
    run starts exactly at the maximum and stops at the first step whose
    iterate leaves the ball, or censors at ``cap`` steps.  In 2-d the record
    also notes whether the exit point lay in the escape tube of half-width
    ``tube_halfwidth`` (default a/4) around the jump direction.
    """
    if (epsilons is None) == (etas is None):
        raise ValueError("give exactly one of epsilons or etas")
    cells = [(eta, e) for e in epsilons] if epsilons is not None else [
        (h, jump_coefficient(h, alpha)) for h in etas
    ]
    if not (1.0 <= alpha <= 2.0):
        raise ValueError(f"alpha must lie in [1, 2], got {alpha}")
    center = np.atleast_1d(landscape.maxima[well_index]).astype(float)
    if landscape.dim == 2:
        r_dir = np.array([1.0, 0.0]) if direction is None else np.asarray(direction, float)
        r_dir = r_dir / np.linalg.norm(r_dir)
        tube = a / 4.0 if tube_halfwidth is None else float(tube_halfwidth)

    study = ExitTimeStudy(landscape, well_index, alpha, a, [])
    for cell_idx, (h, eps) in enumerate(cells):
        streams = {
            r: SeededStream(seed, (cell_idx << 32) | r) for r in range(runs)
        }
        scale = eps * h ** (1.0 / alpha)
        if landscape.dim == 1:
            theta = np.full(runs, center[0])
        else:
            theta = np.tile(center, (runs, 1))
        active = np.arange(runs)
        steps_done = 0
        exit_step = np.full(runs, cap, dtype=np.int64)
        exited = np.zeros(runs, dtype=bool)
        exit_sign = np.zeros(runs, dtype=np.int64)
        in_tube = np.zeros(runs, dtype=bool)
        paths = {r: [theta[r].copy()] for r in range(min(store_paths, runs))}

        while active.size and steps_done < cap:
            length = min(_BLOCK, cap - steps_done)
            noise = _noise_block(alpha, scale, streams, active, length)
            for j in range(length):
                th = theta[active]
                if landscape.dim == 1:
                    th = th + h * landscape.grad(th) + noise[:, j]
                    th = np.clip(th, landscape.box[0], landscape.box[1])
                    dist = np.abs(th - center[0])
                else:
                    th = th + h * landscape.grad(th) + noise[:, j, None] * r_dir
                    th = np.clip(th, landscape.box[0], landscape.box[1])
                    dist = np.linalg.norm(th - center, axis=1)
                theta[active] = th
                for r in paths:
                    if r in active:
                        paths[r].append(theta[r].copy())
                out = dist >= a
                if out.any():
                    left = active[out]
                    exited[left] = True
                    exit_step[left] = steps_done + j + 1
                    if landscape.dim == 1:
                        exit_sign[left] = np.sign(theta[left] - center[0])
                    else:
                        proj = (theta[left] - center) @ r_dir
                        exit_sign[left] = np.sign(proj)
                        perp = (theta[left] - center) - proj[:, None] * r_dir
                        in_tube[left] = (np.linalg.norm(perp, axis=1) < tube) & (proj > 0)
                    active = active[~out]
                    noise = noise[~out]
                if not active.size:
                    break
            steps_done += length

        for r in range(runs):
            study.records.append(
                ExitTimeRecord(
                    alpha=alpha,
                    epsilon=eps,
                    a=a,
                    eta=h,
                    run=r,
                    exit_step=int(exit_step[r]),
                    censored=not exited[r],
                    exit_sign=int(exit_sign[r]),
                    in_tube=bool(in_tube[r]) if landscape.dim == 2 else None,
                )
            )
        for r, p in paths.items():
            study.paths[(eps, r)] = np.array(p)
    return study


def measure_transition(
    landscape: Landscape,
    alpha: float,
    *,
    a: float,
    epsilon: float,
    eta: float = 0.05,
    runs: int = 2000,
    cap: int = 10**6,
    seed: int = 0,
    start_well: int | None = None,
) -> TransitionStudy:
    """First arrival from one well's maximum into another well's radius-``a`` ball."""
    if landscape.dim != 1:
        raise ValueError("transition measurement is one-dimensional")
    m = np.asarray(landscape.maxima_1d)
    if m.size < 2:
        raise ValueError("need at least two wells")
    i = (m.size // 2) if start_well is None else start_well
    neighbor_gaps(landscape, i, a)  # validates geometry
    others = np.array([j for j in range(m.size) if j != i])
    scale = epsilon * eta ** (1.0 / alpha)

    streams = {r: SeededStream(seed, r) for r in range(runs)}
    theta = np.full(runs, m[i], dtype=float)
    active = np.arange(runs)
    arrival = np.full(runs, -1, dtype=np.int64)
    step_at = np.full(runs, cap, dtype=np.int64)
    steps_done = 0
    while active.size and steps_done < cap:
        length = min(_BLOCK, cap - steps_done)
        noise = _noise_block(alpha, scale, streams, active, length)
        for j in range(length):
            th = theta[active] + eta * landscape.grad(theta[active]) + noise[:, j]
            th = np.clip(th, landscape.box[0], landscape.box[1])
            theta[active] = th
            dists = np.abs(th[:, None] - m[others][None, :])
            hit = dists <= a
            any_hit = hit.any(axis=1)
            if any_hit.any():
                done_runs = active[any_hit]
                arrival[done_runs] = others[np.argmax(hit[any_hit], axis=1)]
                step_at[done_runs] = steps_done + j + 1
                active = active[~any_hit]
                noise = noise[~any_hit]
            if not active.size:
                break
        steps_done += length

    records = [
        TransitionRecord(
            start_well=i,
            arrival_well=int(arrival[r]),
            transition_step=int(step_at[r]),
            censored=arrival[r] < 0,
            direction_sign=0 if arrival[r] < 0 else (1 if arrival[r] > i else -1),
        )
        for r in range(runs)
    ]
    return TransitionStudy(landscape, i, alpha, a, epsilon, records)


@dataclass
class ScalingFit:
    slope: float
    stderr: float
    r2: float
    epsilons: np.ndarray
    mean_exit_time: np.ndarray  # continuous time, exit_step * eta
    n_uncensored: np.ndarray


@dataclass
class BrownianFit:
    slope: float
    intercept: float
    r2: float
    epsilons: np.ndarray
    mean_exit_time: np.ndarray


def _grouped_exit_times(records, min_uncensored, max_censored_fraction):
    groups: dict[float, list[ExitTimeRecord]] = {}
    for rec in records:
        groups.setdefault(rec.epsilon, []).append(rec)
    if len(groups) < 3:
        raise ValueError("need at least 3 epsilon values to fit")
    eps, means, ses, counts = [], [], [], []
    for e in sorted(groups):
        rows = groups[e]
        censored = sum(r.censored for r in rows) / len(rows)
        if censored > max_censored_fraction:
            raise ValueError(
                f"epsilon={e}: censored fraction {censored:.2%} exceeds "
                f"{max_censored_fraction:.0%}; raise the cap"
            )
        times = np.array([r.exit_step * r.eta for r in rows if not r.censored])
        if times.size < min_uncensored:
            raise ValueError(
                f"epsilon={e}: only {times.size} uncensored runs, need {min_uncensored}"
            )
        eps.append(e)
        means.append(times.mean())
        ses.append(times.std(ddof=1) / math.sqrt(times.size))
        counts.append(times.size)
    eps, means, ses = np.array(eps), np.array(means), np.array(ses)
    # exact synthetic data has zero spread; fall back to uniform tiny errors
    ses = np.where(ses > 0, ses, means * 1e-12)
    return eps, means, ses, np.array(counts)


def _weighted_line(x, y, w):
    wsum = w.sum()
    xbar, ybar = (w * x).sum() / wsum, (w * y).sum() / wsum
    sxx = (w * (x - xbar) ** 2).sum()
    slope = (w * (x - xbar) * (y - ybar)).sum() / sxx
    intercept = ybar - slope * xbar
    resid = y - intercept - slope * x
    dof = max(1, x.size - 2)
    stderr = math.sqrt((w * resid**2).sum() / dof / sxx)
    ss_res = ((y - intercept - slope * x) ** 2).sum()
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, stderr, r2


def fit_scaling_exponent(
    study_or_records,
    min_uncensored: int = 200,
    max_censored_fraction: float = 0.05,
) -> ScalingFit:
    """Weighted LS slope of log E[exit time] against log(1/eps); approx alpha for heavy tails."""
    records = getattr(study_or_records, "records", study_or_records)
    eps, means, ses, counts = _grouped_exit_times(
        records, min_uncensored, max_censored_fraction
    )
    x = np.log(1.0 / eps)
    y = np.log(means)
    w = (means / ses) ** 2  # delta method: se(log mean) = se/mean
    slope, _, stderr, r2 = _weighted_line(x, y, w)
    return ScalingFit(slope, stderr, r2, eps, means, counts)


def fit_brownian_law(
    study_or_records,
    min_uncensored: int = 200,
    max_censored_fraction: float = 0.05,
) -> BrownianFit:
    """Regress log E[exit time] on eps**(-2); linearity is the Gaussian signature."""
    records = getattr(study_or_records, "records", study_or_records)
    eps, means, ses, _ = _grouped_exit_times(records, min_uncensored, max_censored_fraction)
    x = eps**-2.0
    y = np.log(means)
    w = (means / ses) ** 2
    slope, intercept, _, r2 = _weighted_line(x, y, w)
    return BrownianFit(slope, intercept, r2, eps, means)
