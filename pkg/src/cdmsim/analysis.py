"""Decision detection and measurement tooling.

Covers quorum-with-hold decision detection on trajectories, the rotated
(x1, x2) = ((y1 - y2)/sqrt(2), (y1 + y2)/sqrt(2)) coordinates, Monte
Carlo drift estimation at pinned x2, the log-likelihood-ratio
sequential test, speed-accuracy threshold sweeps and least-squares
polynomial fits of the transport step function.

A "decision" is the first site whose population stays at or above
theta*n continuously for a hold duration. The hold encodes that a
quorum crossing is reversible and therefore not by itself a
termination signal: a transient crossing that recedes before the hold
elapses is not a decision. hold = 0 reduces to first crossing, and the
reported decision time is always the onset of the qualifying run.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from cdmsim import rng, sde
from cdmsim.dynamics import (
    GainModel, ModelParams, ColonyState, deriv_baseline, deriv_modified)
from cdmsim.errors import FitError, ParameterError, SweepTimeoutError
from cdmsim.sde import IntegratorConfig, Trajectory

SQRT2 = math.sqrt(2.0)

SWEEP_HEADER = "theta,mean_decision_time,error_rate,timeout_rate,trials"
DRIFT_HEADER = "x1,x2,mean_dx1,var_dx1"


# ---------------------------------------------------------------------------
# decision detection

@dataclass(frozen=True)
class DecisionOutcome:
    """Which site won, when, and whether that was the better site."""

    site: int            # 1, 2, or 0 for no decision
    time: float          # onset of the qualifying run; nan on timeout
    correct: bool | None  # None when undecided or no better site is defined
    timeout: bool

    def to_json(self) -> str:
        return json.dumps({
            "site": self.site,
            "decision_time": None if self.timeout else self.time,
            "correct": self.correct,
            "timeout": self.timeout,
        }, sort_keys=True)


def hold_to_steps(hold: float, dt: float) -> int:
    """Number of extra samples a crossing must persist to cover ``hold``."""
    if hold < 0:
        raise ParameterError(f"hold duration must be >= 0, got {hold}")
    return max(0, int(math.ceil(hold / dt - 1e-9)))


def detect_decision(trajectory: Trajectory, theta: float, hold: float,
                    correct_site: int | None = None) -> DecisionOutcome:
    """First site holding >= theta*n for ``hold`` time units, else timeout.

    A qualifying run must be fully observed: a crossing still in progress
    when the trajectory ends does not decide. When both sites qualify
    from the same sample, the larger population at the end of the hold
    wins (exact ties go to site 1).
    """
    if not 0.0 < theta <= 1.0:
        raise ParameterError(f"theta must lie in (0, 1], got {theta}")
    dt = trajectory.config.dt
    hold_steps = hold_to_steps(hold, dt)
    level = theta * trajectory.params.n

    site, onset = _scan_arrays(trajectory.y1, trajectory.y2, level, hold_steps)
    if site == 0:
        return DecisionOutcome(site=0, time=math.nan, correct=None, timeout=True)
    correct = None if correct_site is None else (site == correct_site)
    return DecisionOutcome(site=site, time=float(trajectory.t[onset]),
                           correct=correct, timeout=False)


def _scan_arrays(y1, y2, level, hold_steps):
    """(site, onset index) of the first qualifying run, or (0, -1)."""
    rs = [-1, -1]
    ys = (y1, y2)
    for i in range(len(y1)):
        for j in (0, 1):
            if ys[j][i] >= level:
                if rs[j] < 0:
                    rs[j] = i
            else:
                rs[j] = -1
        done = [rs[j] >= 0 and i - rs[j] >= hold_steps for j in (0, 1)]
        if done[0] and done[1]:
            return (2, rs[1]) if y2[i] > y1[i] else (1, rs[0])
        if done[0]:
            return 1, rs[0]
        if done[1]:
            return 2, rs[1]
    return 0, -1


# ---------------------------------------------------------------------------
# rotated coordinates

def transform_to_xy(y1, y2):
    """(x1, x2) = ((y1 - y2)/sqrt 2, (y1 + y2)/sqrt 2); an isometry."""
    return (y1 - y2) / SQRT2, (y1 + y2) / SQRT2


def inverse_transform(x1, x2):
    """Inverse of transform_to_xy."""
    return (x2 + x1) / SQRT2, (x2 - x1) / SQRT2


def deriv_transformed(x1: float, x2: float, params: ModelParams,
                      gain_model: GainModel | None, noise=None,
                      model: str = "modified"):
    """(dx1/dt, dx2/dt) via the chain rule on the population derivatives.

    Computed as dx1 = (dy1 - dy2)/sqrt2, dx2 = (dy1 + dy2)/sqrt2 from the
    selected model's right-hand side; the rotated system is never
    transcribed separately.
    """
    y1, y2 = inverse_transform(x1, x2)
    state = ColonyState(y1=y1, y2=y2)
    if model == "baseline":
        dy1, dy2 = deriv_baseline(state, params, noise)
    else:
        dy1, dy2 = deriv_modified(state, params, gain_model, noise)
    return transform_to_xy(dy1, dy2)


# ---------------------------------------------------------------------------
# drift estimation at pinned x2

@dataclass(frozen=True)
class DriftPoint:
    x1: float
    x2: float
    mean_dx1: float
    var_dx1: float
    feasible: bool


@dataclass(frozen=True)
class DriftEstimate:
    points: tuple[DriftPoint, ...]
    replicates: int
    diagnostic: float
    """(max - min) of the mean drift across feasible grid points divided by
    the pooled noise standard deviation; nan when the noise is zero."""

    @property
    def infeasible(self) -> tuple[DriftPoint, ...]:
        return tuple(p for p in self.points if not p.feasible)

    def to_csv(self) -> str:
        lines = [DRIFT_HEADER]
        for p in self.points:
            lines.append(f"{p.x1:.12g},{p.x2:.12g},{p.mean_dx1:.12g},{p.var_dx1:.12g}")
        return "\n".join(lines) + "\n"


def estimate_drift(params: ModelParams, gain_model: GainModel | None,
                   x2_pinned: float, x1_grid, replicates: int,
                   model: str = "modified", seed: int = 0) -> DriftEstimate:
    """Monte Carlo mean/variance of dx1 over channel-noise draws at fixed x2.

    Each grid point gets its own stream of ``replicates`` 8-channel draws
    (eta = sigma * xi). Grid points whose inverse transform leaves the
    feasible simplex are reported with nan statistics rather than
    silently dropped. All-zero sigmas short-circuit to one noise-free
    evaluation per point.
    """
    if replicates < 1:
        raise ParameterError(f"replicates must be >= 1, got {replicates}")
    sigmas = np.asarray(params.sigmas())
    noise_free = not sigmas.any()
    tol = 1e-9 * params.n

    points = []
    means = []
    variances = []
    for g, x1 in enumerate(x1_grid):
        y1, y2 = inverse_transform(float(x1), float(x2_pinned))
        # fold rounding dust from the inverse transform back onto the simplex
        if -tol < y1 < 0.0:
            y1 = 0.0
        if -tol < y2 < 0.0:
            y2 = 0.0
        if y1 < 0.0 or y2 < 0.0 or y1 + y2 > params.n * (1.0 + 1e-12):
            points.append(DriftPoint(float(x1), float(x2_pinned),
                                     math.nan, math.nan, False))
            continue
        if noise_free:
            dx1, _ = deriv_transformed(float(x1), float(x2_pinned), params,
                                       gain_model, None, model)
            mean, var = float(dx1), 0.0
        else:
            gen = rng.generator(rng.KIND_DRIFT, seed, g)
            draws = gen.standard_normal((replicates, 8)) * sigmas
            vals = np.empty(replicates)
            state = ColonyState(y1=y1, y2=y2)
            for i in range(replicates):
                if model == "baseline":
                    dy1, dy2 = deriv_baseline(state, params, draws[i])
                else:
                    dy1, dy2 = deriv_modified(state, params, gain_model, draws[i])
                vals[i] = (dy1 - dy2) / SQRT2
            mean, var = float(vals.mean()), float(vals.var())
        points.append(DriftPoint(float(x1), float(x2_pinned), mean, var, True))
        means.append(mean)
        variances.append(var)

    if means and not noise_free:
        pooled_std = math.sqrt(sum(variances) / len(variances))
        diagnostic = (max(means) - min(means)) / pooled_std if pooled_std > 0 else math.inf
    else:
        diagnostic = math.nan
    return DriftEstimate(points=tuple(points), replicates=replicates,
                         diagnostic=diagnostic)


# ---------------------------------------------------------------------------
# sequential probability ratio test

@dataclass(frozen=True)
class SprtState:
    """Cumulative log-likelihood-ratio sum between thresholds lower < 0 < upper."""

    upper: float
    lower: float
    s: float = 0.0
    steps: int = 0

    def __post_init__(self):
        if not (self.lower < 0.0 < self.upper):
            raise ParameterError(
                f"thresholds must satisfy lower < 0 < upper, got "
                f"({self.lower}, {self.upper})")
        if not math.isfinite(self.s):
            raise ParameterError(f"cumulative sum must be finite, got {self.s}")


def sprt_update(state: SprtState, log_likelihood_ratio: float) -> SprtState:
    return SprtState(upper=state.upper, lower=state.lower,
                     s=state.s + log_likelihood_ratio, steps=state.steps + 1)


def sprt_decide(state: SprtState) -> str:
    """'accept_h1' when s >= upper, 'accept_h2' when s <= lower, else 'continue'."""
    if state.s >= state.upper:
        return "accept_h1"
    if state.s <= state.lower:
        return "accept_h2"
    return "continue"


def bernoulli_llr(x: int, p0: float, p1: float) -> float:
    """log P(x | p0) / P(x | p1) for a single Bernoulli observation."""
    if x:
        return math.log(p0 / p1)
    return math.log((1.0 - p0) / (1.0 - p1))


def simulate_sprt_bernoulli(p_true: float, p0: float, p1: float, upper: float,
                            lower: float, sequences: int, seed: int,
                            max_steps: int = 4096, batch: int = 10000):
    """Vectorized SPRT runs on Bernoulli data under H1: p0 versus H2: p1.

    Returns (sample counts, decisions) with decision 1 for accept-H1 and
    2 for accept-H2. A sequence still undecided after ``max_steps`` raises:
    a positive-mean random walk must terminate well before any sane cap.
    """
    step_true = bernoulli_llr(1, p0, p1)
    step_false = bernoulli_llr(0, p0, p1)
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    counts = np.empty(sequences, dtype=np.int64)
    decisions = np.empty(sequences, dtype=np.int64)
    done = 0
    while done < sequences:
        m = min(batch, sequences - done)
        draws = gen.random((m, max_steps)) < p_true
        incs = np.where(draws, step_true, step_false)
        s = np.cumsum(incs, axis=1)
        hit_hi = s >= upper
        hit_lo = s <= lower
        hit = hit_hi | hit_lo
        if not hit.any(axis=1).all():
            raise RuntimeError(f"SPRT sequence exceeded {max_steps} steps")
        first = hit.argmax(axis=1)
        rows = np.arange(m)
        counts[done:done + m] = first + 1
        decisions[done:done + m] = np.where(hit_hi[rows, first], 1, 2)
        done += m
    return counts, decisions


def trajectory_llr(trajectory: Trajectory, params_h1: ModelParams,
                   params_h2: ModelParams, model: str = "baseline",
                   gain_model: GainModel | None = None) -> np.ndarray:
    """Per-step log-likelihood-ratio increments of H1 vs H2 parameters.

    Uses the Gaussian transition density implied by one Euler-Maruyama
    step: increment mean = drift*dt, covariance = sum over channels of
    sigma^2 * D D^T * dt with D the channel's diffusion loadings.
    Requires both hypotheses to give a nonsingular 2x2 covariance.
    Steps clipped by the simplex projection make this an approximation
    near the boundary.
    """
    dt = trajectory.config.dt
    y1 = trajectory.y1
    y2 = trajectory.y2
    out = np.empty(len(y1) - 1)
    for i in range(len(out)):
        lp1 = _step_logpdf(y1[i], y2[i], y1[i + 1], y2[i + 1], dt,
                           params_h1, model, gain_model)
        lp2 = _step_logpdf(y1[i], y2[i], y1[i + 1], y2[i + 1], dt,
                           params_h2, model, gain_model)
        out[i] = lp1 - lp2
    return out


def _step_logpdf(y1, y2, y1n, y2n, dt, params, model, gain_model):
    state = ColonyState(y1=float(y1), y2=float(y2))
    if model == "baseline":
        drift = deriv_baseline(state, params)
        g1 = g2 = 1.0
    else:
        from cdmsim.dynamics import gain as gain_fn
        drift = deriv_modified(state, params, gain_model)
        g1 = gain_fn(y1 / params.n, gain_model, params)
        g2 = gain_fn(y2 / params.n, gain_model, params)
    s = params.n - (y1 + y2)
    sig = params.sigmas()
    # diffusion loadings per channel, NOISE_CHANNELS order
    d1 = (s * params.c, 0.0, y1 * g1, 0.0, -y1, y2, -y1, 0.0)
    d2 = (0.0, s * params.c, 0.0, y2 * g2, y1, -y2, 0.0, -y2)
    c11 = sum((sig[ch] ** 2) * d1[ch] * d1[ch] for ch in range(8)) * dt
    c22 = sum((sig[ch] ** 2) * d2[ch] * d2[ch] for ch in range(8)) * dt
    c12 = sum((sig[ch] ** 2) * d1[ch] * d2[ch] for ch in range(8)) * dt
    det = c11 * c22 - c12 * c12
    if det <= 0.0 or c11 <= 0.0:
        raise ParameterError(
            "step covariance is singular; the llr needs noise on enough "
            "channels under both hypotheses")
    r1 = y1n - y1 - drift[0] * dt
    r2 = y2n - y2 - drift[1] * dt
    quad = (c22 * r1 * r1 - 2.0 * c12 * r1 * r2 + c11 * r2 * r2) / det
    return -math.log(2.0 * math.pi) - 0.5 * math.log(det) - 0.5 * quad


# ---------------------------------------------------------------------------
# speed-accuracy sweep

@dataclass(frozen=True)
class SpeedAccuracyPoint:
    theta: float
    mean_decision_time: float  # over decided trials; nan if none decided
    error_rate: float          # wrong / decided; nan if none decided
    timeout_rate: float
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError(f"trials must be >= 1, got {self.trials}")
        for name in ("error_rate", "timeout_rate"):
            v = getattr(self, name)
            if not math.isnan(v) and not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")

    def csv_row(self) -> str:
        return (f"{self.theta:.12g},{self.mean_decision_time:.12g},"
                f"{self.error_rate:.12g},{self.timeout_rate:.12g},{self.trials}")


def better_site(params: ModelParams, model: str, qualities=(1.0, 1.0)):
    """The site a correct decision should pick, or None for a tie.

    Mean-field models compare discovery rates; agent worlds compare
    qualities first and fall back to discovery rates.
    """
    if model == "agents" and qualities[0] != qualities[1]:
        return 1 if qualities[0] > qualities[1] else 2
    if params.q[0] != params.q[1]:
        return 1 if params.q[0] > params.q[1] else 2
    return None


def _sweep_worker(args):
    (model, params, gain_model, config, thetas, hold_steps, qualities, lo, hi) = args
    out = np.empty((hi - lo, 2, len(thetas)), dtype=np.int64)
    for i, trial in enumerate(range(lo, hi)):
        if model == "agents":
            from cdmsim.agents import decide_replicate
            sites, onsets = decide_replicate(params, qualities, config, thetas,
                                             hold_steps, trial)
        else:
            sites, onsets = sde.decide_trial(params, model, gain_model, config,
                                             thetas, hold_steps, trial)
        out[i, 0] = sites
        out[i, 1] = onsets
    return out


def speed_accuracy_sweep(params: ModelParams, model: str,
                         gain_model: GainModel | None, thetas, trials: int,
                         config: IntegratorConfig, hold: float | None = None,
                         qualities=(1.0, 1.0), correct_site: int | None = None,
                         jobs: int = 1) -> list[SpeedAccuracyPoint]:
    """Decision time / error rate / timeout rate per threshold.

    Runs ``trials`` independent simulations per the rng trial contract
    (so results are deterministic in config.seed and identical for any
    ``jobs``), detects decisions for the whole ascending theta ladder in
    one pass per trial, and aggregates. Raises SweepTimeoutError if every
    trial times out at some threshold. With tied site parameters there is
    no better site; pass ``correct_site`` to designate a reference site
    (label symmetry checks), otherwise the sweep refuses to run.
    """
    thetas = [float(t) for t in thetas]
    if any(t2 <= t1 for t1, t2 in zip(thetas, thetas[1:])):
        raise ParameterError("theta ladder must be strictly ascending")
    if any(not 0.0 < t <= 1.0 for t in thetas):
        raise ParameterError("thetas must lie in (0, 1]")
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    if correct_site is None:
        correct_site = better_site(params, model, qualities)
        if correct_site is None:
            raise ParameterError(
                "sites are indistinguishable (equal q and qualities): no "
                "correct site is defined; pass correct_site to run anyway")
    hold_steps = hold_to_steps(
        hold if hold is not None else 10.0 * config.dt, config.dt)

    args = [(model, params, gain_model, config, thetas, hold_steps, qualities,
             lo, min(lo + _SWEEP_CHUNK, trials))
            for lo in range(0, trials, _SWEEP_CHUNK)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            blocks = list(pool.map(_sweep_worker, args))
    else:
        blocks = [_sweep_worker(a) for a in args]
    results = np.concatenate(blocks, axis=0)  # (trials, 2, n_thetas)

    points = []
    for ti, theta in enumerate(thetas):
        sites = results[:, 0, ti]
        onsets = results[:, 1, ti]
        decided = sites != 0
        n_decided = int(decided.sum())
        if n_decided == 0:
            raise SweepTimeoutError(theta, trials)
        times = onsets[decided] * config.dt
        wrong = int((sites[decided] != correct_site).sum())
        points.append(SpeedAccuracyPoint(
            theta=theta,
            mean_decision_time=float(times.mean()),
            error_rate=wrong / n_decided,
            timeout_rate=(trials - n_decided) / trials,
            trials=trials,
        ))
    return points


_SWEEP_CHUNK = 50


def sweep_to_csv(points) -> str:
    lines = [SWEEP_HEADER]
    lines.extend(p.csv_row() for p in points)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# polynomial fit of the transport step

FIT_TARGETS = ("hard_step", "sigmoid")


@dataclass(frozen=True)
class FitResult:
    coefficients: tuple[float, ...]  # highest degree first
    rmse: float

    def csv_row(self) -> str:
        return ",".join(f"{c:.12g}" for c in self.coefficients)


def step_target(target, u, quorum_t: float, steepness: float):
    """Transport-probability target on [0, 1]: exact 0/1 step, sigmoid, or
    any callable u -> value for ad-hoc fits."""
    u = np.asarray(u, dtype=np.float64)
    if callable(target):
        return np.asarray([float(target(v)) for v in u])
    if target == "hard_step":
        return (u > quorum_t).astype(np.float64)
    if target == "sigmoid":
        uk = u ** steepness
        return uk / (uk + quorum_t ** steepness)
    raise ParameterError(f"unknown fit target {target!r}; expected {FIT_TARGETS}")


def fit_step_polynomial(target, degree: int, grid, quorum_t: float,
                        steepness: float = 4.0) -> FitResult:
    """Least-squares polynomial fit of the selected step target.

    Solved by QR-backed lstsq on the Vandermonde matrix; a rank-deficient
    system raises FitError rather than returning a silently ambiguous fit.
    """
    if degree < 1:
        raise ParameterError(f"degree must be >= 1, got {degree}")
    u = np.asarray(grid, dtype=np.float64)
    if u.ndim != 1 or len(u) <= degree + 1:
        raise ParameterError(
            f"grid must hold more than degree + 1 = {degree + 1} points")
    if u.min() < 0.0 or u.max() > 1.0:
        raise ParameterError("grid points must lie in [0, 1]")
    y = step_target(target, u, quorum_t, steepness)
    v = np.vander(u, degree + 1)
    coeffs, _, rank, _ = np.linalg.lstsq(v, y, rcond=None)
    if rank < degree + 1:
        raise FitError(f"design matrix rank {rank} < {degree + 1}; "
                       "fit is underdetermined")
    rmse = float(np.sqrt(np.mean((v @ coeffs - y) ** 2)))
    return FitResult(coefficients=tuple(float(x) for x in coeffs), rmse=rmse)


def default_refit_gain(params: ModelParams, degree: int = 5,
                       points: int = 101) -> GainModel:
    """Stock refit gain: degree-5 fit of the 0-to-1 step at params.quorum_T."""
    grid = np.linspace(0.0, 1.0, points)
    fit = fit_step_polynomial("hard_step", degree, grid, params.quorum_T)
    return GainModel.refit(fit.coefficients)


# ---------------------------------------------------------------------------
# small-sample trend testing

def spearman_trend(values, increasing: bool) -> tuple[float, float]:
    """Exact one-sided Spearman test of a monotone trend in index order.

    Returns (rho, p) where p is the exact permutation p-value for the
    alternative that ``values`` increase (or decrease) with their index.
    Limited to small samples; ties are handled with average ranks.
    """
    y = list(values)
    m = len(y)
    if m < 3 or m > 8:
        raise ParameterError("exact trend test supports 3..8 points")
    x = list(range(m))

    def rho(a, b):
        ra, rb = _avg_ranks(a), _avg_ranks(b)
        va = sum((r - (m - 1) / 2) ** 2 for r in ra)
        vb = sum((r - (m - 1) / 2) ** 2 for r in rb)
        if va == 0 or vb == 0:
            return 0.0
        cov = sum((ra[i] - (m - 1) / 2) * (rb[i] - (m - 1) / 2) for i in range(m))
        return cov / math.sqrt(va * vb)

    observed = rho(x, y)
    hits = 0
    total = 0
    for perm in itertools.permutations(y):
        r = rho(x, list(perm))
        if increasing and r >= observed - 1e-12:
            hits += 1
        elif not increasing and r <= observed + 1e-12:
            hits += 1
        total += 1
    return observed, hits / total


def _avg_ranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks
