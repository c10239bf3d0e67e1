"""Stochastic integration of the mean-field models.

Euler-Maruyama with one independent standard-normal draw per noise
channel per step (scaled by sigma*sqrt(dt)), or a noise-free explicit
Euler scheme. After every step the state is projected back onto the
feasible simplex {y1 >= 0, y2 >= 0, y1 + y2 <= n}: negatives are
clamped to zero and an overfull pair is rescaled by n/(y1+y2).

Trajectories are a pure function of (params, config, seed, trial
index); see cdmsim.rng for the stream-derivation contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cdmsim import backend, rng
from cdmsim import _kernels_py
from cdmsim.dynamics import (
    GAIN_NONE, ColonyState, GainModel, ModelParams, _gain_value)
from cdmsim.errors import ParameterError

SCHEMES = ("euler_maruyama", "deterministic")
MODELS = ("baseline", "modified")

EXPORT_HEADER = "t,y1,y2,s"


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.01
    t_max: float = 1000.0
    seed: int = 0
    scheme: str = "euler_maruyama"

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if not (math.isfinite(self.t_max) and self.t_max >= self.dt):
            raise ParameterError(f"t_max must be >= dt, got {self.t_max}")
        if self.scheme not in SCHEMES:
            raise ParameterError(
                f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not 0 <= int(self.seed) == self.seed:
            raise ParameterError(
                f"seed must be a nonnegative integer, got {self.seed}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_max / self.dt + 1e-9))


@dataclass(frozen=True)
class Trajectory:
    """Sampled (t, y1, y2) path plus everything that produced it."""

    t: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    params: ModelParams
    model: str
    gain_model: GainModel | None
    config: IntegratorConfig
    seed: int

    @property
    def s(self) -> np.ndarray:
        return np.maximum(self.params.n - (self.y1 + self.y2), 0.0)

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self) -> str:
        """Fixed-decimal CSV export, one row per sample."""
        lines = [EXPORT_HEADER]
        s = self.s
        for i in range(len(self.t)):
            lines.append(
                f"{self.t[i]:.12f},{self.y1[i]:.12f},{self.y2[i]:.12f},{s[i]:.12f}")
        return "\n".join(lines) + "\n"


def _kernel_gain(model: str, gain_model: GainModel | None):
    if model == "baseline":
        return GAIN_NONE, ()
    if model == "modified":
        if gain_model is None:
            raise ParameterError("the modified model requires a gain model")
        return gain_model.kernel_args()
    raise ParameterError(f"unknown model {model!r}; expected one of {MODELS}")


def step(state: ColonyState, params: ModelParams, model: str,
         gain_model: GainModel | None, config: IntegratorConfig,
         generator: np.random.Generator) -> ColonyState:
    """Advance one integration step, consuming 8 normals under euler_maruyama.

    The deterministic scheme consumes no draws and reduces to explicit
    Euler, as does euler_maruyama with all sigmas zero.
    """
    if state.y1 + state.y2 > params.n:
        raise ParameterError(
            f"y1 + y2 = {state.y1 + state.y2} exceeds colony size n = {params.n}")
    gain_id, coeffs = _kernel_gain(model, gain_model)
    if config.scheme == "euler_maruyama":
        xi = generator.standard_normal(8).tolist()
    else:
        xi = (0.0,) * 8
    g1 = _gain_value(gain_id, state.y1 / params.n, params.quorum_T,
                     params.steepness_k, coeffs)
    g2 = _gain_value(gain_id, state.y2 / params.n, params.quorum_T,
                     params.steepness_k, coeffs)
    y1, y2 = _kernels_py.em_step(
        state.y1, state.y2, params.n, params.c, params.rates(),
        params.sigmas(), g1, g2, config.dt, math.sqrt(config.dt), xi)
    return ColonyState(y1=y1, y2=y2, t=state.t + config.dt)


def simulate(params: ModelParams, model: str, gain_model: GainModel | None,
             config: IntegratorConfig, initial=(0.0, 0.0),
             trial_index: int = 0) -> Trajectory:
    """Integrate from t=0 (all scouts uncommitted unless overridden) to t_max."""
    gain_id, coeffs = _kernel_gain(model, gain_model)
    y1_0, y2_0 = float(initial[0]), float(initial[1])
    if y1_0 < 0 or y2_0 < 0 or y1_0 + y2_0 > params.n:
        raise ParameterError(f"initial state ({y1_0}, {y2_0}) is infeasible")
    bitgen = _bitgen_for(config, trial_index)
    y1, y2, _, _, steps = backend.run_mean_field(
        bitgen, y1_0, y2_0, params.n, params.c, params.rates(),
        params.sigmas(), gain_id, np.asarray(coeffs, dtype=np.float64),
        params.quorum_T, params.steepness_k, config.dt, config.n_steps,
        True, np.empty(0), 0, False)
    t = np.arange(steps + 1) * config.dt
    return Trajectory(t=t, y1=np.asarray(y1), y2=np.asarray(y2), params=params,
                      model=model, gain_model=gain_model, config=config,
                      seed=config.seed)


def decide_trial(params: ModelParams, model: str, gain_model: GainModel | None,
                 config: IntegratorConfig, thetas, hold_steps: int,
                 trial_index: int, initial=(0.0, 0.0)):
    """Run one trial tracking the quorum-decision ladder, stopping early.

    ``thetas`` are ascending threshold fractions of n. Returns (sites,
    onset_steps) arrays aligned with the ladder; site 0 means the trial
    timed out at that threshold.
    """
    gain_id, coeffs = _kernel_gain(model, gain_model)
    theta_pops = np.asarray([th * params.n for th in thetas], dtype=np.float64)
    bitgen = _bitgen_for(config, trial_index)
    _, _, sites, onsets, _ = backend.run_mean_field(
        bitgen, float(initial[0]), float(initial[1]), params.n, params.c,
        params.rates(), params.sigmas(), gain_id,
        np.asarray(coeffs, dtype=np.float64), params.quorum_T,
        params.steepness_k, config.dt, config.n_steps, False, theta_pops,
        hold_steps, True)
    return sites, onsets


def _bitgen_for(config: IntegratorConfig, trial_index: int):
    if config.scheme != "euler_maruyama":
        return None
    return rng.bit_generator(rng.KIND_TRIAL, config.seed, trial_index)
