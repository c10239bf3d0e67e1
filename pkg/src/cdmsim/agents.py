"""Discrete agent simulation of the explore/tandem/transport state machine.

Each of n scouts is in one of three states. Per synchronous tick of
length dt (shared with the mean-field integrator):

  explore    discovers site i with probability q_i*dt, evaluates it
             (accept with probability quality_i) and commits as a
             tandem recruiter on acceptance.
  tandem     spontaneously switches site (r_i*dt) or decommits
             (k_i*dt); otherwise completes a tandem run with
             probability r'_i*dt, in which the follower evaluates the
             site: a negative evaluation sends the leader back to
             explore, a positive one delivers the follower as a new
             recruiter and promotes the leader to transport with
             probability P^k/(P^k + T^k) of the current nest
             population P.
  transport  same switch/decommit events (problem detection at rate
             k_i); a successful recruitment event carries three
             nest-mates at once, realizing the 3x transport speedup.
             Transport is not absorbing: positive k_i returns carriers
             to explore, so a quorum crossing is not by itself a
             terminal commitment.

Recruits are drawn from the uncommitted pool (lowest agent index
first, sites alternating when the pool runs short); agents are
exchangeable so the selection order does not affect population-level
statistics. Committed counts, uncommitted counts and the agent total
satisfy y1 + y2 + s = n exactly at every tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cdmsim import backend, rng
from cdmsim.dynamics import ModelParams
from cdmsim.errors import ParameterError
from cdmsim.sde import IntegratorConfig, Trajectory

STATES = ("explore", "tandem", "transport")


@dataclass(frozen=True)
class Agent:
    state: str = "explore"
    site: int = 0  # 0 = uncommitted

    def __post_init__(self):
        if self.state not in STATES:
            raise ParameterError(f"unknown agent state {self.state!r}")
        if self.site not in (0, 1, 2):
            raise ParameterError(f"agent site must be 0, 1 or 2, got {self.site}")
        if self.state != "explore" and self.site == 0:
            raise ParameterError(f"{self.state} agents must be committed to a site")


class World:
    """Agent population, per-site qualities and the shared tick clock."""

    def __init__(self, params: ModelParams, qualities=(1.0, 1.0), dt: float = 0.01):
        n = int(params.n)
        if n < 1 or n != params.n:
            raise ParameterError(
                f"agent simulations need an integral colony size >= 1, got {params.n}")
        for q in qualities:
            if not (math.isfinite(q) and 0.0 <= q <= 1.0):
                raise ParameterError(f"site qualities must lie in [0, 1], got {qualities}")
        q1, q2, rp1, rp2, r1, r2, k1, k2 = params.rates()
        if (q1 + q2) * dt > 1.0:
            raise ParameterError("(q1 + q2)*dt exceeds 1; shrink dt")
        for i, (r, k, rp) in enumerate(((r1, k1, rp1), (r2, k2, rp2)), start=1):
            if (r + k + rp) * dt > 1.0:
                raise ParameterError(
                    f"(r{i} + k{i} + r'{i})*dt exceeds 1; shrink dt")
        self.params = params
        self.qualities = (float(qualities[0]), float(qualities[1]))
        self.dt = float(dt)
        self.n = n
        self.tick_count = 0
        self.states = np.zeros(n, dtype=np.int8)
        self.sites = np.zeros(n, dtype=np.int8)

    @property
    def populations(self) -> tuple[int, int]:
        return int((self.sites == 1).sum()), int((self.sites == 2).sum())

    @property
    def uncommitted(self) -> int:
        y1, y2 = self.populations
        return self.n - y1 - y2

    def agents(self) -> list[Agent]:
        return [Agent(state=STATES[self.states[i]], site=int(self.sites[i]))
                for i in range(self.n)]

    def quorum_probability(self, site: int) -> float:
        """Tandem-to-transport switch probability at the current population."""
        pop = float(self.populations[site - 1])
        t_pop = self.params.quorum_T * self.n
        pk = pop ** self.params.steepness_k
        return pk / (pk + t_pop ** self.params.steepness_k)


def agent_step(agent: Agent, world: World, generator: np.random.Generator) -> Agent:
    """Advance a single agent one tick; consumes exactly 3 uniforms.

    This is the per-agent transition in isolation: recruit delivery is a
    world-level settlement step and is not visible through the single
    returned agent (see World and the kernels for the batch update).
    """
    u_event, u_eval, u_quorum = (float(v) for v in generator.random(3))
    q1, q2, rp1, rp2, r1, r2, k1, k2 = world.params.rates()
    dt = world.dt

    if agent.state == "explore":
        if u_event < q1 * dt:
            site = 1
        elif u_event < (q1 + q2) * dt:
            site = 2
        else:
            return agent
        if u_eval < world.qualities[site - 1]:
            return Agent(state="tandem", site=site)
        return agent

    j = agent.site - 1
    r, k, rp = (r1, k1, rp1) if agent.site == 1 else (r2, k2, rp2)
    if u_event < r * dt:
        return Agent(state="tandem", site=3 - agent.site)
    if u_event < (r + k) * dt:
        return Agent(state="explore", site=0)
    if u_event < (r + k + rp) * dt:
        if agent.state == "tandem":
            if u_eval >= world.qualities[j]:
                return Agent(state="explore", site=0)
            if u_quorum < world.quorum_probability(agent.site):
                return Agent(state="transport", site=agent.site)
        return agent
    return agent


def run_colony(params: ModelParams, qualities, config: IntegratorConfig,
               replicate_index: int = 0) -> Trajectory:
    """Simulate one colony, emitting per-tick committed counts.

    Deterministic in (params, qualities, config.seed, replicate_index).
    """
    world = World(params, qualities, config.dt)  # validates rates vs dt
    bitgen = rng.bit_generator(rng.KIND_REPLICATE, config.seed, replicate_index)
    y1, y2, _, _, ticks = backend.run_agents(
        bitgen, world.n, params.rates(), world.qualities[0], world.qualities[1],
        params.quorum_T, params.steepness_k, config.dt, config.n_steps,
        True, np.empty(0), 0, False)
    t = np.arange(ticks + 1) * config.dt
    return Trajectory(t=t, y1=np.asarray(y1), y2=np.asarray(y2), params=params,
                      model="agents", gain_model=None, config=config,
                      seed=config.seed)


def decide_replicate(params: ModelParams, qualities, config: IntegratorConfig,
                     thetas, hold_steps: int, replicate_index: int):
    """Decision-ladder run of one replicate with early stopping."""
    world = World(params, qualities, config.dt)
    theta_pops = np.asarray([th * world.n for th in thetas], dtype=np.float64)
    bitgen = rng.bit_generator(rng.KIND_REPLICATE, config.seed, replicate_index)
    _, _, sites, onsets, _ = backend.run_agents(
        bitgen, world.n, params.rates(), world.qualities[0], world.qualities[1],
        params.quorum_T, params.steepness_k, config.dt, config.n_steps,
        False, theta_pops, hold_steps, True)
    return sites, onsets
