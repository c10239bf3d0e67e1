"""Pure-python simulation kernels.

Reference implementations of the two hot loops: Euler-Maruyama
integration of the mean-field models and the synchronous agent-world
tick loop. cdmsim._kernels is the compiled twin; both consume random
streams identically (8 normals per integration step, 3*n uniforms per
agent tick) and perform the same floating-point operations in the same
order, so their outputs are bit-identical. Any change here must be
mirrored in _kernels.pyx.

Both kernels optionally track quorum decisions for an ascending ladder
of thresholds while integrating: a site is decided at the first sample
index from which its population stays at or above theta*n for
hold_steps further samples. Because a qualifying run for a larger
threshold also qualifies for every smaller one, a trial may stop as
soon as the full ladder is decided without changing any outcome.
"""

import math

import numpy as np

from cdmsim.errors import IntegrationError
from cdmsim.dynamics import _gain_value

_NORMAL_CHUNK = 4096  # steps of 8 draws generated per batch


def em_step(y1, y2, n, c, rates, sigmas, g1, g2, dt, sqrt_dt, xi):
    """One Euler-Maruyama step with simplex projection.

    ``rates``, ``sigmas`` and ``xi`` are indexable in NOISE_CHANNELS
    order; ``g1``/``g2`` are the per-site recruitment gains at the
    current state. Pass ``xi`` of zeros for a plain explicit-Euler step.
    """
    q1, q2, rp1, rp2, r1, r2, k1, k2 = rates
    sq1, sq2, srp1, srp2, sr1, sr2, sk1, sk2 = sigmas
    s = n - (y1 + y2)
    drift1 = s * q1 + y1 * g1 * rp1 + y2 * r2 - y1 * r1 - y1 * k1
    drift2 = s * q2 + y2 * g2 * rp2 + y1 * r1 - y2 * r2 - y2 * k2
    noise1 = (s * c * sq1 * xi[0] + y1 * g1 * srp1 * xi[2] + y2 * sr2 * xi[5]
              - y1 * sr1 * xi[4] - y1 * sk1 * xi[6])
    noise2 = (s * c * sq2 * xi[1] + y2 * g2 * srp2 * xi[3] + y1 * sr1 * xi[4]
              - y2 * sr2 * xi[5] - y2 * sk2 * xi[7])
    y1n = y1 + drift1 * dt + noise1 * sqrt_dt
    y2n = y2 + drift2 * dt + noise2 * sqrt_dt
    # project onto the feasible simplex: clamp negatives, then rescale an
    # overfull pair; rounding can leave the rescaled sum an ulp or two
    # above n, so the larger component is shaved until the sum closes
    # exactly (site-swap symmetric, exact ties shave site 2)
    if y1n < 0.0:
        y1n = 0.0
    if y2n < 0.0:
        y2n = 0.0
    tot = y1n + y2n
    if tot > n:
        scale = n / tot
        y1n = y1n * scale
        y2n = y2n * scale
        while y1n + y2n > n:
            if y1n > y2n:
                rest = n - y2n
                y1n = rest if rest < y1n else math.nextafter(y1n, 0.0)
            else:
                rest = n - y1n
                y2n = rest if rest < y2n else math.nextafter(y2n, 0.0)
    return y1n, y2n


class _DecisionScan:
    """Per-threshold first-qualifying-run tracker over an emitted sample stream."""

    def __init__(self, theta_pops, hold_steps):
        self.levels = [float(v) for v in theta_pops]
        nt = len(self.levels)
        self.hold = int(hold_steps)
        self.sites = np.zeros(nt, dtype=np.int64)
        self.onsets = np.full(nt, -1, dtype=np.int64)
        self._rs1 = [-1] * nt
        self._rs2 = [-1] * nt
        self.undecided = nt

    def update(self, step, y1, y2):
        for ti in range(len(self.levels)):
            if self.sites[ti] != 0:
                continue
            lvl = self.levels[ti]
            if y1 >= lvl:
                if self._rs1[ti] < 0:
                    self._rs1[ti] = step
            else:
                self._rs1[ti] = -1
            if y2 >= lvl:
                if self._rs2[ti] < 0:
                    self._rs2[ti] = step
            else:
                self._rs2[ti] = -1
            done1 = self._rs1[ti] >= 0 and step - self._rs1[ti] >= self.hold
            done2 = self._rs2[ti] >= 0 and step - self._rs2[ti] >= self.hold
            if done1 and done2:
                # simultaneous completion implies equal onsets; the larger
                # population at the completing sample wins, ties go to site 1
                if y2 > y1:
                    self.sites[ti], self.onsets[ti] = 2, self._rs2[ti]
                else:
                    self.sites[ti], self.onsets[ti] = 1, self._rs1[ti]
                self.undecided -= 1
            elif done1:
                self.sites[ti], self.onsets[ti] = 1, self._rs1[ti]
                self.undecided -= 1
            elif done2:
                self.sites[ti], self.onsets[ti] = 2, self._rs2[ti]
                self.undecided -= 1


def run_mean_field(bitgen, y1_0, y2_0, n, c, rates, sigmas, gain_id,
                   gain_coeffs, quorum_t, steepness, dt, n_steps,
                   record, theta_pops, hold_steps, stop_on_decision):
    """Integrate one trial; see backend.run_mean_field for the contract."""
    rates = tuple(float(v) for v in rates)
    sigmas = tuple(float(v) for v in sigmas)
    coeffs = tuple(float(v) for v in gain_coeffs)
    stochastic = bitgen is not None
    gen = np.random.Generator(bitgen) if stochastic else None
    sqrt_dt = math.sqrt(dt)
    zeros = (0.0,) * 8

    y1 = float(y1_0)
    y2 = float(y2_0)
    out1 = out2 = None
    if record:
        out1 = np.empty(n_steps + 1)
        out2 = np.empty(n_steps + 1)
        out1[0] = y1
        out2[0] = y2

    scan = _DecisionScan(theta_pops, hold_steps)
    scan.update(0, y1, y2)

    steps_done = 0
    chunk = None
    chunk_base = 0
    for i in range(n_steps):
        if scan.undecided == 0 and stop_on_decision:
            break
        if stochastic:
            if chunk is None or i - chunk_base >= len(chunk):
                chunk_base = i
                chunk = gen.standard_normal((min(_NORMAL_CHUNK, n_steps - i), 8))
            # plain-float math end to end keeps ** on libm pow, bit-identical
            # to the compiled kernel
            xi = chunk[i - chunk_base].tolist()
        else:
            xi = zeros
        g1 = _gain_value(gain_id, y1 / n, quorum_t, steepness, coeffs)
        g2 = _gain_value(gain_id, y2 / n, quorum_t, steepness, coeffs)
        y1, y2 = em_step(y1, y2, n, c, rates, sigmas, g1, g2, dt, sqrt_dt, xi)
        if not (math.isfinite(y1) and math.isfinite(y2)):
            raise IntegrationError(
                f"non-finite state at step {i + 1}: y1={y1}, y2={y2}", step=i + 1)
        steps_done = i + 1
        if record:
            out1[steps_done] = y1
            out2[steps_done] = y2
        scan.update(steps_done, y1, y2)

    if record:
        out1 = out1[:steps_done + 1]
        out2 = out2[:steps_done + 1]
    return out1, out2, scan.sites, scan.onsets, steps_done


def _split_pool(demand1, demand2, available):
    """Round-robin allocation of a shared recruit pool, site 1 first."""
    t1 = t2 = 0
    d1, d2 = demand1, demand2
    while available > 0 and (d1 > 0 or d2 > 0):
        if d1 > 0:
            t1 += 1
            d1 -= 1
            available -= 1
        if d2 > 0 and available > 0:
            t2 += 1
            d2 -= 1
            available -= 1
    return t1, t2


def run_agents(bitgen, n_agents, rates, quality1, quality2, quorum_t,
               steepness, dt, n_ticks, record, theta_pops, hold_steps,
               stop_on_decision):
    """Run one agent-world replicate; see backend.run_agents for the contract."""
    q1, q2, rp1, rp2, r1, r2, k1, k2 = (float(v) for v in rates)
    gen = np.random.Generator(bitgen)
    n = n_agents
    t_pop = quorum_t * n
    tk = t_pop ** steepness

    th_disc1 = q1 * dt
    th_disc2 = (q1 + q2) * dt
    # committed-agent event partition: [switch | decommit | recruit | idle]
    th_sw = (r1 * dt, r2 * dt)
    th_dec = ((r1 + k1) * dt, (r2 + k2) * dt)
    th_rec = ((r1 + k1 + rp1) * dt, (r2 + k2 + rp2) * dt)
    quality = (quality1, quality2)

    states = np.zeros(n, dtype=np.int8)  # 0 explore, 1 tandem, 2 transport
    sites = np.zeros(n, dtype=np.int8)   # 0 none, 1, 2

    out1 = out2 = None
    if record:
        out1 = np.empty(n_ticks + 1)
        out2 = np.empty(n_ticks + 1)
        out1[0] = 0.0
        out2[0] = 0.0

    scan = _DecisionScan(theta_pops, hold_steps)
    scan.update(0, 0.0, 0.0)

    ticks_done = 0
    for tick in range(n_ticks):
        if scan.undecided == 0 and stop_on_decision:
            break
        u_event, u_eval, u_quorum = gen.random((3, n))

        y1c = int((sites == 1).sum())
        y2c = int((sites == 2).sum())
        pk1 = float(y1c) ** steepness
        pk2 = float(y2c) ** steepness
        p_sw = (pk1 / (pk1 + tk), pk2 / (pk2 + tk))

        new_states = states.copy()
        new_sites = sites.copy()

        explore = states == 0
        disc1 = explore & (u_event < th_disc1)
        disc2 = explore & ~disc1 & (u_event < th_disc2)
        acc1 = disc1 & (u_eval < quality1)
        acc2 = disc2 & (u_eval < quality2)
        new_states[acc1] = 1
        new_sites[acc1] = 1
        new_states[acc2] = 1
        new_sites[acc2] = 2

        demand = [0, 0]
        for site in (1, 2):
            j = site - 1
            committed = sites == site
            ev_sw = committed & (u_event < th_sw[j])
            ev_dec = committed & ~ev_sw & (u_event < th_dec[j])
            ev_rec = committed & (u_event >= th_dec[j]) & (u_event < th_rec[j])

            new_sites[ev_sw] = 3 - site  # switched recruiters restart as tandem
            new_states[ev_sw] = 1
            new_sites[ev_dec] = 0
            new_states[ev_dec] = 0

            t_rec = ev_rec & (states == 1)
            pos = t_rec & (u_eval < quality[j])
            neg = t_rec & ~pos
            new_states[neg] = 0  # failed follower evaluation: leader decommits
            new_sites[neg] = 0
            demand[j] += int(pos.sum())
            promote = pos & (u_quorum < p_sw[j])
            new_states[promote] = 2

            tr_rec = ev_rec & (states == 2)
            demand[j] += 3 * int(tr_rec.sum())  # carrying moves three per event

        pool_idx = np.flatnonzero(explore & ~acc1 & ~acc2)
        take1, take2 = _split_pool(demand[0], demand[1], pool_idx.size)
        got1 = pool_idx[:take1]
        got2 = pool_idx[take1:take1 + take2]
        new_states[got1] = 1
        new_sites[got1] = 1
        new_states[got2] = 1
        new_sites[got2] = 2

        states = new_states
        sites = new_sites
        ticks_done = tick + 1

        y1c = int((sites == 1).sum())
        y2c = int((sites == 2).sum())
        if record:
            out1[ticks_done] = float(y1c)
            out2[ticks_done] = float(y2c)
        scan.update(ticks_done, float(y1c), float(y2c))

    if record:
        out1 = out1[:ticks_done + 1]
        out2 = out2[:ticks_done + 1]
    return out1, out2, scan.sites, scan.onsets, ticks_done
