#cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the pure-python kernels.

Same entry points, same semantics, same random-stream consumption and
the same floating-point operation order as cdmsim._kernels_py; outputs
are bit-identical. Any change there must be mirrored here.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport isfinite, nextafter, pow, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal, random_standard_uniform_fill)

from cdmsim.errors import IntegrationError

cdef const char *_CAPSULE = "BitGenerator"


cdef bitgen_t *_get_bitgen(object bitgen) except NULL:
    capsule = bitgen.capsule
    if not PyCapsule_IsValid(capsule, _CAPSULE):
        raise ValueError("expected a numpy bit generator")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, _CAPSULE)


cdef inline double _polyval(const double[::1] coeffs, double u) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(coeffs.shape[0]):
        acc = acc * u + coeffs[i]
    return acc


cdef inline double _gain_value(int gain_id, double u, double quorum_t,
                               double steepness,
                               const double[::1] coeffs) noexcept nogil:
    cdef double uk, p
    if gain_id == 0:
        return 1.0
    if gain_id == 1:
        return 1.0 if u <= quorum_t else 3.0
    if gain_id == 2:
        uk = pow(u, steepness)
        return 1.0 + 2.0 * (uk / (uk + pow(quorum_t, steepness)))
    if gain_id == 3:
        return _polyval(coeffs, u)
    p = _polyval(coeffs, u)
    if p < 0.0:
        p = 0.0
    elif p > 1.0:
        p = 1.0
    return 1.0 + 2.0 * p


cdef inline Py_ssize_t _scan_update(Py_ssize_t step, double y1, double y2,
                                    const double[::1] levels, long long hold,
                                    long long[::1] rs1, long long[::1] rs2,
                                    long long[::1] sites, long long[::1] onsets,
                                    Py_ssize_t undecided) noexcept nogil:
    cdef Py_ssize_t ti
    cdef bint done1, done2
    for ti in range(levels.shape[0]):
        if sites[ti] != 0:
            continue
        if y1 >= levels[ti]:
            if rs1[ti] < 0:
                rs1[ti] = step
        else:
            rs1[ti] = -1
        if y2 >= levels[ti]:
            if rs2[ti] < 0:
                rs2[ti] = step
        else:
            rs2[ti] = -1
        done1 = rs1[ti] >= 0 and step - rs1[ti] >= hold
        done2 = rs2[ti] >= 0 and step - rs2[ti] >= hold
        if done1 and done2:
            if y2 > y1:
                sites[ti] = 2
                onsets[ti] = rs2[ti]
            else:
                sites[ti] = 1
                onsets[ti] = rs1[ti]
            undecided -= 1
        elif done1:
            sites[ti] = 1
            onsets[ti] = rs1[ti]
            undecided -= 1
        elif done2:
            sites[ti] = 2
            onsets[ti] = rs2[ti]
            undecided -= 1
    return undecided


def run_mean_field(object bitgen, double y1_0, double y2_0, double n, double c,
                   object rates, object sigmas, int gain_id, object gain_coeffs,
                   double quorum_t, double steepness, double dt,
                   long long n_steps, bint record, object theta_pops,
                   long long hold_steps, bint stop_on_decision):
    cdef double q1, q2, rp1, rp2, r1, r2, k1, k2
    cdef double sq1, sq2, srp1, srp2, sr1, sr2, sk1, sk2
    q1, q2, rp1, rp2, r1, r2, k1, k2 = rates
    sq1, sq2, srp1, srp2, sr1, sr2, sk1, sk2 = sigmas

    cdef double[::1] coeffs = np.ascontiguousarray(gain_coeffs, dtype=np.float64)
    cdef double[::1] levels = np.ascontiguousarray(theta_pops, dtype=np.float64)
    cdef Py_ssize_t nt = levels.shape[0]

    cdef bint stochastic = bitgen is not None
    cdef bitgen_t *rng = NULL
    if stochastic:
        rng = _get_bitgen(bitgen)

    out1_arr = out2_arr = None
    cdef double[::1] out1 = None, out2 = None
    if record:
        out1_arr = np.empty(n_steps + 1)
        out2_arr = np.empty(n_steps + 1)
        out1 = out1_arr
        out2 = out2_arr

    sites_arr = np.zeros(nt, dtype=np.int64)
    onsets_arr = np.full(nt, -1, dtype=np.int64)
    rs1_arr = np.full(nt, -1, dtype=np.int64)
    rs2_arr = np.full(nt, -1, dtype=np.int64)
    cdef long long[::1] sites = sites_arr
    cdef long long[::1] onsets = onsets_arr
    cdef long long[::1] rs1 = rs1_arr
    cdef long long[::1] rs2 = rs2_arr
    cdef Py_ssize_t undecided = nt

    cdef double sqrt_dt = sqrt(dt)
    cdef double y1 = y1_0, y2 = y2_0
    cdef double xi0, xi1, xi2, xi3, xi4, xi5, xi6, xi7
    cdef double g1, g2, s, drift1, drift2, noise1, noise2, y1n, y2n, tot, scale, rest
    cdef Py_ssize_t i, steps_done = 0

    if record:
        out1[0] = y1
        out2[0] = y2
    undecided = _scan_update(0, y1, y2, levels, hold_steps, rs1, rs2,
                             sites, onsets, undecided)

    xi0 = xi1 = xi2 = xi3 = xi4 = xi5 = xi6 = xi7 = 0.0
    for i in range(n_steps):
        if undecided == 0 and stop_on_decision:
            break
        if stochastic:
            xi0 = random_standard_normal(rng)
            xi1 = random_standard_normal(rng)
            xi2 = random_standard_normal(rng)
            xi3 = random_standard_normal(rng)
            xi4 = random_standard_normal(rng)
            xi5 = random_standard_normal(rng)
            xi6 = random_standard_normal(rng)
            xi7 = random_standard_normal(rng)
        g1 = _gain_value(gain_id, y1 / n, quorum_t, steepness, coeffs)
        g2 = _gain_value(gain_id, y2 / n, quorum_t, steepness, coeffs)
        s = n - (y1 + y2)
        drift1 = s * q1 + y1 * g1 * rp1 + y2 * r2 - y1 * r1 - y1 * k1
        drift2 = s * q2 + y2 * g2 * rp2 + y1 * r1 - y2 * r2 - y2 * k2
        noise1 = (s * c * sq1 * xi0 + y1 * g1 * srp1 * xi2 + y2 * sr2 * xi5
                  - y1 * sr1 * xi4 - y1 * sk1 * xi6)
        noise2 = (s * c * sq2 * xi1 + y2 * g2 * srp2 * xi3 + y1 * sr1 * xi4
                  - y2 * sr2 * xi5 - y2 * sk2 * xi7)
        y1n = y1 + drift1 * dt + noise1 * sqrt_dt
        y2n = y2 + drift2 * dt + noise2 * sqrt_dt
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
                    y1n = rest if rest < y1n else nextafter(y1n, 0.0)
                else:
                    rest = n - y1n
                    y2n = rest if rest < y2n else nextafter(y2n, 0.0)
        y1 = y1n
        y2 = y2n
        if not (isfinite(y1) and isfinite(y2)):
            raise IntegrationError(
                f"non-finite state at step {i + 1}: y1={y1}, y2={y2}", step=i + 1)
        steps_done = i + 1
        if record:
            out1[steps_done] = y1
            out2[steps_done] = y2
        undecided = _scan_update(steps_done, y1, y2, levels, hold_steps,
                                 rs1, rs2, sites, onsets, undecided)

    if record:
        out1_arr = out1_arr[:steps_done + 1]
        out2_arr = out2_arr[:steps_done + 1]
    return out1_arr, out2_arr, sites_arr, onsets_arr, steps_done


def run_agents(object bitgen, long long n_agents, object rates, double quality1,
               double quality2, double quorum_t, double steepness, double dt,
               long long n_ticks, bint record, object theta_pops,
               long long hold_steps, bint stop_on_decision):
    cdef double q1, q2, rp1, rp2, r1, r2, k1, k2
    q1, q2, rp1, rp2, r1, r2, k1, k2 = rates

    cdef double[::1] levels = np.ascontiguousarray(theta_pops, dtype=np.float64)
    cdef Py_ssize_t nt = levels.shape[0]
    cdef bitgen_t *rng = _get_bitgen(bitgen)

    cdef Py_ssize_t n = n_agents
    cdef double t_pop = quorum_t * n
    cdef double tk = pow(t_pop, steepness)

    cdef double th_disc1 = q1 * dt
    cdef double th_disc2 = (q1 + q2) * dt
    cdef double th_sw1 = r1 * dt, th_sw2 = r2 * dt
    cdef double th_dec1 = (r1 + k1) * dt, th_dec2 = (r2 + k2) * dt
    cdef double th_rec1 = (r1 + k1 + rp1) * dt, th_rec2 = (r2 + k2 + rp2) * dt

    states_arr = np.zeros(n, dtype=np.int8)
    sites_a_arr = np.zeros(n, dtype=np.int8)
    new_states_arr = np.zeros(n, dtype=np.int8)
    new_sites_arr = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] states = states_arr
    cdef signed char[::1] sites_a = sites_a_arr
    cdef signed char[::1] new_states = new_states_arr
    cdef signed char[::1] new_sites = new_sites_arr
    cdef signed char[::1] tmp

    ubuf_arr = np.empty(3 * n, dtype=np.float64)
    cdef double[::1] ubuf = ubuf_arr
    pool_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] pool = pool_arr

    out1_arr = out2_arr = None
    cdef double[::1] out1 = None, out2 = None
    if record:
        out1_arr = np.empty(n_ticks + 1)
        out2_arr = np.empty(n_ticks + 1)
        out1 = out1_arr
        out2 = out2_arr
        out1[0] = 0.0
        out2[0] = 0.0

    dsites_arr = np.zeros(nt, dtype=np.int64)
    onsets_arr = np.full(nt, -1, dtype=np.int64)
    rs1_arr = np.full(nt, -1, dtype=np.int64)
    rs2_arr = np.full(nt, -1, dtype=np.int64)
    cdef long long[::1] dsites = dsites_arr
    cdef long long[::1] onsets = onsets_arr
    cdef long long[::1] rs1 = rs1_arr
    cdef long long[::1] rs2 = rs2_arr
    cdef Py_ssize_t undecided = nt

    undecided = _scan_update(0, 0.0, 0.0, levels, hold_steps, rs1, rs2,
                             dsites, onsets, undecided)

    cdef Py_ssize_t tick, i, ticks_done = 0, pool_count, take1, take2
    cdef long long y1c = 0, y2c = 0, d1, d2, avail
    cdef double pk1, pk2, p_sw1, p_sw2, ue, ev, uq
    cdef signed char st, si

    for tick in range(n_ticks):
        if undecided == 0 and stop_on_decision:
            break
        random_standard_uniform_fill(rng, 3 * n, &ubuf[0])

        y1c = 0
        y2c = 0
        for i in range(n):
            if sites_a[i] == 1:
                y1c += 1
            elif sites_a[i] == 2:
                y2c += 1
        pk1 = pow(<double> y1c, steepness)
        pk2 = pow(<double> y2c, steepness)
        p_sw1 = pk1 / (pk1 + tk)
        p_sw2 = pk2 / (pk2 + tk)

        d1 = 0
        d2 = 0
        pool_count = 0
        for i in range(n):
            new_states[i] = states[i]
            new_sites[i] = sites_a[i]
            ue = ubuf[i]
            ev = ubuf[n + i]
            uq = ubuf[2 * n + i]
            st = states[i]
            si = sites_a[i]
            if st == 0:
                if ue < th_disc1:
                    if ev < quality1:
                        new_states[i] = 1
                        new_sites[i] = 1
                        continue
                elif ue < th_disc2:
                    if ev < quality2:
                        new_states[i] = 1
                        new_sites[i] = 2
                        continue
                pool[pool_count] = i
                pool_count += 1
            elif si == 1:
                if ue < th_sw1:
                    new_sites[i] = 2
                    new_states[i] = 1
                elif ue < th_dec1:
                    new_sites[i] = 0
                    new_states[i] = 0
                elif ue < th_rec1:
                    if st == 1:
                        if ev < quality1:
                            d1 += 1
                            if uq < p_sw1:
                                new_states[i] = 2
                        else:
                            new_states[i] = 0
                            new_sites[i] = 0
                    else:
                        d1 += 3
            else:
                if ue < th_sw2:
                    new_sites[i] = 1
                    new_states[i] = 1
                elif ue < th_dec2:
                    new_sites[i] = 0
                    new_states[i] = 0
                elif ue < th_rec2:
                    if st == 1:
                        if ev < quality2:
                            d2 += 1
                            if uq < p_sw2:
                                new_states[i] = 2
                        else:
                            new_states[i] = 0
                            new_sites[i] = 0
                    else:
                        d2 += 3

        # round-robin settlement of the shared recruit pool, site 1 first
        take1 = 0
        take2 = 0
        avail = pool_count
        while avail > 0 and (d1 > 0 or d2 > 0):
            if d1 > 0:
                take1 += 1
                d1 -= 1
                avail -= 1
            if d2 > 0 and avail > 0:
                take2 += 1
                d2 -= 1
                avail -= 1
        for i in range(take1):
            new_states[pool[i]] = 1
            new_sites[pool[i]] = 1
        for i in range(take1, take1 + take2):
            new_states[pool[i]] = 1
            new_sites[pool[i]] = 2

        tmp = states
        states = new_states
        new_states = tmp
        tmp = sites_a
        sites_a = new_sites
        new_sites = tmp
        ticks_done = tick + 1

        y1c = 0
        y2c = 0
        for i in range(n):
            if sites_a[i] == 1:
                y1c += 1
            elif sites_a[i] == 2:
                y2c += 1
        if record:
            out1[ticks_done] = <double> y1c
            out2[ticks_done] = <double> y2c
        undecided = _scan_update(ticks_done, <double> y1c, <double> y2c, levels,
                                 hold_steps, rs1, rs2, dsites, onsets, undecided)

    if record:
        out1_arr = out1_arr[:ticks_done + 1]
        out2_arr = out2_arr[:ticks_done + 1]
    return out1_arr, out2_arr, dsites_arr, onsets_arr, ticks_done
