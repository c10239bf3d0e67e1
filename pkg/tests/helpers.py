"""Shared oracles for the test suite, independent of the code under test."""

import numpy as np

# 99% two-sided normal quantile for binomial confidence intervals
Z_99 = 2.5758293035489004


def rk4_commitment_ode(params, t_end, dt):
    """Classic RK4 on the noise-free baseline commitment equations.

    Independent of the package integrator; used as the mean-field
    reference for agent-ensemble comparisons. Returns an array of
    (y1, y2) rows sampled every dt from t=0.
    """
    q1, q2, rp1, rp2, r1, r2, k1, k2 = params.rates()
    n = params.n

    def f(y):
        y1, y2 = y
        s = n - y1 - y2
        return np.array([
            s * q1 + y1 * rp1 + y2 * r2 - y1 * r1 - y1 * k1,
            s * q2 + y2 * rp2 + y1 * r1 - y2 * r2 - y2 * k2,
        ])

    steps = int(round(t_end / dt))
    out = np.empty((steps + 1, 2))
    y = np.zeros(2)
    out[0] = y
    for i in range(steps):
        ka = f(y)
        kb = f(y + 0.5 * dt * ka)
        kc = f(y + 0.5 * dt * kb)
        kd = f(y + dt * kc)
        y = y + dt / 6.0 * (ka + 2.0 * kb + 2.0 * kc + kd)
        out[i + 1] = y
    return out


def brute_force_decision(y1, y2, level, hold_steps):
    """Quadratic-time reference for the quorum-with-hold decision rule.

    Enumerates every (site, onset) candidate and checks the full hold
    window explicitly; returns (site, onset index) or (0, -1).
    """
    m = len(y1)
    ys = (y1, y2)
    best = (0, -1)
    best_complete = None
    for j in (0, 1):
        i = 0
        while i < m:
            if ys[j][i] >= level and (i == 0 or ys[j][i - 1] < level):
                end = i + hold_steps
                if end < m and all(ys[j][t] >= level for t in range(i, end + 1)):
                    complete = end
                    if best_complete is None or complete < best_complete:
                        best = (j + 1, i)
                        best_complete = complete
                    elif complete == best_complete:
                        # same completion sample: larger population wins,
                        # exact ties go to site 1
                        cur = best[0] - 1
                        if ys[j][complete] > ys[cur][complete]:
                            best = (j + 1, i)
                    break  # only the first qualifying run per site matters
            i += 1
    return best
