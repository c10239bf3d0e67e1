"""Kernel backend selection.

Imports the compiled kernels when the extension was built, otherwise
falls back to the pure-python twins. Both expose the same two entry
points with identical semantics and bit-identical output:

run_mean_field(bitgen, y1_0, y2_0, n, c, rates, sigmas, gain_id,
               gain_coeffs, quorum_t, steepness, dt, n_steps, record,
               theta_pops, hold_steps, stop_on_decision)
    -> (y1 | None, y2 | None, sites, onsets, steps_done)

    bitgen is a numpy PCG64 (or None for a noise-free explicit-Euler
    run). rates/sigmas are 8-vectors in dynamics.NOISE_CHANNELS order;
    gain_id 0 selects the baseline model. theta_pops is an ascending
    ladder of decision levels in population units (may be empty); sites
    holds 0 (undecided), 1 or 2 per ladder entry and onsets the first
    sample index of the qualifying run. With record=False the y arrays
    are None.

run_agents(bitgen, n_agents, rates, quality1, quality2, quorum_t,
           steepness, dt, n_ticks, record, theta_pops, hold_steps,
           stop_on_decision)
    -> (y1 | None, y2 | None, sites, onsets, ticks_done)

    Same decision contract over per-tick committed counts.
"""

try:
    from cdmsim import _kernels as _impl
    HAVE_COMPILED = True
except ImportError:  # extension not built; use the reference kernels
    from cdmsim import _kernels_py as _impl
    HAVE_COMPILED = False

run_mean_field = _impl.run_mean_field
run_agents = _impl.run_agents


def backend_name() -> str:
    return "compiled" if HAVE_COMPILED else "python"
