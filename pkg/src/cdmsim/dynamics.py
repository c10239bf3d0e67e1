"""Two-site commitment dynamics for colony emigration.

Defines the right-hand sides of the two mean-field models:

  baseline   dy_i = s*(q_i + c*eta_qi) + y_i*(r'_i + eta_r'i)
                    + y_j*(r_j + eta_rj) - y_i*(r_i + eta_ri)
                    - y_i*(k_i + eta_ki),        s = n - (y1 + y2)

  modified   identical except the recruitment term y_i*(r'_i + eta_r'i)
             is multiplied by a population-dependent gain evaluated at
             the normalized commitment u = y_i / n.

The gain models the tandem-to-transport speedup: carrying nest-mates is
about three times faster than tandem running, and the switch becomes
likely once the nest population crosses the quorum. Four gain variants
are supported: an exact 1-or-3 step, a smooth sigmoid lift 1 + 2*p(u),
a fixed degree-5 polynomial multiplier (``quintic_gain``, applied
verbatim and unclamped), and a user-fitted polynomial estimate of the
transport probability (``refit_polynomial``, clamped to [0, 1] before
the 1 + 2*p lift).

All functions here are pure; they are safe to call from any number of
workers concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from cdmsim.errors import ParameterError

# Noise channel order. Every consumer of per-channel values (the deriv
# functions, the integrator kernels, the rng draw layout) uses this order.
NOISE_CHANNELS = (
    "q1", "q2",
    "r_prime1", "r_prime2",
    "r_switch1", "r_switch2",
    "k_decay1", "k_decay2",
)

GAIN_VARIANTS = ("hard_step", "sigmoid", "quintic_gain", "refit_polynomial")

# Integer ids used by the simulation kernels; 0 selects the baseline model
# (unit gain).
GAIN_NONE = 0
GAIN_IDS = {
    "hard_step": 1,
    "sigmoid": 2,
    "quintic_gain": 3,
    "refit_polynomial": 4,
}

# Reference degree-5 coefficient sets (highest degree first). The first is
# the fixed multiplier used verbatim by the quintic_gain variant; the
# second is the companion estimate of the 0-to-1 transport step with a
# different constant term. Both are kept as distinct, unreconciled sets.
QUINTIC_GAIN_COEFFS = (82.58, -205.33, 172.32, -54.03, 5.71, 0.9)
QUINTIC_STEP_COEFFS = (82.58, -205.33, 172.32, -54.03, 5.71, -0.11)


def _polyval(coeffs, u):
    # Horner evaluation, highest degree first. The evaluation order is part
    # of the cross-kernel bit-identity contract; keep in sync with the
    # compiled kernel.
    acc = 0.0
    for c in coeffs:
        acc = acc * u + c
    return acc


def _gain_value(gain_id, u, quorum_t, steepness, coeffs):
    """Unvalidated scalar gain; mirrored exactly in the compiled kernel."""
    if gain_id == GAIN_NONE:
        return 1.0
    if gain_id == 1:  # hard_step
        return 1.0 if u <= quorum_t else 3.0
    if gain_id == 2:  # sigmoid
        uk = u ** steepness
        return 1.0 + 2.0 * (uk / (uk + quorum_t ** steepness))
    if gain_id == 3:  # quintic_gain, applied as written, no clamp
        return _polyval(coeffs, u)
    # refit_polynomial: fitted transport probability, clamped to [0, 1]
    p = _polyval(coeffs, u)
    if p < 0.0:
        p = 0.0
    elif p > 1.0:
        p = 1.0
    return 1.0 + 2.0 * p


def _rhs(y1, y2, n, c, q1, q2, rp1, rp2, r1, r2, k1, k2, g1, g2,
         e0, e1, e2, e3, e4, e5, e6, e7):
    """Unvalidated scalar right-hand side with explicit channel noise."""
    s = n - (y1 + y2)
    dy1 = (s * (q1 + c * e0) + y1 * g1 * (rp1 + e2) + y2 * (r2 + e5)
           - y1 * (r1 + e4) - y1 * (k1 + e6))
    dy2 = (s * (q2 + c * e1) + y2 * g2 * (rp2 + e3) + y1 * (r1 + e4)
           - y2 * (r2 + e5) - y2 * (k2 + e7))
    return dy1, dy2


def _check_pair(name, pair):
    if len(pair) != 2:
        raise ParameterError(f"{name} must hold one value per site, got {pair!r}")
    for v in pair:
        if not (math.isfinite(v) and v >= 0.0):
            raise ParameterError(f"{name} entries must be finite and >= 0, got {pair!r}")


@dataclass(frozen=True)
class ModelParams:
    """All per-site rates, noise amplitudes, colony size and quorum shape.

    Pair-valued fields are (site 1, site 2). ``sigma_*`` are the white-noise
    amplitudes of the matching channels; ``c`` scales only the discovery
    noise, which enters as s*(q_i + c*eta_qi).
    """

    n: float = 100.0
    q: tuple[float, float] = (0.1, 0.1)
    r_prime: tuple[float, float] = (0.2, 0.2)
    r_switch: tuple[float, float] = (0.01, 0.01)
    k_decay: tuple[float, float] = (0.02, 0.02)
    c: float = 1.0
    sigma_q: tuple[float, float] = (0.0, 0.0)
    sigma_r_prime: tuple[float, float] = (0.0, 0.0)
    sigma_r_switch: tuple[float, float] = (0.0, 0.0)
    sigma_k_decay: tuple[float, float] = (0.0, 0.0)
    quorum_T: float = 0.3
    steepness_k: float = 4.0

    def __post_init__(self):
        if not (math.isfinite(self.n) and self.n > 0):
            raise ParameterError(f"n must be finite and > 0, got {self.n}")
        for name in ("q", "r_prime", "r_switch", "k_decay",
                     "sigma_q", "sigma_r_prime", "sigma_r_switch", "sigma_k_decay"):
            _check_pair(name, getattr(self, name))
        if not (math.isfinite(self.c) and self.c >= 0.0):
            raise ParameterError(f"c must be finite and >= 0, got {self.c}")
        if not 0.0 < self.quorum_T < 1.0:
            raise ParameterError(
                f"quorum_T must lie strictly inside (0, 1), got {self.quorum_T}")
        if not (math.isfinite(self.steepness_k) and self.steepness_k >= 1.0):
            raise ParameterError(f"steepness_k must be >= 1, got {self.steepness_k}")

    def rates(self) -> tuple[float, ...]:
        """The 8 rate constants in NOISE_CHANNELS order."""
        return (*self.q, *self.r_prime, *self.r_switch, *self.k_decay)

    def sigmas(self) -> tuple[float, ...]:
        """The 8 noise amplitudes in NOISE_CHANNELS order."""
        return (*self.sigma_q, *self.sigma_r_prime,
                *self.sigma_r_switch, *self.sigma_k_decay)

    def swapped(self) -> "ModelParams":
        """Parameters with site 1 and site 2 exchanged."""
        def sw(p):
            return (p[1], p[0])
        return ModelParams(
            n=self.n, q=sw(self.q), r_prime=sw(self.r_prime),
            r_switch=sw(self.r_switch), k_decay=sw(self.k_decay), c=self.c,
            sigma_q=sw(self.sigma_q), sigma_r_prime=sw(self.sigma_r_prime),
            sigma_r_switch=sw(self.sigma_r_switch), sigma_k_decay=sw(self.sigma_k_decay),
            quorum_T=self.quorum_T, steepness_k=self.steepness_k,
        )


@dataclass(frozen=True)
class ColonyState:
    """Committed populations at a moment in time; s = n - y1 - y2 is derived."""

    y1: float
    y2: float
    t: float = 0.0

    def __post_init__(self):
        for name in ("y1", "y2", "t"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")
        if self.y1 < 0.0 or self.y2 < 0.0:
            raise ParameterError(
                f"populations must be >= 0, got y1={self.y1}, y2={self.y2}")

    def uncommitted(self, n: float) -> float:
        return n - (self.y1 + self.y2)


@dataclass(frozen=True)
class GainModel:
    """Recruitment gain variant plus polynomial coefficients where needed.

    Coefficients are ordered highest degree first. ``quintic_gain`` always
    carries QUINTIC_GAIN_COEFFS; ``refit_polynomial`` requires an explicit
    coefficient set (see analysis.default_refit_gain for the stock fit);
    the step and sigmoid variants carry none.
    """

    variant: str
    coefficients: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.variant not in GAIN_VARIANTS:
            raise ParameterError(
                f"unknown gain variant {self.variant!r}; expected one of {GAIN_VARIANTS}")
        if self.variant == "quintic_gain":
            if self.coefficients is None:
                object.__setattr__(self, "coefficients", QUINTIC_GAIN_COEFFS)
            elif tuple(self.coefficients) != QUINTIC_GAIN_COEFFS:
                raise ParameterError(
                    "quintic_gain coefficients are fixed; use refit_polynomial "
                    "for custom coefficient sets")
        elif self.variant == "refit_polynomial":
            if not self.coefficients:
                raise ParameterError("refit_polynomial requires coefficients")
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
            if not all(math.isfinite(c) for c in self.coefficients):
                raise ParameterError("refit_polynomial coefficients must be finite")
        elif self.coefficients is not None:
            raise ParameterError(f"{self.variant} takes no coefficients")

    @classmethod
    def hard_step(cls) -> "GainModel":
        return cls("hard_step")

    @classmethod
    def sigmoid(cls) -> "GainModel":
        return cls("sigmoid")

    @classmethod
    def quintic(cls) -> "GainModel":
        return cls("quintic_gain")

    @classmethod
    def refit(cls, coefficients) -> "GainModel":
        return cls("refit_polynomial", tuple(coefficients))

    def kernel_args(self) -> tuple[int, tuple[float, ...]]:
        """(gain id, coefficient tuple) as consumed by the kernels."""
        return GAIN_IDS[self.variant], tuple(self.coefficients or ())


def transport_probability(P: float, T: float, k: float) -> float:
    """Probability that a recruiting scout switches to carrying, P^k/(P^k + T^k).

    Strictly increasing in the nest population P, equal to 0.5 at P = T;
    k >= 1 sets how step-like the response is.
    """
    if not (math.isfinite(P) and P >= 0.0):
        raise ParameterError(f"nest population must be finite and >= 0, got {P}")
    if not (math.isfinite(T) and T > 0.0):
        raise ParameterError(f"half-maximum population must be > 0, got {T}")
    if not (math.isfinite(k) and k >= 1.0):
        raise ParameterError(f"steepness must be >= 1, got {k}")
    pk = P ** k
    return pk / (pk + T ** k)


def gain(u: float, model: GainModel, params: ModelParams) -> float:
    """Recruitment gain multiplier at normalized commitment u = y_i / n."""
    if not (math.isfinite(u) and 0.0 <= u <= 1.0):
        raise ParameterError(f"normalized population must lie in [0, 1], got {u}")
    gain_id, coeffs = model.kernel_args()
    return _gain_value(gain_id, u, params.quorum_T, params.steepness_k, coeffs)


def _validated_noise(noise):
    if noise is None:
        return (0.0,) * 8
    vals = tuple(float(v) for v in noise)
    if len(vals) != len(NOISE_CHANNELS):
        raise ParameterError(
            f"noise must hold {len(NOISE_CHANNELS)} channel values, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ParameterError("noise values must be finite")
    return vals


def _validated_state(state: ColonyState, params: ModelParams):
    if state.y1 + state.y2 > params.n:
        raise ParameterError(
            f"y1 + y2 = {state.y1 + state.y2} exceeds colony size n = {params.n}")


def deriv_baseline(state: ColonyState, params: ModelParams, noise=None):
    """(dy1/dt, dy2/dt) for the baseline model at the given state.

    ``noise`` holds the 8 channel values eta in NOISE_CHANNELS order
    (defaults to zero). The discovery channels are additionally scaled by
    params.c inside the formula.
    """
    _validated_state(state, params)
    e = _validated_noise(noise)
    return _rhs(state.y1, state.y2, params.n, params.c, *params.rates(),
                1.0, 1.0, *e)


def deriv_modified(state: ColonyState, params: ModelParams,
                   gain_model: GainModel, noise=None):
    """(dy1/dt, dy2/dt) for the size-aware model.

    Identical to the baseline except each recruitment term
    y_i*(r'_i + eta) is multiplied by gain(y_i / n).
    """
    _validated_state(state, params)
    e = _validated_noise(noise)
    gain_id, coeffs = gain_model.kernel_args()
    g1 = _gain_value(gain_id, state.y1 / params.n, params.quorum_T,
                     params.steepness_k, coeffs)
    g2 = _gain_value(gain_id, state.y2 / params.n, params.quorum_T,
                     params.steepness_k, coeffs)
    return _rhs(state.y1, state.y2, params.n, params.c, *params.rates(),
                g1, g2, *e)
