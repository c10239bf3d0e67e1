"""Experiment configuration and result persistence.

Config files are flat ``key = value`` lines with dotted section paths
('#' comments and blank lines allowed). Every key, its default and its
constraint live in the DEFAULTS table below, which is the single source
for the parser, the CLI help text and the README table. Parsing reports
every violated constraint at once: syntax errors cite line numbers,
validation errors cite field paths.

Three defaults are derived rather than literal: decision.hold defaults
to 10*integrator.dt, drift.x2 to 0.5*n/sqrt(2) (mid-range total
commitment) and the drift grid spans +-0.95 of the pinned x2.

Results are written as CSV tables plus a flat key-value manifest
(config hash, seed, version, timestamps, file list). write_results is a
pure function of its arguments, so identical inputs produce
byte-identical files; wall-clock timestamps enter only through the
RunManifest built by the caller.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import cdmsim
from cdmsim import analysis
from cdmsim.dynamics import GAIN_VARIANTS, GainModel, ModelParams
from cdmsim.errors import ConfigError, ParameterError
from cdmsim.sde import MODELS, SCHEMES, IntegratorConfig

_FLOAT = "float"
_INT = "int"
_STR = "str"
_FLOATS = "float list"

# key -> (type, default literal or None if derived, help)
DEFAULTS = {
    "model": (_STR, "baseline", f"model selector, one of {'|'.join(MODELS)}|agents"),
    "gain": (_STR, "hard_step", f"recruitment gain variant, one of {'|'.join(GAIN_VARIANTS)}"),
    "gain.coefficients": (_FLOATS, "", "polynomial coefficients, highest degree first "
                                       "(refit_polynomial only; empty = stock fit)"),
    "seed": (_INT, "0", "master seed; every trial stream derives from it"),
    "out.dir": (_STR, "runs", "output directory"),
    "params.n": (_FLOAT, "100", "colony size (scout count)"),
    "params.q1": (_FLOAT, "0.1", "site-1 discovery rate"),
    "params.q2": (_FLOAT, "0.1", "site-2 discovery rate"),
    "params.r_prime1": (_FLOAT, "0.2", "site-1 recruitment rate"),
    "params.r_prime2": (_FLOAT, "0.2", "site-2 recruitment rate"),
    "params.r_switch1": (_FLOAT, "0.01", "site-1 spontaneous switch rate"),
    "params.r_switch2": (_FLOAT, "0.01", "site-2 spontaneous switch rate"),
    "params.k_decay1": (_FLOAT, "0.02", "site-1 decommitment rate"),
    "params.k_decay2": (_FLOAT, "0.02", "site-2 decommitment rate"),
    "params.c": (_FLOAT, "1.0", "discovery-noise scaling coefficient"),
    "params.sigma_q1": (_FLOAT, "0.0", "discovery-noise amplitude, site 1"),
    "params.sigma_q2": (_FLOAT, "0.0", "discovery-noise amplitude, site 2"),
    "params.sigma_r_prime1": (_FLOAT, "0.0", "recruitment-noise amplitude, site 1"),
    "params.sigma_r_prime2": (_FLOAT, "0.0", "recruitment-noise amplitude, site 2"),
    "params.sigma_r_switch1": (_FLOAT, "0.0", "switch-noise amplitude, site 1"),
    "params.sigma_r_switch2": (_FLOAT, "0.0", "switch-noise amplitude, site 2"),
    "params.sigma_k_decay1": (_FLOAT, "0.0", "decommitment-noise amplitude, site 1"),
    "params.sigma_k_decay2": (_FLOAT, "0.0", "decommitment-noise amplitude, site 2"),
    "params.quorum_T": (_FLOAT, "0.3", "transport quorum threshold, fraction of n in (0,1)"),
    "params.steepness_k": (_FLOAT, "4.0", "quorum response steepness, >= 1"),
    "integrator.dt": (_FLOAT, "0.01", "time step"),
    "integrator.t_max": (_FLOAT, "1000", "horizon"),
    "integrator.scheme": (_STR, "euler_maruyama", f"one of {'|'.join(SCHEMES)}"),
    "initial.y1": (_FLOAT, "0.0", "initial committed population, site 1"),
    "initial.y2": (_FLOAT, "0.0", "initial committed population, site 2"),
    "decision.theta": (_FLOAT, "0.5", "decision threshold, fraction of n in (0,1]"),
    "decision.hold": (_FLOAT, None, "hold duration a crossing must persist "
                                    "(default 10*integrator.dt)"),
    "sweep.thetas": (_FLOATS, "0.3,0.4,0.5,0.6,0.7",
                     "ascending decision thresholds in (0,1]"),
    "sweep.trials": (_INT, "1000", "trials per threshold"),
    "agents.quality1": (_FLOAT, "1.0", "site-1 quality in [0,1] (agents model)"),
    "agents.quality2": (_FLOAT, "1.0", "site-2 quality in [0,1] (agents model)"),
    "drift.x2": (_FLOAT, None, "pinned x2 value (default 0.5*n/sqrt(2))"),
    "drift.x1_lo": (_FLOAT, None, "drift grid start (default -0.95*drift.x2)"),
    "drift.x1_hi": (_FLOAT, None, "drift grid end (default +0.95*drift.x2)"),
    "drift.x1_points": (_INT, "41", "drift grid size"),
    "drift.replicates": (_INT, "1000", "noise draws per drift grid point"),
    "fit.target": (_STR, "hard_step", f"fit target, one of {'|'.join(analysis.FIT_TARGETS)}"),
    "fit.degree": (_INT, "5", "fit polynomial degree"),
    "fit.grid_points": (_INT, "101", "fit grid size on [0,1]"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    integrator: IntegratorConfig
    model: str
    gain_model: GainModel | None
    seed: int
    out_dir: str
    initial: tuple[float, float]
    decision_theta: float
    decision_hold: float
    sweep_thetas: tuple[float, ...]
    sweep_trials: int
    qualities: tuple[float, float]
    drift_x2: float
    drift_x1: tuple[float, float, int]  # lo, hi, points
    drift_replicates: int
    fit_target: str
    fit_degree: int
    fit_grid_points: int

    def as_items(self) -> list[tuple[str, str]]:
        """Every key with its resolved value, in DEFAULTS order."""
        p = self.params
        coeffs = ()
        if self.gain_model is not None and self.gain_model.variant == "refit_polynomial":
            coeffs = self.gain_model.coefficients
        vals = {
            "model": self.model,
            "gain": self.gain_model.variant if self.gain_model else "hard_step",
            "gain.coefficients": ",".join(repr(c) for c in coeffs),
            "seed": str(self.seed),
            "out.dir": self.out_dir,
            "params.n": repr(p.n),
            "params.q1": repr(p.q[0]), "params.q2": repr(p.q[1]),
            "params.r_prime1": repr(p.r_prime[0]), "params.r_prime2": repr(p.r_prime[1]),
            "params.r_switch1": repr(p.r_switch[0]), "params.r_switch2": repr(p.r_switch[1]),
            "params.k_decay1": repr(p.k_decay[0]), "params.k_decay2": repr(p.k_decay[1]),
            "params.c": repr(p.c),
            "params.sigma_q1": repr(p.sigma_q[0]), "params.sigma_q2": repr(p.sigma_q[1]),
            "params.sigma_r_prime1": repr(p.sigma_r_prime[0]),
            "params.sigma_r_prime2": repr(p.sigma_r_prime[1]),
            "params.sigma_r_switch1": repr(p.sigma_r_switch[0]),
            "params.sigma_r_switch2": repr(p.sigma_r_switch[1]),
            "params.sigma_k_decay1": repr(p.sigma_k_decay[0]),
            "params.sigma_k_decay2": repr(p.sigma_k_decay[1]),
            "params.quorum_T": repr(p.quorum_T),
            "params.steepness_k": repr(p.steepness_k),
            "integrator.dt": repr(self.integrator.dt),
            "integrator.t_max": repr(self.integrator.t_max),
            "integrator.scheme": self.integrator.scheme,
            "initial.y1": repr(self.initial[0]),
            "initial.y2": repr(self.initial[1]),
            "decision.theta": repr(self.decision_theta),
            "decision.hold": repr(self.decision_hold),
            "sweep.thetas": ",".join(repr(t) for t in self.sweep_thetas),
            "sweep.trials": str(self.sweep_trials),
            "agents.quality1": repr(self.qualities[0]),
            "agents.quality2": repr(self.qualities[1]),
            "drift.x2": repr(self.drift_x2),
            "drift.x1_lo": repr(self.drift_x1[0]),
            "drift.x1_hi": repr(self.drift_x1[1]),
            "drift.x1_points": str(self.drift_x1[2]),
            "drift.replicates": str(self.drift_replicates),
            "fit.target": self.fit_target,
            "fit.degree": str(self.fit_degree),
            "fit.grid_points": str(self.fit_grid_points),
        }
        return [(k, vals[k]) for k in DEFAULTS]

    def config_hash(self) -> str:
        """Order-independent digest of the experiment content.

        out.dir is excluded: where results land is not part of what was
        run, and reruns into different directories must hash alike.
        """
        canon = "\n".join(f"{k} = {v}" for k, v in sorted(self.as_items())
                           if k != "out.dir")
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def render_config(config: ExperimentConfig) -> str:
    """Text that parses back to an equal config."""
    return "\n".join(f"{k} = {v}" for k, v in config.as_items()) + "\n"


def _convert(key, raw, typ, errors, origin):
    try:
        if typ == _FLOAT:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if typ == _INT:
            return int(raw)
        if typ == _FLOATS:
            if raw.strip() == "":
                return ()
            return tuple(float(x) for x in raw.split(","))
        return raw.strip()
    except ValueError:
        errors.append(f"{origin}: cannot parse {key} value {raw!r} as {typ}")
        return None


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse and fully validate; raises ConfigError listing every problem."""
    errors: list[str] = []
    raw: dict[str, tuple[str, str]] = {}

    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            errors.append(f"line {ln}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in DEFAULTS:
            errors.append(f"line {ln}: unknown key {key!r}")
            continue
        raw[key] = (value, f"line {ln}")

    for i, ov in enumerate(overrides):
        if "=" not in ov:
            errors.append(f"override {i}: expected 'key=value', got {ov!r}")
            continue
        key, _, value = ov.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            errors.append(f"override {i}: unknown key {key!r}")
            continue
        raw[key] = (value.strip(), f"override {key}")

    vals: dict[str, object] = {}
    for key, (typ, default, _) in DEFAULTS.items():
        if key in raw:
            v = _convert(key, raw[key][0], typ, errors, raw[key][1])
        elif default is not None:
            v = _convert(key, default, typ, errors, "default")
        else:
            v = None  # derived below
        vals[key] = v

    if errors:
        raise ConfigError(errors)

    # derived defaults
    if vals["decision.hold"] is None:
        vals["decision.hold"] = 10.0 * vals["integrator.dt"]
    if vals["drift.x2"] is None:
        vals["drift.x2"] = 0.5 * vals["params.n"] / math.sqrt(2.0)
    if vals["drift.x1_lo"] is None:
        vals["drift.x1_lo"] = -0.95 * vals["drift.x2"]
    if vals["drift.x1_hi"] is None:
        vals["drift.x1_hi"] = 0.95 * vals["drift.x2"]

    _validate(vals, errors)
    if errors:
        raise ConfigError(errors)
    return _build(vals, errors)


def _validate(v, errors):
    def check(cond, field, message):
        if not cond:
            errors.append(f"{field}: {message}")

    check(v["model"] in (*MODELS, "agents"), "model",
          f"must be one of {MODELS + ('agents',)}, got {v['model']!r}")
    check(v["gain"] in GAIN_VARIANTS, "gain",
          f"must be one of {GAIN_VARIANTS}, got {v['gain']!r}")
    check(v["params.n"] > 0, "params.n", f"must be > 0, got {v['params.n']}")
    for key in ("params.q1", "params.q2", "params.r_prime1", "params.r_prime2",
                "params.r_switch1", "params.r_switch2", "params.k_decay1",
                "params.k_decay2", "params.c", "params.sigma_q1", "params.sigma_q2",
                "params.sigma_r_prime1", "params.sigma_r_prime2",
                "params.sigma_r_switch1", "params.sigma_r_switch2",
                "params.sigma_k_decay1", "params.sigma_k_decay2"):
        check(v[key] >= 0, key, f"must be >= 0, got {v[key]}")
    check(0.0 < v["params.quorum_T"] < 1.0, "params.quorum_T",
          f"must lie strictly inside (0, 1), got {v['params.quorum_T']}")
    check(v["params.steepness_k"] >= 1.0, "params.steepness_k",
          f"must be >= 1, got {v['params.steepness_k']}")
    check(v["integrator.dt"] > 0, "integrator.dt",
          f"must be > 0, got {v['integrator.dt']}")
    check(v["integrator.t_max"] >= v["integrator.dt"], "integrator.t_max",
          f"must be >= dt, got {v['integrator.t_max']}")
    check(v["integrator.scheme"] in SCHEMES, "integrator.scheme",
          f"must be one of {SCHEMES}, got {v['integrator.scheme']!r}")
    check(v["initial.y1"] >= 0 and v["initial.y2"] >= 0
          and v["initial.y1"] + v["initial.y2"] <= v["params.n"],
          "initial.y1", "initial populations must be feasible "
          f"(>= 0, sum <= n), got ({v['initial.y1']}, {v['initial.y2']})")
    check(0.0 < v["decision.theta"] <= 1.0, "decision.theta",
          f"must lie in (0, 1], got {v['decision.theta']}")
    check(v["decision.hold"] >= 0, "decision.hold",
          f"must be >= 0, got {v['decision.hold']}")
    thetas = v["sweep.thetas"]
    check(all(t2 > t1 for t1, t2 in zip(thetas, thetas[1:])), "sweep.thetas",
          f"must be strictly ascending, got {list(thetas)}")
    check(all(0.0 < t <= 1.0 for t in thetas), "sweep.thetas",
          f"entries must lie in (0, 1], got {list(thetas)}")
    check(v["sweep.trials"] >= 1, "sweep.trials",
          f"must be >= 1, got {v['sweep.trials']}")
    for key in ("agents.quality1", "agents.quality2"):
        check(0.0 <= v[key] <= 1.0, key, f"must lie in [0, 1], got {v[key]}")
    check(v["drift.x1_points"] >= 2, "drift.x1_points",
          f"must be >= 2, got {v['drift.x1_points']}")
    check(v["drift.x1_hi"] > v["drift.x1_lo"], "drift.x1_hi",
          "grid end must exceed grid start")
    check(v["drift.replicates"] >= 1, "drift.replicates",
          f"must be >= 1, got {v['drift.replicates']}")
    check(v["fit.target"] in analysis.FIT_TARGETS, "fit.target",
          f"must be one of {analysis.FIT_TARGETS}, got {v['fit.target']!r}")
    check(v["fit.degree"] >= 1, "fit.degree",
          f"must be >= 1, got {v['fit.degree']}")
    check(v["fit.grid_points"] > v["fit.degree"] + 1, "fit.grid_points",
          f"must exceed fit.degree + 1, got {v['fit.grid_points']}")
    if v["gain"] != "refit_polynomial" and v["gain.coefficients"]:
        errors.append("gain.coefficients: only the refit_polynomial variant "
                      "takes explicit coefficients")


def _build(v, errors) -> ExperimentConfig:
    try:
        params = ModelParams(
            n=v["params.n"],
            q=(v["params.q1"], v["params.q2"]),
            r_prime=(v["params.r_prime1"], v["params.r_prime2"]),
            r_switch=(v["params.r_switch1"], v["params.r_switch2"]),
            k_decay=(v["params.k_decay1"], v["params.k_decay2"]),
            c=v["params.c"],
            sigma_q=(v["params.sigma_q1"], v["params.sigma_q2"]),
            sigma_r_prime=(v["params.sigma_r_prime1"], v["params.sigma_r_prime2"]),
            sigma_r_switch=(v["params.sigma_r_switch1"], v["params.sigma_r_switch2"]),
            sigma_k_decay=(v["params.sigma_k_decay1"], v["params.sigma_k_decay2"]),
            quorum_T=v["params.quorum_T"],
            steepness_k=v["params.steepness_k"],
        )
        integrator = IntegratorConfig(
            dt=v["integrator.dt"], t_max=v["integrator.t_max"],
            seed=v["seed"], scheme=v["integrator.scheme"])
        if v["gain"] == "refit_polynomial":
            coeffs = v["gain.coefficients"]
            gain_model = (GainModel.refit(coeffs) if coeffs
                          else analysis.default_refit_gain(params))
        else:
            gain_model = GainModel(v["gain"])
    except ParameterError as exc:
        raise ConfigError(errors + [str(exc)]) from exc

    return ExperimentConfig(
        params=params,
        integrator=integrator,
        model=v["model"],
        gain_model=gain_model,
        seed=v["seed"],
        out_dir=v["out.dir"],
        initial=(v["initial.y1"], v["initial.y2"]),
        decision_theta=v["decision.theta"],
        decision_hold=v["decision.hold"],
        sweep_thetas=tuple(v["sweep.thetas"]),
        sweep_trials=v["sweep.trials"],
        qualities=(v["agents.quality1"], v["agents.quality2"]),
        drift_x2=v["drift.x2"],
        drift_x1=(v["drift.x1_lo"], v["drift.x1_hi"], v["drift.x1_points"]),
        drift_replicates=v["drift.replicates"],
        fit_target=v["fit.target"],
        fit_degree=v["fit.degree"],
        fit_grid_points=v["fit.grid_points"],
    )


def parse_config_file(path, overrides=()) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {p}"])
    return parse_config(p.read_text(encoding="utf-8"), overrides)


def defaults_table() -> str:
    """Human-readable defaults, one line per key (used by --help)."""
    width = max(len(k) for k in DEFAULTS)
    lines = []
    for key, (typ, default, help_text) in DEFAULTS.items():
        shown = default if default is not None else "(derived)"
        lines.append(f"  {key:<{width}}  default={shown!s:<24} {help_text}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# manifests and persistence

MANIFEST_NAME = "manifest.txt"


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    seed: int
    version: str
    started_at: str
    finished_at: str
    files: tuple[str, ...]

    def render(self) -> str:
        lines = [
            f"config_hash = {self.config_hash}",
            f"seed = {self.seed}",
            f"version = {self.version}",
            f"started_at = {self.started_at}",
            f"finished_at = {self.finished_at}",
            f"empty = {'true' if not self.files else 'false'}",
            f"files.count = {len(self.files)}",
        ]
        lines.extend(f"files.{i} = {name}" for i, name in enumerate(self.files))
        return "\n".join(lines) + "\n"


def make_manifest(config: ExperimentConfig, files, started_at: str,
                  finished_at: str) -> RunManifest:
    return RunManifest(
        config_hash=config.config_hash(),
        seed=config.seed,
        version=cdmsim.__version__,
        started_at=started_at,
        finished_at=finished_at,
        files=tuple(sorted(files)),
    )


def parse_manifest(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def write_results(manifest: RunManifest, tables: dict[str, str], out_dir) -> list[Path]:
    """Persist data tables plus the manifest; returns the written paths.

    The manifest must list exactly the table names. Re-running with the
    same arguments overwrites every file byte-identically.
    """
    if tuple(sorted(tables)) != manifest.files:
        raise ValueError(
            f"manifest lists {manifest.files} but tables are {sorted(tables)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for name in manifest.files:
        path = out / name
        _write_text(path, tables[name])
        written.append(path)
    manifest_path = out / MANIFEST_NAME
    _write_text(manifest_path, manifest.render())
    written.append(manifest_path)
    return written


def _write_text(path: Path, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
