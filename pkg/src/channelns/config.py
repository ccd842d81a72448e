"""Run configuration: JSON schema, validation, canonical form.

Configs are JSON objects with sections grid / solver / initial / forcing /
monitors / constants / output. Unknown keys are hard errors with a
nearest-key suggestion, out-of-range values name the offending field, and a
parsed config round-trips to a canonical dict whose SHA-256 hash is embedded
in every artifact a run writes.
"""

import difflib
import hashlib
import json
import math
from dataclasses import dataclass, field

_TAU = 2 * math.pi

DEFAULTS = {
    "grid": {"nx": 32, "ny": 32, "nz": 33, "px": _TAU, "py": _TAU, "L": 1.0},
    "solver": {
        "nu": None,  # required
        "dt": None,  # required
        "t_end": None,  # required
        "scheme": "cnab2",
        "dealias": True,
        "cfl_safety": 0.5,
        "adaptive_dt": False,
        "seed": 0,
    },
    "initial": {"family": "shear", "params": {}, "checkpoint": None},
    "forcing": {"family": "none", "params": {}, "checkpoint": None},
    "monitors": {
        "energy_budget": True,
        "decay_bounds": True,
        "k1_bound": True,
        "diff_ineqs": True,
    },
    "constants": {"mode": "unit", "values": {}, "file": None},
    "output": {"dir": "out", "every": 1, "checkpoint_every": 0},
}

_REQUIRED = {("solver", "nu"), ("solver", "dt"), ("solver", "t_end")}

# common synonyms folded into the nearest-key suggestions
_ALIASES = {
    "viscosity": "nu",
    "viscocity": "nu",
    "timestep": "dt",
    "delta_t": "dt",
    "tend": "t_end",
    "T": "t_end",
    "half_height": "L",
    "lz": "L",
    "outdir": "dir",
    "cadence": "every",
}

INITIAL_FAMILIES = ("zero", "shear", "perturbed_shear", "random")
FORCING_FAMILIES = ("none", "shear", "random", "time_periodic")
CONSTANT_MODES = ("unit", "user", "calibrated")


class ConfigError(ValueError):
    """Invalid configuration text or values (exit code 2 in the CLI)."""


def _suggest(key, candidates):
    pool = list(candidates) + [a for a in _ALIASES if _ALIASES[a] in candidates]
    close = difflib.get_close_matches(key, pool, n=1, cutoff=0.6)
    if close:
        canonical = _ALIASES.get(close[0], close[0])
        return f" (did you mean {canonical!r}?)"
    return ""


def _check_keys(section_name, given, allowed):
    for key in given:
        if key not in allowed:
            raise ConfigError(
                f"unknown key {section_name + '.' if section_name else ''}{key!r}"
                + _suggest(key, allowed)
            )


def _positive(section, key, value):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
        raise ConfigError(f"{section}.{key} must be a positive number, got {value!r}")
    return float(value)


@dataclass
class RunConfig:
    grid: dict
    solver: dict
    initial: dict
    forcing: dict
    monitors: dict
    constants: dict
    output: dict
    raw: dict = field(repr=False, default=None)

    def canonical(self):
        """Fully defaulted dict in a fixed key order; hash-stable."""
        return {
            "grid": dict(self.grid),
            "solver": dict(self.solver),
            "initial": dict(self.initial),
            "forcing": dict(self.forcing),
            "monitors": dict(self.monitors),
            "constants": dict(self.constants),
            "output": dict(self.output),
        }

    def config_hash(self):
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def parse_config(text):
    """Parse and validate a JSON config; returns a RunConfig or raises ConfigError."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys("", data, DEFAULTS.keys())

    merged = {}
    for section, defaults in DEFAULTS.items():
        given = data.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section {section!r} must be an object")
        _check_keys(section, given, defaults.keys())
        merged[section] = {**defaults, **given}

    for section, key in _REQUIRED:
        if merged[section][key] is None:
            raise ConfigError(f"missing required key {section}.{key}")

    g = merged["grid"]
    for key in ("nx", "ny", "nz"):
        if not isinstance(g[key], int) or isinstance(g[key], bool):
            raise ConfigError(f"grid.{key} must be an integer, got {g[key]!r}")
    if g["nx"] % 2 or g["ny"] % 2 or g["nx"] < 4 or g["ny"] < 4:
        raise ConfigError("grid.nx and grid.ny must be even and >= 4")
    if g["nz"] < 5:
        raise ConfigError("grid.nz must be >= 5")
    for key in ("px", "py", "L"):
        g[key] = _positive("grid", key, g[key])

    s = merged["solver"]
    for key in ("nu", "dt", "t_end", "cfl_safety"):
        s[key] = _positive("solver", key, s[key])
    if s["scheme"] != "cnab2":
        raise ConfigError(f"solver.scheme must be 'cnab2', got {s['scheme']!r}")
    if not isinstance(s["seed"], int) or isinstance(s["seed"], bool):
        raise ConfigError("solver.seed must be an integer")
    for key in ("dealias", "adaptive_dt"):
        if not isinstance(s[key], bool):
            raise ConfigError(f"solver.{key} must be a boolean")

    ic = merged["initial"]
    if ic["checkpoint"] is None and ic["family"] not in INITIAL_FAMILIES:
        raise ConfigError(
            f"initial.family must be one of {INITIAL_FAMILIES}, got {ic['family']!r}"
        )
    fc = merged["forcing"]
    if fc["checkpoint"] is None and fc["family"] not in FORCING_FAMILIES:
        raise ConfigError(
            f"forcing.family must be one of {FORCING_FAMILIES}, got {fc['family']!r}"
        )
    for sec_name, sec in (("initial", ic), ("forcing", fc)):
        if not isinstance(sec["params"], dict):
            raise ConfigError(f"{sec_name}.params must be an object")

    mon = merged["monitors"]
    for key, val in mon.items():
        if not isinstance(val, bool):
            raise ConfigError(f"monitors.{key} must be a boolean")

    cons = merged["constants"]
    if cons["mode"] not in CONSTANT_MODES:
        raise ConfigError(f"constants.mode must be one of {CONSTANT_MODES}")
    if cons["mode"] == "calibrated" and not cons["file"]:
        raise ConfigError("constants.mode 'calibrated' needs constants.file")
    if not isinstance(cons["values"], dict):
        raise ConfigError("constants.values must be an object")

    out = merged["output"]
    if not isinstance(out["every"], int) or out["every"] < 1:
        raise ConfigError("output.every must be an integer >= 1")
    if not isinstance(out["checkpoint_every"], int) or out["checkpoint_every"] < 0:
        raise ConfigError("output.checkpoint_every must be an integer >= 0")

    return RunConfig(raw=data, **merged)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
