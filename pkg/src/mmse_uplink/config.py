"""JSON scenario files: validation, presets and the normalized echo."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator, List, Tuple

import jsonschema

from .params import ConfigError, ConstantPower, Fractional, Policy, ScenarioParams, TwoLevel

PRESET_PREFIX = "preset:"

DEFAULTS = {
    "P_M": None,
    "P_lb": None,
    "trials": 1000,
    "seed": 0,
    "sampling_mode": "fast",
    "edf_sizes": [1000, 10000, 100000],
}


def _schema() -> dict:
    text = resources.files("mmse_uplink").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def preset_names() -> List[str]:
    root = resources.files("mmse_uplink").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def parse_policy(obj: dict) -> Policy:
    kind = obj["type"]
    args = {k: v for k, v in obj.items() if k != "type"}
    if kind == "constant":
        return ConstantPower(**args)
    if kind == "two_level":
        return TwoLevel(**args)
    if kind == "fractional":
        return Fractional(**args)
    if kind == "inversion":
        return Fractional(epsilon=1.0, **args)
    raise ConfigError(f"unknown policy type {kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario file with defaults filled in.

    ``data`` is the normalized document; writing it back out and loading it
    again gives an identical configuration.
    """

    data: dict

    @property
    def Ns(self) -> List[int]:
        N = self.data["N"]
        return list(N) if isinstance(N, list) else [N]

    @property
    def policies(self) -> List[Policy]:
        pol = self.data["policy"]
        return [parse_policy(p) for p in (pol if isinstance(pol, list) else [pol])]

    @property
    def trials(self) -> int:
        return self.data["trials"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def edf_sizes(self) -> List[int]:
        return list(self.data["edf_sizes"])

    def override(self, **kw) -> "ScenarioConfig":
        data = dict(self.data)
        data.update({k: v for k, v in kw.items() if v is not None})
        return from_dict(data, source="<override>")

    def params(self, policy: Policy, N: int) -> ScenarioParams:
        d = self.data
        common = dict(alpha=d["alpha"], rho_c=d["rho_c"], K=d["K"], policy=policy,
                      P_M=d["P_M"], P_lb=d["P_lb"], sampling_mode=d["sampling_mode"])
        try:
            if "R" in d:
                return ScenarioParams(rho_m=d["rho_m"], N=N, R=d["R"], **common)
            return ScenarioParams.from_ratio(c=d["c"], N=N, rho_m=d["rho_m"], **common)
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"policy {policy!r}, N={N}: {exc}") from None

    def params_for_size(self, policy: Policy, n: int) -> ScenarioParams:
        """Scenario with exactly ``n`` potential mobiles at the configured ratio ``c``."""
        d = self.data
        if "c" not in d:
            raise ConfigError("mobile-count sweeps need the ratio 'c' instead of 'R'")
        N = max(1, int(round(n / d["c"])))
        R = math.sqrt(n / (math.pi * d["rho_m"]))
        p = self.params(policy, self.Ns[0]).with_(N=N, R=R)
        return p

    def scenarios(self) -> Iterator[Tuple[Policy, int, ScenarioParams]]:
        for pol in self.policies:
            for N in self.Ns:
                yield pol, N, self.params(pol, N)

    def resolved(self) -> List[dict]:
        """Derived quantities of every (policy, N) pair: radius, mobile count and ratio."""
        return [{"policy": pol.describe(), "N": N, "R": p.R, "n": p.n, "c": p.c}
                for pol, N, p in self.scenarios()]


def from_dict(data: dict, source: str = "<config>") -> ScenarioConfig:
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "(top level)"
        raise ConfigError(f"{source}: field {where}: {exc.message}") from None
    full = {**DEFAULTS, **data}
    cfg = ScenarioConfig(full)
    for pol, N in ((p, N) for p in cfg.policies for N in cfg.Ns):
        cfg.params(pol, N)  # raises ConfigError on inconsistent parameters
    return cfg


def load_config(spec: str) -> ScenarioConfig:
    """Load a scenario from a path or from ``preset:NAME``."""
    if spec.startswith(PRESET_PREFIX):
        name = spec[len(PRESET_PREFIX):]
        if name not in preset_names():
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        text = resources.files("mmse_uplink").joinpath(f"presets/{name}.json").read_text()
        source = spec
    else:
        try:
            text = Path(spec).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {spec}: {exc.strerror}") from None
        source = spec
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return from_dict(data, source)
