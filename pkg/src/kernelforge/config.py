"""Flat key=value run configuration.

Every tunable constant that a run depends on lives here with its default,
so a single --print-config shows the whole contract. Values keep the type
of their default; unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .env.episode import Budgets
from .sim.costmodel import CostModelParams

EXECUTOR_ENV_VAR = "KERNELFORGE_EXECUTOR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    executor: str = "simulated"
    endpoint: str = ""
    mode: str = "train"
    max_turns_train: int = 150
    max_turns_eval: int = 200
    context_tokens: int = 131072
    launch_overhead_us: float = 10.0
    bytes_per_second: float = 2.0e9
    flops_per_second: float = 1.0e11
    noise_relative_sigma: float = 0.01
    cost_rng_seed: int = 0
    reward_variant: str = "robust"
    seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        if self.executor not in ("simulated", "external"):
            raise ConfigError(f"executor must be simulated or external, got {self.executor!r}")
        if self.reward_variant not in ("robust", "speedup"):
            raise ConfigError(
                f"reward_variant must be robust or speedup, got {self.reward_variant!r}"
            )
        if self.mode not in ("train", "eval"):
            raise ConfigError(f"mode must be train or eval, got {self.mode!r}")

    def budgets(self) -> Budgets:
        return Budgets(
            max_turns_train=self.max_turns_train,
            max_turns_eval=self.max_turns_eval,
            context_tokens=self.context_tokens,
        )

    def cost_params(self) -> CostModelParams:
        return CostModelParams(
            launch_overhead_us=self.launch_overhead_us,
            bytes_per_second=self.bytes_per_second,
            flops_per_second=self.flops_per_second,
            noise_relative_sigma=self.noise_relative_sigma,
            rng_seed=self.cost_rng_seed,
        )

    def resolved_endpoint(self) -> str:
        """Explicit config wins; the environment variable is the fallback."""
        return self.endpoint or os.environ.get(EXECUTOR_ENV_VAR, "")


_FIELD_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    target = _FIELD_TYPES[key]
    try:
        if target is int:
            return int(raw)
        if target is float:
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    config = base or RunConfig()
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        overrides[key] = _coerce(key, raw)
    return replace(config, **overrides)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)


def render_config(config: RunConfig) -> str:
    lines = [f"{f.name}={getattr(config, f.name)}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


def make_executor(config: RunConfig):
    # imported here so config parsing never drags sockets in
    from .sim.executor import SimulatedExecutor
    from .sim.protocol import RemoteExecutor

    if config.executor == "simulated":
        return SimulatedExecutor(config.cost_params())
    endpoint = config.resolved_endpoint()
    if not endpoint:
        raise ConfigError(
            f"external executor needs endpoint= in config or {EXECUTOR_ENV_VAR} set"
        )
    return RemoteExecutor(endpoint)
