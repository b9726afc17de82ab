"""Flat ``key = value`` run configuration with the published defaults pre-filled."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .core import DEFAULT_STEPS, CosnetError
from .rewards import MODES, RewardConfig
from .trainer import TrainConfig


class ConfigError(CosnetError):
    pass


@dataclass
class RunConfig:
    # training
    K: int = 10
    episodes_per_dataset: int = 5
    max_rounds: int = 20
    eta: float = 1e-4
    l2: float = 1.0
    hidden: int = 512
    dense: int = 0
    n_agents: int = 0
    baseline: bool = False
    baseline_decay: float = 0.9
    eval_episodes: int = 10
    steps: str = ",".join(str(s) for s in DEFAULT_STEPS)
    # rewards
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    alpha4: float = 1.0
    gamma: float = 0.9
    mode: str = "US"
    # data
    f_clip: int = 16
    clip_multiplier: int = 1
    threshold: Optional[float] = None
    seed: int = 0
    threads: int = 1
    out: str = "out"
    checkpoint: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.clip_multiplier not in (1, 2, 3):
            raise ConfigError("clip_multiplier must be 1, 2 or 3")

    def step_tuple(self) -> tuple[int, ...]:
        try:
            return tuple(int(s) for s in self.steps.split(","))
        except ValueError:
            raise ConfigError(f"steps must be comma-separated integers, got {self.steps!r}") from None

    def reward_config(self) -> RewardConfig:
        return RewardConfig(self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.gamma, self.mode)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            K=self.K,
            episodes_per_dataset=self.episodes_per_dataset,
            max_rounds=self.max_rounds,
            eta=self.eta,
            l2=self.l2,
            hidden=self.hidden,
            dense=self.dense or None,
            seed=self.seed,
            n_agents=self.n_agents or None,
            baseline=self.baseline,
            baseline_decay=self.baseline_decay,
            eval_episodes=self.eval_episodes,
            threads=self.threads,
            steps=self.step_tuple(),
            reward=self.reward_config(),
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str, kind):
    text = raw.strip()
    try:
        if kind in (bool, "bool"):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
        if kind in ("Optional[float]",):
            return None if text.lower() in ("", "none") else float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind}") from None
    return text


def parse_config(text: str, source: str = "<config>", base: Optional[RunConfig] = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    kinds = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {content!r}")
        key, raw = (part.strip() for part in content.split("=", 1))
        if key == "lambda":
            key = "l2"
        if key not in kinds:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, kinds[key])
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))
