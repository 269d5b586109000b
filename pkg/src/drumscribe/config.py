"""``section.key = value`` configuration files.

Sections are ``dsp``, ``vit``, ``cnn``, ``rnn`` and ``train``; keys are the
fields of the corresponding config dataclasses. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import CnnConfig, RnnConfig
from .dsp import DspConfig
from .model import VitConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


SECTIONS = {
    "dsp": DspConfig,
    "vit": VitConfig,
    "cnn": CnnConfig,
    "rnn": RnnConfig,
    "train": TrainConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    vit: VitConfig = field(default_factory=VitConfig)
    cnn: CnnConfig = field(default_factory=CnnConfig)
    rnn: RnnConfig = field(default_factory=RnnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def model_config(self, arch: str):
        return getattr(self, arch)

    def to_lines(self) -> list[str]:
        """Every field as ``section.key=value``, in declaration order."""
        lines = []
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                lines.append(f"{section}.{f.name}={_format(getattr(obj, f.name))}")
        return lines

    def with_overrides(self, pairs: dict[str, str]) -> "PipelineConfig":
        grouped: dict[str, dict[str, str]] = {}
        for key, value in pairs.items():
            section, _, name = key.partition(".")
            if section not in SECTIONS or not name:
                raise ConfigError(f"unknown config key '{key}'")
            grouped.setdefault(section, {})[name] = value
        updated = {}
        for section, values in grouped.items():
            cls = SECTIONS[section]
            hints = typing.get_type_hints(cls)
            names = {f.name for f in dataclasses.fields(cls)}
            current = dataclasses.asdict(getattr(self, section))
            for name, raw in values.items():
                if name not in names:
                    raise ConfigError(f"unknown config key '{section}.{name}'")
                try:
                    current[name] = _parse(raw, hints[name])
                except ValueError as e:
                    raise ConfigError(f"bad value for {section}.{name}: {raw!r} ({e})") from None
            try:
                updated[section] = cls(**current)
            except (ValueError, NotImplementedError) as e:
                raise ConfigError(f"invalid [{section}] config: {e}") from None
        return dataclasses.replace(self, **updated)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, tp):
    raw = raw.strip()
    if tp is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if tp is int:
        return int(raw)
    if tp is float:
        if "/" in raw:
            num, den = raw.split("/", 1)
            return float(num) / float(den)
        return float(raw)
    if typing.get_origin(tp) is tuple:
        return tuple(int(x) for x in raw.split(",") if x.strip())
    return raw


def parse_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def load_config(path=None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Defaults, then the file (if any), then ``overrides``."""
    cfg = PipelineConfig()
    if path is not None:
        p = Path(path)
        cfg = cfg.with_overrides(parse_pairs(p.read_text(encoding="utf-8"), str(p)))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
