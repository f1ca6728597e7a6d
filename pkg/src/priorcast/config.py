"""Run configuration: defaults, validation, ablation presets, JSON loading."""

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

from .data import SynthConfig
from .errors import ConfigError, FormatError


@dataclass
class RunConfig:
    """Knobs for one training/evaluation run.

    Defaults are desk-scale: small embedding, short schedules, quick on a
    laptop CPU. The ablation flags all default to the full method.
    """

    seed: int = 0
    manifest: Optional[str] = None
    synth: Optional[SynthConfig] = None
    embed_dim: int = 16
    hidden_dim: int = 64
    lr: float = 1e-2
    spl_epochs: int = 50
    rsc_epochs: int = 100
    batch_size: int = 32
    q_start: float = 0.01
    alpha: float = 0.1
    beta: float = 0.1
    mix_lambda: float = 0.9
    n_rank: int = 0  # 0 means rank the whole gallery
    # ablation switches
    skip_spl: bool = False
    drop_label: bool = False
    drop_disc: bool = False
    drop_mse: bool = False
    fixed_q: Optional[float] = None
    use_transpose: bool = False
    fa_off: bool = False
    fa_input_space: bool = False

    def validate(self) -> None:
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.synth is not None:
            self.synth.validate()
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.spl_epochs < 1:
            raise ConfigError(f"spl_epochs must be >= 1, got {self.spl_epochs}")
        if self.rsc_epochs < 1:
            raise ConfigError(f"rsc_epochs must be >= 1, got {self.rsc_epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if not 0 < self.q_start <= 1:
            raise ConfigError(f"q_start must be in (0, 1], got {self.q_start}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not 0 < self.mix_lambda <= 1:
            raise ConfigError(f"mix_lambda must be in (0, 1], got {self.mix_lambda}")
        if self.n_rank < 0:
            raise ConfigError(f"n_rank must be >= 0, got {self.n_rank}")
        if self.fixed_q is not None and not self.fixed_q > 0:
            raise ConfigError(f"fixed_q must be > 0, got {self.fixed_q}")
        if self.fa_off and self.fa_input_space:
            raise ConfigError("fa_off and fa_input_space are mutually exclusive")


# Named single-switch variants used by the ablation sweep. Each entry maps a
# preset name to the field overrides it applies on top of the base config.
ABLATION_PRESETS = {
    "no-spl": {"skip_spl": True},
    "no-label-loss": {"drop_label": True},
    "no-disc-loss": {"drop_disc": True},
    "no-mse-loss": {"drop_mse": True},
    "fixed-q-0.01": {"fixed_q": 0.01},
    "fixed-q-0.5": {"fixed_q": 0.5},
    "fixed-q-1.0": {"fixed_q": 1.0},
    "fixed-q-2.0": {"fixed_q": 2.0},
    "transpose-prior": {"use_transpose": True},
    "no-mixup": {"fa_off": True},
    "input-mixup": {"fa_input_space": True},
}


def apply_ablation(cfg: RunConfig, name: str) -> RunConfig:
    """A copy of cfg with one named ablation preset applied."""
    if name not in ABLATION_PRESETS:
        known = ", ".join(sorted(ABLATION_PRESETS))
        raise ConfigError(f"unknown ablation {name!r}; known: {known}")
    out = dataclasses.replace(cfg, **ABLATION_PRESETS[name])
    out.validate()
    return out


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw = dict(raw)
    synth_raw = raw.pop("synth", None)
    if synth_raw is not None:
        if not isinstance(synth_raw, dict):
            raise ConfigError("synth section must be a JSON object")
        synth_fields = {f.name for f in dataclasses.fields(SynthConfig)}
        unknown = set(synth_raw) - synth_fields
        if unknown:
            raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
        raw["synth"] = SynthConfig(**synth_raw)
    cfg = RunConfig(**raw)
    for f in dataclasses.fields(RunConfig):
        got = getattr(cfg, f.name)
        if f.name in ("fixed_q", "synth"):
            if f.name == "fixed_q" and got is not None and (
                    isinstance(got, bool) or not isinstance(got, (int, float))):
                raise ConfigError(f"fixed_q must be a number or null, got {got!r}")
        elif f.name == "manifest":
            if got is not None and not isinstance(got, str):
                raise ConfigError(f"manifest must be a path string, got {got!r}")
        elif f.type is bool:
            if not isinstance(got, bool):
                raise ConfigError(f"{f.name} must be a boolean, got {got!r}")
        elif f.type is int:
            if isinstance(got, bool) or not isinstance(got, int):
                raise ConfigError(f"{f.name} must be an integer, got {got!r}")
        elif f.type is float:
            if isinstance(got, bool) or not isinstance(got, (int, float)):
                raise ConfigError(f"{f.name} must be a number, got {got!r}")
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)
