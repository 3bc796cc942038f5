"""Experiment configuration: an INI file read with configparser into frozen dataclasses.

Every section maps to one dataclass. Keys without a dataclass default are required; a missing
key raises ConfigException naming `section.key`. String values get $VAR expansion, and the
usual configparser %(name)s interpolation works within a file. `to_ini` writes the canonical
text used for the config hash, and reading it back gives an equal config.
"""

import configparser
import dataclasses
import hashlib
import io
import os
from dataclasses import dataclass

from cpsample_lab.common import ConfigException
from cpsample_lab.libdataset import DatasetSpec
from cpsample_lab.libdiffusion import linear_schedule
from cpsample_lab.libmodels import TrainConfig
from cpsample_lab.libsampler import GuidanceConfig

ENV_VAR = "CPSAMPLE_CONFIG"


@dataclass(frozen=True)
class ScheduleSection:
    T: int = 200
    beta_min: float = 1e-4
    beta_max: float = 0.02

    def build(self):
        return linear_schedule(self.T, self.beta_min, self.beta_max)


@dataclass(frozen=True)
class DenoiserSection:
    seed: int
    hidden: tuple = (128, 128, 128)
    emb_dim: int = 32
    lr: float = 2e-4
    batch_size: int = 128
    max_steps: int = 20000
    ema_rate: float = 0.9999

    def train_config(self):
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            max_steps=self.max_steps,
            ema_rate=self.ema_rate,
        )


@dataclass(frozen=True)
class ClassifierSection:
    seed: int
    label_seed: int
    hidden: tuple = (256, 256, 256)
    emb_dim: int = 32
    lr: float = 2e-4
    batch_size: int = 128
    max_steps: int = 20000
    ema_rate: float = 0.9999
    target_ce: float = 0.05
    eval_every: int = 100

    def train_config(self):
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            max_steps=self.max_steps,
            ema_rate=self.ema_rate,
            target_ce=self.target_ce,
            eval_every=self.eval_every,
        )


FEATURE_MODES = ("identity", "lifted", "classifier")


@dataclass(frozen=True)
class AuditSection:
    delta: float
    metric: str = "l2"
    threshold: float = 0.97
    feature_mode: str = "identity"
    # constant coordinate appended in feature_mode 'lifted'
    lift: float = 1.0
    # held-out rate that threshold and delta are calibrated to; 0 keeps the configured values
    calibrate: float = 0.0
    kappa: float = 0.05
    n_noise: int = 10
    n_probe: int = 200
    n_replicates: int = 1000
    subset_size: int = 10
    level: float = 0.05
    # 0 means T // 4
    mia_t: int = 0
    mia_repeats: int = 1
    mia_alphas: tuple = (0.49, 0.25, 0.001)
    max_tries: int = 100

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            modes = ", ".join(FEATURE_MODES)
            raise ValueError(f"feature_mode must be one of {modes}, got '{self.feature_mode}'")
        if self.lift <= 0:
            raise ValueError(f"lift must be positive, got {self.lift}")
        if not 0 <= self.calibrate < 1:
            raise ValueError(f"calibrate must lie in [0, 1), got {self.calibrate}")
        if self.mia_t < 0 or self.mia_repeats < 1:
            raise ValueError("mia_t must be >= 0 and mia_repeats >= 1")

    def noise_level(self, T):
        """Timestep of the membership inference errors."""
        return self.mia_t or max(T // 4, 1)


@dataclass(frozen=True)
class SweepSection:
    """Grid of CPSample settings tried by the sweep stage."""

    alphas: tuple = (0.1, 0.01, 0.001)
    scales: tuple = (1.0, 2.0, 5.0)
    n_samples: int = 256

    def __post_init__(self):
        if not self.alphas or not self.scales:
            raise ValueError("the sweep needs at least one alpha and one scale")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")

    def grid(self):
        return [(float(a), float(s)) for a in self.alphas for s in self.scales]


@dataclass(frozen=True)
class RunSection:
    out: str = "out"
    seed: int = 0
    threads: int = 1
    n_samples: int = 2000


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    schedule: ScheduleSection
    denoiser: DenoiserSection
    classifier: ClassifierSection
    guidance: GuidanceConfig
    audit: AuditSection
    sweep: SweepSection
    run: RunSection

    def replace(self, section, **changes):
        """Copy with some keys of one section changed (eg: CLI overrides)."""
        return dataclasses.replace(
            self, **{section: dataclasses.replace(getattr(self, section), **changes)}
        )

    def to_ini(self):
        return to_ini(self)

    def canonical_ini(self):
        """to_ini without the keys that never change results (thread count, output directory)."""
        return to_ini(self.replace("run", threads=1, out=""))

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical_ini().encode("utf-8")).hexdigest()


SECTIONS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
# sections that may be left out of the file entirely
OPTIONAL_SECTIONS = {"schedule", "guidance", "sweep", "run"}


def _number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _convert(kind, raw, name):
    try:
        if kind is bool:
            states = configparser.ConfigParser.BOOLEAN_STATES
            if raw.lower() not in states:
                raise ValueError(raw)
            return states[raw.lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(_number(part.strip()) for part in raw.split(",") if part.strip())
        return os.path.expandvars(raw)
    except ValueError:
        raise ConfigException(name, f"{name}: cannot read '{raw}' as {kind.__name__}") from None


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _section(parser, name, cls):
    present = parser.has_section(name)
    if not present and name not in OPTIONAL_SECTIONS:
        raise ConfigException(name, f"missing config section: [{name}]")
    values = parser[name] if present else {}
    defaults = set(parser.defaults())
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{name}.{f.name}"
        if f.type is dict:
            extra = [k for k in values if k not in defaults and k not in kwargs]
            kwargs[f.name] = {k: os.path.expandvars(values[k]) for k in extra}
        elif f.name in values:
            kwargs[f.name] = _convert(f.type, values[f.name], key)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigException(key)
    try:
        return cls(**kwargs)
    except ConfigException:
        raise
    except ValueError as e:
        raise ConfigException(name, f"[{name}]: {e}") from None


def parse_config(text):
    parser = configparser.ConfigParser()
    # keys keep their case: T is not t
    parser.optionxform = str
    try:
        parser.read_string(text)
        return ExperimentConfig(
            **{name: _section(parser, name, cls) for name, cls in SECTIONS.items()}
        )
    except (configparser.Error, KeyError) as e:
        raise ConfigException("file", f"malformed config: {e}") from None


def load_config(path):
    path = os.path.expanduser(os.path.expandvars(path))
    if not os.path.exists(path):
        raise ConfigException("--config", f"config file not found: {path}")
    with open(path) as f:
        return parse_config(f.read())


def to_ini(config):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name in SECTIONS:
        section = getattr(config, name)
        parser.add_section(name)
        for f in dataclasses.fields(section):
            value = getattr(section, f.name)
            if f.type is dict:
                for k, v in value.items():
                    parser[name][k] = str(v).replace("%", "%%")
            else:
                parser[name][f.name] = _format(value).replace("%", "%%")
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def template_path():
    return os.path.join(os.path.dirname(os.path.realpath(__file__)), "template.cfg")
