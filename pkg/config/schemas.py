"""Typed configuration sections built from dotted key=value mappings."""
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Tuple, Type, TypeVar

from utils.errors import ConfigError

C = TypeVar("C")

DAY = 86400


class Protocol(str, Enum):
    """Validation protocol for building sample sets."""

    OUT_OF_TIME = "out_of_time"
    EDGE_SAMPLING = "edge_sampling"

    @classmethod
    def parse(cls, text: str) -> "Protocol":
        key = text.strip().lower().replace("-", "_")
        aliases = {"oot": cls.OUT_OF_TIME, "edge": cls.EDGE_SAMPLING}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"Unknown protocol: {text}") from None


class Variant(str, Enum):
    """Model zoo members."""

    RNN_LINK = "RNN_LINK"
    SEAL = "SEAL"
    SEAL_RNN = "SEAL_RNN"
    TWO_SEAL = "TWO_SEAL"
    TWO_SEAL_RNN = "TWO_SEAL_RNN"
    WL_SEAL = "WL_SEAL"
    GCN_SCORE = "GCN_SCORE"
    GCN_SCORE_LPATT = "GCN_SCORE_LPATT"

    @classmethod
    def parse(cls, text: str) -> "Variant":
        key = text.strip().upper().replace("-", "_")
        if key.startswith("2SEAL"):
            key = "TWO_SEAL" + key[len("2SEAL"):]
        aliases = {"RNN": "RNN_LINK", "GCN": "GCN_SCORE", "GCN_LPATT": "GCN_SCORE_LPATT"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"Unknown model variant: {text}") from None

    @property
    def uses_rnn_weights(self) -> bool:
        return self in (Variant.SEAL_RNN, Variant.TWO_SEAL_RNN, Variant.GCN_SCORE_LPATT)

    @property
    def is_subgraph_link_model(self) -> bool:
        return self in (
            Variant.SEAL,
            Variant.SEAL_RNN,
            Variant.TWO_SEAL,
            Variant.TWO_SEAL_RNN,
            Variant.WL_SEAL,
        )

    @property
    def binary_counterpart(self) -> "Variant":
        return {
            Variant.SEAL_RNN: Variant.SEAL,
            Variant.TWO_SEAL_RNN: Variant.TWO_SEAL,
            Variant.GCN_SCORE_LPATT: Variant.GCN_SCORE,
        }.get(self, self)


class FeatureMode(str, Enum):
    """Node features fed to SEAL-family models."""

    ET = "ET"
    ET_SL = "ET+SL"
    SL = "SL"
    MODIFIED_SL = "MODIFIED_SL"

    @classmethod
    def parse(cls, text: str) -> "FeatureMode":
        key = text.strip().upper().replace("-", "_")
        aliases = {"ET_SL": "ET+SL", "ETSL": "ET+SL", "MSL": "MODIFIED_SL"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"Unknown feature mode: {text}") from None

    @property
    def uses_embeddings(self) -> bool:
        return self in (FeatureMode.ET, FeatureMode.ET_SL)

    @property
    def uses_labels(self) -> bool:
        return self is not FeatureMode.ET

    @property
    def hide_targets(self) -> bool:
        """Original SEAL labeling hides the opposite target; modified labels do not."""
        return self is not FeatureMode.MODIFIED_SL


def _coerce(raw: str, current: Any, name: str) -> Any:
    """Convert a raw string to the type of the field's current value."""
    try:
        if isinstance(current, Enum):
            return type(current).parse(raw)
        if isinstance(current, bool):
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            parts = [p for p in raw.split(",") if p.strip()]
            elem = type(current[0]) if current else int
            return tuple(elem(p.strip()) for p in parts)
        if current is None:
            return None if raw.strip().lower() in ("", "none") else int(raw)
        return raw
    except ValueError:
        raise ConfigError(f"Invalid value for {name}: {raw!r}") from None


def _from_mapping(cls: Type[C], mapping: Mapping[str, str], prefix: str) -> C:
    instance = cls()
    known = {f.name for f in fields(cls)}
    updates: Dict[str, Any] = {}
    for key, raw in mapping.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in known:
            raise ConfigError(f"Unknown config key: {key}")
        updates[name] = _coerce(raw, getattr(instance, name), key)
    return replace(instance, **updates)


@dataclass(frozen=True)
class GenConfig:
    """Synthetic transaction-graph generator settings (``gen.*``)."""

    n: int = 50000
    communities: int = 100
    circles_per_community: int = 25
    ties_per_node: float = 6.0
    noise_ties_per_node: float = 0.2
    circle_share: float = 0.7
    community_share: float = 0.2
    intra_affinity: float = 0.6
    inter_affinity: float = 0.1
    observe_base: float = 0.25
    observe_slope: float = 0.6
    transfer_rate: float = 3.0
    future_sharpness: float = 12.0
    purchase_rate: float = 6.0
    amount_log_mean: float = 7.0
    amount_log_sd: float = 1.0
    currencies: int = 3
    signal_strength: float = 2.0
    default_rate: float = 0.1
    contagion: float = 1.0
    t0: int = 0
    t1: int = 360 * DAY
    t2: int = 450 * DAY
    seed: int = 7

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "GenConfig":
        return _from_mapping(cls, mapping, "gen")

    @classmethod
    def small(cls, seed: int = 7, n: int = 400) -> "GenConfig":
        """Desk-test preset: a few hundred nodes, same signal structure."""
        return cls(n=n, communities=4, circles_per_community=5, seed=seed)

    def validate(self) -> None:
        probabilities = {
            "intra_affinity": self.intra_affinity,
            "inter_affinity": self.inter_affinity,
            "circle_share": self.circle_share,
            "community_share": self.community_share,
            "observe_base": self.observe_base,
            "default_rate": self.default_rate,
        }
        for name, value in probabilities.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"gen.{name} must be a probability, got {value}")
        if self.circle_share + self.community_share > 1.0:
            raise ConfigError("gen.circle_share + gen.community_share must not exceed 1")
        if not 0.0 <= self.observe_base + self.observe_slope <= 1.0 or self.observe_slope < 0:
            raise ConfigError("gen.observe_base + gen.observe_slope must lie in [0, 1]")
        if not self.t0 < self.t1 < self.t2:
            raise ConfigError(f"gen windows must satisfy t0 < t1 < t2, got {self.t0}, {self.t1}, {self.t2}")
        if self.n < 2 or self.communities < 1 or self.circles_per_community < 1:
            raise ConfigError("gen.n must be >= 2 and community counts >= 1")
        if self.currencies < 1:
            raise ConfigError("gen.currencies must be >= 1")
        if self.signal_strength < 0:
            raise ConfigError("gen.signal_strength must be >= 0")
        for name in ("ties_per_node", "noise_ties_per_node", "transfer_rate", "purchase_rate", "amount_log_sd", "contagion"):
            if getattr(self, name) < 0:
                raise ConfigError(f"gen.{name} must be >= 0")


@dataclass(frozen=True)
class FeatureConfig:
    """Binning of event series into RNN steps (``feature.*``)."""

    period_steps: int = 12
    log_amounts: bool = True

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "FeatureConfig":
        return _from_mapping(cls, mapping, "feature")

    def period_for(self, window: Tuple[int, int]) -> int:
        """Bin width giving exactly ``period_steps`` steps over ``window``."""
        length = window[1] - window[0]
        return max(1, math.ceil(length / self.period_steps))

    def validate(self) -> None:
        if self.period_steps <= 0:
            raise ConfigError("feature.period_steps must be positive")


@dataclass(frozen=True)
class SplitConfig:
    """Sample-set construction (``split.*``).

    Unset timestamps are derived from the dataset span with the
    observation:target ratio 4:1.
    """

    protocol: Protocol = Protocol.OUT_OF_TIME
    t0: Optional[int] = None
    t1: Optional[int] = None
    t2: Optional[int] = None
    alpha: float = 1.0
    neg_candidate_hops: int = 2
    segment_fractions: Tuple[float, ...] = (0.6, 0.2, 0.2)
    seed: int = 7

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "SplitConfig":
        return _from_mapping(cls, mapping, "split")

    def resolved(self, time_span: Tuple[int, int]) -> "SplitConfig":
        """Fill unset timestamps from the graph's time span."""
        t_min, t_max = time_span
        t0 = t_min if self.t0 is None else self.t0
        t2 = t_max + 1 if self.t2 is None else self.t2
        t1 = t0 + (t2 - t0) * 4 // 5 if self.t1 is None else self.t1
        return replace(self, t0=t0, t1=t1, t2=t2)

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ConfigError(f"split.alpha must be positive, got {self.alpha}")
        if self.neg_candidate_hops < 1:
            raise ConfigError("split.neg_candidate_hops must be >= 1")
        if len(self.segment_fractions) != 3 or any(f <= 0 for f in self.segment_fractions):
            raise ConfigError("split.segment_fractions needs three positive values")
        if None not in (self.t0, self.t1, self.t2) and not self.t0 < self.t1 < self.t2:
            raise ConfigError(f"split windows must satisfy t0 < t1 < t2, got {self.t0}, {self.t1}, {self.t2}")


@dataclass(frozen=True)
class SubgraphConfig:
    """Enclosing-subgraph extraction and labeling (``subgraph.*``)."""

    hop: int = 1
    cap: int = 256
    l_max: int = 20

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "SubgraphConfig":
        return _from_mapping(cls, mapping, "subgraph")

    def validate(self) -> None:
        if self.hop not in (1, 2):
            raise ConfigError(f"subgraph.hop must be 1 or 2, got {self.hop}")
        if self.cap < 2:
            raise ConfigError("subgraph.cap must be >= 2")
        if self.l_max < 1:
            raise ConfigError("subgraph.l_max must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    """Layer sizes and variant selection (``model.*``)."""

    variant: Variant = Variant.TWO_SEAL_RNN
    feature_mode: FeatureMode = FeatureMode.MODIFIED_SL
    conv_dims: Tuple[int, ...] = (32, 32, 32)
    rnn_hidden: int = 64
    encoder_dims: Tuple[int, ...] = (32, 16)
    dense_hidden: int = 32
    k: int = 30
    conv1d_channels: int = 16
    conv1d_width: int = 1
    conv_activation: str = ""
    seed: int = 7

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "ModelConfig":
        return _from_mapping(cls, mapping, "model")

    @property
    def activation(self) -> str:
        """Graph-conv activation: tanh on the sort-pooling path, ReLU elsewhere."""
        if self.conv_activation:
            return self.conv_activation
        if self.variant in (Variant.SEAL, Variant.SEAL_RNN, Variant.WL_SEAL):
            return "tanh"
        return "relu"

    def validate(self) -> None:
        if not self.conv_dims or any(d <= 0 for d in self.conv_dims):
            raise ConfigError("model.conv_dims needs positive widths")
        if self.rnn_hidden <= 0 or self.dense_hidden <= 0:
            raise ConfigError("model.rnn_hidden and model.dense_hidden must be positive")
        if not self.encoder_dims or any(d <= 0 for d in self.encoder_dims):
            raise ConfigError("model.encoder_dims needs positive widths")
        if self.k < 2:
            raise ConfigError("model.k must be >= 2")
        if self.conv1d_channels <= 0 or self.conv1d_width <= 0 or self.conv1d_width > self.k:
            raise ConfigError("model.conv1d_width must lie in [1, model.k]")
        if self.conv_activation not in ("", "relu", "tanh", "identity", "sigmoid"):
            raise ConfigError(f"Unknown activation: {self.conv_activation}")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization loop settings (``train.*``)."""

    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_patience: int = 1
    patience: int = 3
    max_train_samples: int = 0

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "TrainConfig":
        return _from_mapping(cls, mapping, "train")

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("train.epochs must be >= 0")
        if self.batch_size <= 0 or self.lr <= 0:
            raise ConfigError("train.batch_size and train.lr must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("train.lr_decay must lie in (0, 1]")
        if self.patience <= 0 or self.lr_patience <= 0:
            raise ConfigError("train.patience and train.lr_patience must be positive")
        if self.max_train_samples < 0:
            raise ConfigError("train.max_train_samples must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every section of one experiment config file."""

    gen: GenConfig = field(default_factory=GenConfig)
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    subgraph: SubgraphConfig = field(default_factory=SubgraphConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "ExperimentConfig":
        sections = {"gen", "feature", "split", "subgraph", "model", "train"}
        for key in mapping:
            if key.split(".", 1)[0] not in sections:
                raise ConfigError(f"Unknown config key: {key}")
        return cls(
            gen=GenConfig.from_mapping(mapping),
            feature=FeatureConfig.from_mapping(mapping),
            split=SplitConfig.from_mapping(mapping),
            subgraph=SubgraphConfig.from_mapping(mapping),
            model=ModelConfig.from_mapping(mapping),
            train=TrainConfig.from_mapping(mapping),
        )

    @property
    def run_seed(self) -> int:
        """Seed recorded in every result row: the dataset seed."""
        return self.gen.seed

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Propagate one seed to every seeded section."""
        return replace(
            self,
            gen=replace(self.gen, seed=seed),
            split=replace(self.split, seed=seed),
            model=replace(self.model, seed=seed),
        )

    def validate(self) -> None:
        for section in (self.gen, self.feature, self.split, self.subgraph, self.model, self.train):
            section.validate()
