# -*- coding: utf-8 -*-
#
# AVCap run configuration.
#
# A run is described by a single JSON document with an explicit schema version. Every section
# maps on a dataclass below; from_dict() validates and to_dict() serialises so that
# parse -> serialise -> parse is idempotent.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import dataclasses
import logging
import os
import typing

from avcap import constants
from avcap.constants import ConfigError, Modality, PoolMode, EncoderPolicy, DecoderPolicy
from avcap.utils import io

logger = logging.getLogger(__name__)


# -------------------------------------------------------------------------------------------------
# Value readers. All raise ConfigError naming the offending key.
# -------------------------------------------------------------------------------------------------
def _check_keys(section: str, data: dict, allowed: typing.Iterable[str]):
    if not isinstance(data, dict):
        raise ConfigError('Section "{}" must be a JSON object'.format(section))
    unknown = sorted(set(data.keys()) - set(allowed))
    if unknown:
        raise ConfigError('Unknown key(s) in "{}": {}'.format(section, ', '.join(unknown)))


def getSettingAsInt(data: dict, key: str, default: int, minimum: int = None) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError('Setting "{}" must be an integer, got {!r}'.format(key, value))
    if minimum is not None and value < minimum:
        raise ConfigError('Setting "{}" must be >= {}, got {}'.format(key, minimum, value))
    return value


def getSettingAsFloat(data: dict, key: str, default: float) -> float:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError('Setting "{}" must be a number, got {!r}'.format(key, value))
    return float(value)


def getSettingAsOptionalFloat(data: dict, key: str, default: typing.Optional[float]) -> typing.Optional[float]:
    if data.get(key, default) is None:
        return None
    return getSettingAsFloat(data, key, default)


def getSettingAsBool(data: dict, key: str, default: bool) -> bool:
    value = data.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError('Setting "{}" must be true or false, got {!r}'.format(key, value))
    return value


def getSettingAsStr(data: dict, key: str, default: typing.Optional[str]) -> typing.Optional[str]:
    value = data.get(key, default)
    if value is not None and not isinstance(value, str):
        raise ConfigError('Setting "{}" must be a string, got {!r}'.format(key, value))
    return value


def getSettingAsEnum(data: dict, key: str, enum_type, default):
    value = data.get(key, default.value)
    try:
        return enum_type(value)
    except ValueError:
        choices = ', '.join(e.value for e in enum_type)
        raise ConfigError('Setting "{}" must be one of [{}], got {!r}'.format(key, choices, value))


def getSettingAsFloatList(data: dict, key: str, default: typing.List[float], length: int) -> typing.List[float]:
    value = data.get(key, default)
    if not isinstance(value, list) or len(value) != length:
        raise ConfigError('Setting "{}" must be a list of {} numbers'.format(key, length))
    return [getSettingAsFloat({key: v}, key, 0.0) for v in value]


# -------------------------------------------------------------------------------------------------
# Sections
# -------------------------------------------------------------------------------------------------
@dataclasses.dataclass
class FrontendConfig:
    sample_rate: int = constants.SAMPLE_RATE
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float = 8000.0
    target_frames: int = 1024
    log_floor: float = constants.LOG_FLOOR
    # None means per-instance standardisation.
    norm_mean: typing.Optional[float] = None
    norm_std: typing.Optional[float] = None
    audio_patch: int = 16
    video_patch: int = 16
    tubelet: int = 2
    image_size: int = constants.IMAGE_SIZE
    video_normalize: bool = True
    video_mean: typing.List[float] = dataclasses.field(default_factory=lambda: [0.5, 0.5, 0.5])
    video_std: typing.List[float] = dataclasses.field(default_factory=lambda: [0.5, 0.5, 0.5])

    @property
    def win_length(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def audio_patch_dim(self) -> int:
        return self.audio_patch * self.audio_patch

    @property
    def n_audio_tokens(self) -> int:
        return (self.target_frames // self.audio_patch) * (self.n_mels // self.audio_patch)

    def video_patch_dim(self, n_f: int) -> int:
        depth = 1 if n_f == 1 else self.tubelet
        return 3 * depth * self.video_patch * self.video_patch

    def n_video_tokens(self, n_f: int) -> int:
        grid = (self.image_size // self.video_patch) ** 2
        return grid if n_f == 1 else grid * (n_f // self.tubelet)

    @staticmethod
    def from_dict(data: dict) -> FrontendConfig:
        defaults = FrontendConfig()
        _check_keys('frontend', data, [f.name for f in dataclasses.fields(FrontendConfig)])
        cfg = FrontendConfig(
            sample_rate=getSettingAsInt(data, 'sample_rate', defaults.sample_rate, 1),
            window_ms=getSettingAsFloat(data, 'window_ms', defaults.window_ms),
            hop_ms=getSettingAsFloat(data, 'hop_ms', defaults.hop_ms),
            n_fft=getSettingAsInt(data, 'n_fft', defaults.n_fft, 1),
            n_mels=getSettingAsInt(data, 'n_mels', defaults.n_mels, 1),
            fmin=getSettingAsFloat(data, 'fmin', defaults.fmin),
            fmax=getSettingAsFloat(data, 'fmax', defaults.fmax),
            target_frames=getSettingAsInt(data, 'target_frames', defaults.target_frames, 1),
            log_floor=getSettingAsFloat(data, 'log_floor', defaults.log_floor),
            norm_mean=getSettingAsOptionalFloat(data, 'norm_mean', defaults.norm_mean),
            norm_std=getSettingAsOptionalFloat(data, 'norm_std', defaults.norm_std),
            audio_patch=getSettingAsInt(data, 'audio_patch', defaults.audio_patch, 1),
            video_patch=getSettingAsInt(data, 'video_patch', defaults.video_patch, 1),
            tubelet=getSettingAsInt(data, 'tubelet', defaults.tubelet, 1),
            image_size=getSettingAsInt(data, 'image_size', defaults.image_size, 1),
            video_normalize=getSettingAsBool(data, 'video_normalize', defaults.video_normalize),
            video_mean=getSettingAsFloatList(data, 'video_mean', defaults.video_mean, 3),
            video_std=getSettingAsFloatList(data, 'video_std', defaults.video_std, 3))
        cfg.validate()
        return cfg

    def validate(self):
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise ConfigError('Setting "window_ms" and "hop_ms" must be positive')
        if self.n_fft < self.win_length:
            raise ConfigError('Setting "n_fft" ({}) must cover the window ({} samples)'.format(
                self.n_fft, self.win_length))
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ConfigError('Settings "fmin"/"fmax" must satisfy 0 <= fmin < fmax <= sample_rate/2')
        if self.log_floor <= 0:
            raise ConfigError('Setting "log_floor" must be positive')
        if (self.norm_mean is None) != (self.norm_std is None):
            raise ConfigError('Settings "norm_mean" and "norm_std" must be given together')
        if self.norm_std is not None and self.norm_std <= 0:
            raise ConfigError('Setting "norm_std" must be positive')
        if self.target_frames % self.audio_patch or self.n_mels % self.audio_patch:
            raise ConfigError('Setting "audio_patch" must divide target_frames and n_mels')
        if self.image_size % self.video_patch:
            raise ConfigError('Setting "video_patch" must divide image_size')
        if any(s <= 0 for s in self.video_std):
            raise ConfigError('Setting "video_std" must be positive')

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class EncoderConfig:
    D: int = 32
    L: int = 2
    S: int = 1
    H: int = 4
    pool_mode: PoolMode = PoolMode.NONE
    modality_embeddings: bool = False
    mlp_ratio: int = constants.MLP_RATIO
    ln_eps: float = constants.LN_EPS
    init_std: float = constants.INIT_STD

    @staticmethod
    def from_dict(data: dict) -> EncoderConfig:
        defaults = EncoderConfig()
        _check_keys('encoder', data, [f.name for f in dataclasses.fields(EncoderConfig)])
        cfg = EncoderConfig(
            D=getSettingAsInt(data, 'D', defaults.D, 1),
            L=getSettingAsInt(data, 'L', defaults.L, 0),
            S=getSettingAsInt(data, 'S', defaults.S, 0),
            H=getSettingAsInt(data, 'H', defaults.H, 1),
            pool_mode=getSettingAsEnum(data, 'pool_mode', PoolMode, defaults.pool_mode),
            modality_embeddings=getSettingAsBool(data, 'modality_embeddings', defaults.modality_embeddings),
            mlp_ratio=getSettingAsInt(data, 'mlp_ratio', defaults.mlp_ratio, 1),
            ln_eps=getSettingAsFloat(data, 'ln_eps', defaults.ln_eps),
            init_std=getSettingAsFloat(data, 'init_std', defaults.init_std))
        cfg.validate()
        return cfg

    def validate(self):
        if self.L + self.S < 1:
            raise ConfigError('Encoder needs at least one layer (L + S >= 1)')
        if self.D % self.H:
            raise ConfigError('Encoder dimension D={} is not divisible by H={}'.format(self.D, self.H))

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data['pool_mode'] = self.pool_mode.value
        return data


@dataclasses.dataclass
class DecoderConfig:
    layers: int = 2
    D: int = 32
    H: int = 4
    # 0 means "size of the vocabulary built for the run".
    vocab_size: int = 0
    tie_output_embedding: bool = False
    max_text_len: int = 32
    mlp_ratio: int = constants.MLP_RATIO
    ln_eps: float = constants.LN_EPS
    init_std: float = constants.INIT_STD

    @staticmethod
    def from_dict(data: dict) -> DecoderConfig:
        defaults = DecoderConfig()
        _check_keys('decoder', data, [f.name for f in dataclasses.fields(DecoderConfig)])
        cfg = DecoderConfig(
            layers=getSettingAsInt(data, 'layers', defaults.layers, 1),
            D=getSettingAsInt(data, 'D', defaults.D, 1),
            H=getSettingAsInt(data, 'H', defaults.H, 1),
            vocab_size=getSettingAsInt(data, 'vocab_size', defaults.vocab_size, 0),
            tie_output_embedding=getSettingAsBool(data, 'tie_output_embedding', defaults.tie_output_embedding),
            max_text_len=getSettingAsInt(data, 'max_text_len', defaults.max_text_len, 1),
            mlp_ratio=getSettingAsInt(data, 'mlp_ratio', defaults.mlp_ratio, 1),
            ln_eps=getSettingAsFloat(data, 'ln_eps', defaults.ln_eps),
            init_std=getSettingAsFloat(data, 'init_std', defaults.init_std))
        cfg.validate()
        return cfg

    def validate(self):
        if self.D % self.H:
            raise ConfigError('Decoder dimension D={} is not divisible by H={}'.format(self.D, self.H))
        if 0 < self.vocab_size < len(constants.SPECIAL_TOKENS):
            raise ConfigError('Setting "vocab_size" must be >= {}'.format(len(constants.SPECIAL_TOKENS)))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class FreezePolicy:
    encoder: EncoderPolicy = EncoderPolicy.SCRATCH
    text_decoder: DecoderPolicy = DecoderPolicy.TRAIN
    checkpoint: typing.Optional[str] = None

    @property
    def encoder_pretrained(self) -> bool:
        return self.encoder != EncoderPolicy.SCRATCH

    @staticmethod
    def from_dict(data: dict) -> FreezePolicy:
        defaults = FreezePolicy()
        _check_keys('policy', data, ['encoder', 'text_decoder', 'checkpoint'])
        return FreezePolicy(
            encoder=getSettingAsEnum(data, 'encoder', EncoderPolicy, defaults.encoder),
            text_decoder=getSettingAsEnum(data, 'text_decoder', DecoderPolicy, defaults.text_decoder),
            checkpoint=getSettingAsStr(data, 'checkpoint', defaults.checkpoint))

    def to_dict(self) -> dict:
        return {
            'encoder': self.encoder.value,
            'text_decoder': self.text_decoder.value,
            'checkpoint': self.checkpoint
        }


@dataclasses.dataclass
class TrainConfig:
    label_smoothing: float = 0.1
    peak_lr: float = 2e-3
    warmup_steps: int = 20
    total_steps: int = 300
    weight_decay: float = 5e-7
    beta1: float = 0.95
    beta2: float = 0.999
    batch_size: int = 4
    seed: int = 0
    policy: FreezePolicy = dataclasses.field(default_factory=FreezePolicy)

    @staticmethod
    def from_dict(data: dict) -> TrainConfig:
        defaults = TrainConfig()
        _check_keys('train', data, [f.name for f in dataclasses.fields(TrainConfig)])
        cfg = TrainConfig(
            label_smoothing=getSettingAsFloat(data, 'label_smoothing', defaults.label_smoothing),
            peak_lr=getSettingAsFloat(data, 'peak_lr', defaults.peak_lr),
            warmup_steps=getSettingAsInt(data, 'warmup_steps', defaults.warmup_steps, 0),
            total_steps=getSettingAsInt(data, 'total_steps', defaults.total_steps, 0),
            weight_decay=getSettingAsFloat(data, 'weight_decay', defaults.weight_decay),
            beta1=getSettingAsFloat(data, 'beta1', defaults.beta1),
            beta2=getSettingAsFloat(data, 'beta2', defaults.beta2),
            batch_size=getSettingAsInt(data, 'batch_size', defaults.batch_size, 1),
            seed=getSettingAsInt(data, 'seed', defaults.seed, 0),
            policy=FreezePolicy.from_dict(data.get('policy', {})))
        cfg.validate()
        return cfg

    def validate(self):
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError('Setting "label_smoothing" must be in [0, 1)')
        # total_steps == 0 is a valid "emit initial checkpoint" run.
        if self.total_steps > 0 and self.warmup_steps >= self.total_steps:
            raise ConfigError('Setting "warmup_steps" must be smaller than "total_steps"')
        if self.peak_lr < 0 or self.weight_decay < 0:
            raise ConfigError('Settings "peak_lr" and "weight_decay" must be non-negative')
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError('Settings "beta1" and "beta2" must be in [0, 1)')

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data['policy'] = self.policy.to_dict()
        return data


@dataclasses.dataclass
class InferenceConfig:
    beam: int = constants.DEFAULT_BEAM
    alpha: float = constants.DEFAULT_ALPHA
    max_len: int = constants.DEFAULT_MAX_LEN

    @staticmethod
    def from_dict(data: dict) -> InferenceConfig:
        defaults = InferenceConfig()
        _check_keys('inference', data, ['beam', 'alpha', 'max_len'])
        return InferenceConfig(
            beam=getSettingAsInt(data, 'beam', defaults.beam, 1),
            alpha=getSettingAsFloat(data, 'alpha', defaults.alpha),
            max_len=getSettingAsInt(data, 'max_len', defaults.max_len, 1))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class PathsConfig:
    manifest: typing.Optional[str] = None
    output_dir: str = 'runs/avcap'
    vocab: typing.Optional[str] = None

    @staticmethod
    def from_dict(data: dict) -> PathsConfig:
        defaults = PathsConfig()
        _check_keys('paths', data, ['manifest', 'output_dir', 'vocab'])
        return PathsConfig(
            manifest=getSettingAsStr(data, 'manifest', defaults.manifest),
            output_dir=getSettingAsStr(data, 'output_dir', defaults.output_dir),
            vocab=getSettingAsStr(data, 'vocab', defaults.vocab))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class RunConfig:
    modality: Modality = Modality.AV
    n_f: int = 1
    min_count: int = 1
    frontend: FrontendConfig = dataclasses.field(default_factory=FrontendConfig)
    encoder: EncoderConfig = dataclasses.field(default_factory=EncoderConfig)
    decoder: DecoderConfig = dataclasses.field(default_factory=DecoderConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    inference: InferenceConfig = dataclasses.field(default_factory=InferenceConfig)
    paths: PathsConfig = dataclasses.field(default_factory=PathsConfig)
    schema_version: int = constants.CONFIG_SCHEMA_VERSION

    @property
    def n_audio_tokens(self) -> int:
        return self.frontend.n_audio_tokens if self.modality.has_audio() else 0

    @property
    def n_video_tokens(self) -> int:
        return self.frontend.n_video_tokens(self.n_f) if self.modality.has_video() else 0

    @staticmethod
    def from_dict(data: dict) -> RunConfig:
        _check_keys('config', data, [
            'schema_version', 'modality', 'n_f', 'min_count', 'frontend', 'encoder',
            'decoder', 'train', 'inference', 'paths'])
        version = data.get('schema_version')
        if version != constants.CONFIG_SCHEMA_VERSION:
            raise ConfigError('Unsupported config schema_version {!r} (expected {})'.format(
                version, constants.CONFIG_SCHEMA_VERSION))
        cfg = RunConfig(
            modality=getSettingAsEnum(data, 'modality', Modality, Modality.AV),
            n_f=getSettingAsInt(data, 'n_f', 1, 1),
            min_count=getSettingAsInt(data, 'min_count', 1, 1),
            frontend=FrontendConfig.from_dict(data.get('frontend', {})),
            encoder=EncoderConfig.from_dict(data.get('encoder', {})),
            decoder=DecoderConfig.from_dict(data.get('decoder', {})),
            train=TrainConfig.from_dict(data.get('train', {})),
            inference=InferenceConfig.from_dict(data.get('inference', {})),
            paths=PathsConfig.from_dict(data.get('paths', {})))
        cfg.validate()
        return cfg

    def validate(self):
        self.frontend.validate()
        self.encoder.validate()
        self.decoder.validate()
        self.train.validate()
        if self.n_f > 1 and self.n_f % self.frontend.tubelet:
            raise ConfigError('n_f={} must be 1 or a multiple of the tubelet size {}'.format(
                self.n_f, self.frontend.tubelet))

    def to_dict(self) -> dict:
        return {
            'schema_version': self.schema_version,
            'modality': self.modality.value,
            'n_f': self.n_f,
            'min_count': self.min_count,
            'frontend': self.frontend.to_dict(),
            'encoder': self.encoder.to_dict(),
            'decoder': self.decoder.to_dict(),
            'train': self.train.to_dict(),
            'inference': self.inference.to_dict(),
            'paths': self.paths.to_dict()
        }

    def copy(self) -> RunConfig:
        return RunConfig.from_dict(self.to_dict())


# -------------------------------------------------------------------------------------------------
# Presets
# -------------------------------------------------------------------------------------------------
def desk_preset() -> RunConfig:
    return RunConfig()


def full_preset(n_f: int = 1) -> RunConfig:
    cfg = RunConfig(n_f=n_f)
    cfg.encoder = EncoderConfig(D=768, L=11, S=1, H=12)
    cfg.decoder = DecoderConfig(layers=12, D=768, H=12, max_text_len=64)
    cfg.train = TrainConfig(label_smoothing=0.1, peak_lr=1e-4, warmup_steps=50, total_steps=2500,
                            weight_decay=5e-7, beta1=0.95, beta2=0.999, batch_size=4)
    cfg.validate()
    return cfg


#
# Encoder configurations of the layer split sweep: L modality-specific layers and
# total - L joint layers.
#
def architecture_split(base: EncoderConfig, total_layers: int, L: int) -> EncoderConfig:
    if not 0 <= L <= total_layers:
        raise ConfigError('L={} must be within [0, {}]'.format(L, total_layers))
    cfg = dataclasses.replace(base, L=L, S=total_layers - L)
    cfg.validate()
    return cfg


# -------------------------------------------------------------------------------------------------
# Loading and saving
# -------------------------------------------------------------------------------------------------
def apply_environment(cfg: RunConfig) -> RunConfig:
    seed_str = os.environ.get(constants.ENV_SEED)
    if seed_str is None or seed_str.strip() == '':
        return cfg
    try:
        cfg.train.seed = int(seed_str)
    except ValueError:
        raise ConfigError('{} must be an integer, got {!r}'.format(constants.ENV_SEED, seed_str))
    logger.info('Seed overridden by {} = {}'.format(constants.ENV_SEED, cfg.train.seed))
    return cfg


def load_run_config(config_FN: io.FileName) -> RunConfig:
    if not config_FN.exists():
        raise ConfigError('Config file {} does not exist'.format(config_FN.getPath()))
    try:
        data = config_FN.readJson()
    except constants.AvcapError as ex:
        raise ConfigError(str(ex))
    cfg = RunConfig.from_dict(data)
    return apply_environment(cfg)


def save_run_config(cfg: RunConfig, config_FN: io.FileName):
    config_FN.writeJson(cfg.to_dict())
