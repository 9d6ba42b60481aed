"""
Training configuration loader for the MB-MelGAN vocoder engine
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional, Tuple

import yaml

from core.errors import ConfigurationError
from core.models import LossMode, RunConfig, Scale, StftResolution, Variant


def _ints(value) -> Tuple[int, ...]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ValueError("expected a non-empty list of integers")
    return tuple(int(v) for v in value)


def _pairs(value) -> Tuple[Tuple[int, int], ...]:
    pairs = tuple(_ints(pair) for pair in value)
    if any(len(pair) != 2 for pair in pairs):
        raise ValueError("expected a list of [out_channels, groups] pairs")
    return pairs


def _resolutions(value) -> Tuple[StftResolution, ...]:
    return tuple(StftResolution(*_ints(entry)) for entry in value)


def _bool(value) -> bool:
    if not isinstance(value, bool):
        raise ValueError("expected true or false")
    return value


def _paths(value) -> list:
    if isinstance(value, str):
        return [value]
    return [str(v) for v in value]


# dotted key -> (section, field, converter)
KNOWN_KEYS: Dict[str, Tuple[str, str, Callable[[Any], Any]]] = {
    'model.variant': ('run', 'variant', Variant),
    'model.scale': ('run', 'scale', Scale),
    'model.entry_channels': ('generator', 'entry_channels', int),
    'model.stage_channels': ('generator', 'stage_channels', _ints),
    'model.upsample_factors': ('generator', 'upsample_factors', _ints),
    'model.dilations': ('generator', 'resstack_dilations', _ints),
    'model.kernel_size': ('generator', 'kernel_size', int),
    'model.residual_shortcut': ('generator', 'residual_shortcut', str),
    'model.padding_mode': ('generator', 'padding_mode', str),
    'discriminator.num_scales': ('discriminator', 'num_scales', int),
    'discriminator.entry_channels': ('discriminator', 'entry_channels', int),
    'discriminator.strided': ('discriminator', 'strided', _pairs),
    'discriminator.post_channels': ('discriminator', 'post_channels', int),
    'discriminator.padding_mode': ('discriminator', 'padding_mode', str),
    'loss.mode': ('loss', 'mode', LossMode),
    'loss.lambda': ('loss', 'lambda_weight', float),
    'loss.subband_stft': ('loss', 'subband_stft', _bool),
    'loss.full_band_resolutions': ('loss', 'full_band_resolutions', _resolutions),
    'loss.sub_band_resolutions': ('loss', 'sub_band_resolutions', _resolutions),
    'features.n_mels': ('features', 'n_mels', int),
    'features.fmin': ('features', 'fmin', float),
    'features.fmax': ('features', 'fmax', float),
    'pqmf.bands': ('pqmf', 'bands', int),
    'pqmf.taps': ('pqmf', 'taps', int),
    'pqmf.kaiser_beta': ('pqmf', 'kaiser_beta', float),
    'train.batch_size': ('train', 'batch_size', int),
    'train.crop_seconds': ('train', 'crop_seconds', float),
    'train.lr_g': ('train', 'lr_g', float),
    'train.lr_d': ('train', 'lr_d', float),
    'train.lr_halve_every': ('train', 'lr_halve_every', int),
    'train.lr_floor': ('train', 'lr_floor', float),
    'train.pretrain_steps': ('train', 'pretrain_steps', int),
    'train.total_steps': ('train', 'total_steps', int),
    'train.seed': ('train', 'seed', int),
    'train.checkpoint_every': ('train', 'checkpoint_every', int),
    'train.log_every': ('train', 'log_every', int),
    'train.out_dir': ('train', 'out_dir', str),
    'train.adam_beta1': ('train', 'adam_beta1', float),
    'train.adam_beta2': ('train', 'adam_beta2', float),
    'train.adam_epsilon': ('train', 'adam_epsilon', float),
    'data.wavs': ('run', 'data_wavs', _paths),
    'data.wav_dir': ('run', 'data_wav_dir', str),
}


class ConfigLoader:
    """Load a training configuration from YAML plus key=value overrides"""

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = Path(config_path) if config_path else None
        self.values: Dict[str, Any] = {}
        self.locations: Dict[str, str] = {}

    def load(self, overrides: Iterable[str] = ()) -> RunConfig:
        """Build and validate a RunConfig from the file (if any) and overrides"""
        self.values.clear()
        self.locations.clear()

        if self.config_path is not None:
            self._load_file(self.config_path)
        for override in overrides:
            self._apply_override(override)

        for key in self.values:
            if key not in KNOWN_KEYS:
                raise ConfigurationError(f"unknown configuration key '{key}'", key=key, source=self.locations[key])

        config = self.build(self.values, self.locations)
        config.source = str(self.config_path) if self.config_path else None
        return config

    def _load_file(self, path: Path):
        if not path.exists():
            raise FileNotFoundError(f"Configuration file not found: {path}")
        text = path.read_text(encoding='utf-8')
        try:
            root = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"invalid YAML: {e}", source=str(path))
        if root is None:
            logging.warning(f"Empty configuration file {path}; using preset defaults")
            return
        if not isinstance(root, yaml.MappingNode):
            raise ConfigurationError("top level must be a mapping", source=f"{path}:{root.start_mark.line + 1}")
        self._flatten(root, "", path)

    def _flatten(self, node: yaml.MappingNode, prefix: str, path: Path):
        constructor = yaml.SafeLoader("")
        for key_node, value_node in node.value:
            key = f"{prefix}{key_node.value}"
            location = f"{path}:{key_node.start_mark.line + 1}"
            if isinstance(value_node, yaml.MappingNode):
                self._flatten(value_node, f"{key}.", path)
                continue
            if key in self.values:
                raise ConfigurationError(f"duplicate configuration key '{key}'", key=key, source=location)
            self.values[key] = constructor.construct_object(value_node, deep=True)
            self.locations[key] = location

    def _apply_override(self, override: str):
        key, sep, raw = override.partition('=')
        if not sep or not key.strip():
            raise ConfigurationError(f"override '{override}' is not of the form key=value", source="--set")
        key = key.strip()
        self.values[key] = yaml.safe_load(raw) if raw.strip() else None
        self.locations[key] = f"--set {key}"

    @staticmethod
    def build(values: Dict[str, Any], locations: Optional[Dict[str, str]] = None) -> RunConfig:
        """Start from the variant/scale preset and apply each known key"""
        locations = locations or {}
        converted = {}
        for key, raw in values.items():
            if key not in KNOWN_KEYS:
                raise ConfigurationError(f"unknown configuration key '{key}'", key=key, source=locations.get(key))
            _, _, convert = KNOWN_KEYS[key]
            try:
                converted[key] = convert(raw)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"bad value {raw!r} for '{key}': {e}", key=key, source=locations.get(key))

        variant = converted.get('model.variant', Variant.MB)
        scale = converted.get('model.scale', Scale.DESK)
        config = RunConfig.preset(variant, scale)

        sections: Dict[str, Dict[str, Any]] = {}
        for key, value in converted.items():
            section, name, _ = KNOWN_KEYS[key]
            sections.setdefault(section, {})[name] = value

        for section, changes in sections.items():
            if section == 'run':
                for name, value in changes.items():
                    setattr(config, name, value)
            else:
                setattr(config, section, replace(getattr(config, section), **changes))

        if config.generator.n_mels != config.features.n_mels:
            config.generator = replace(config.generator, n_mels=config.features.n_mels)

        try:
            config.validate()
        except ConfigurationError as e:
            source = locations.get(e.key) if e.key else None
            if source and not e.source:
                raise ConfigurationError(str(e), key=e.key, source=source) from e
            raise

        logging.info(f"Loaded {config.variant.value}/{config.scale.value} configuration "
                     f"({len(converted)} keys set, loss {config.loss.mode.value})")
        return config
