"""
Core data models for the MB-MelGAN vocoder engine
"""

from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from core.errors import ConfigurationError

SAMPLE_RATE = 16000
HOP_SAMPLES = 200


class Variant(Enum):
    """Generator family"""
    MB = "mb"
    FB = "fb"
    BASIC = "basic"


class Scale(Enum):
    """Preset size: the published architecture or a laptop-sized reduction"""
    FULL = "full"
    DESK = "desk"


class LossMode(Enum):
    """Auxiliary generator objective"""
    FEATURE_MATCHING = "feature_matching"
    STFT_FB = "stft_fb"
    STFT_MB = "stft_mb"


class Phase(Enum):
    """Training phase"""
    PRETRAIN = "pretrain"
    ADVERSARIAL = "adversarial"


class CheckStatus(Enum):
    """Status of a verification check"""
    PASS = "PASS"
    FAIL = "FAIL"
    WARN = "WARN"


def _as_tuple(value) -> tuple:
    return tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in value)


@dataclass(frozen=True)
class StftResolution:
    """One STFT analysis setting of the multi-resolution loss"""
    fft_size: int
    window_size: int
    hop_size: int

    def __post_init__(self):
        if not 0 < self.window_size <= self.fft_size:
            raise ConfigurationError(f"window size {self.window_size} must be in (0, fft size {self.fft_size}]")
        if not 0 < self.hop_size <= self.window_size:
            raise ConfigurationError(f"hop size {self.hop_size} must be in (0, window size {self.window_size}]")

    def to_list(self) -> List[int]:
        return [self.fft_size, self.window_size, self.hop_size]


FULL_BAND_RESOLUTIONS = (
    StftResolution(1024, 600, 120),
    StftResolution(2048, 1200, 240),
    StftResolution(512, 240, 50),
)
SUB_BAND_RESOLUTIONS = (
    StftResolution(384, 150, 30),
    StftResolution(683, 300, 60),
    StftResolution(171, 60, 10),
)


@dataclass
class LossConfig:
    """Training objective selection and weights"""
    mode: LossMode = LossMode.STFT_MB
    lambda_weight: float = 2.5
    full_band_resolutions: Tuple[StftResolution, ...] = FULL_BAND_RESOLUTIONS
    sub_band_resolutions: Tuple[StftResolution, ...] = SUB_BAND_RESOLUTIONS
    subband_stft: bool = True

    @classmethod
    def for_variant(cls, variant: Variant) -> "LossConfig":
        if variant == Variant.MB:
            return cls(mode=LossMode.STFT_MB, lambda_weight=2.5)
        if variant == Variant.FB:
            return cls(mode=LossMode.STFT_FB, lambda_weight=2.5)
        return cls(mode=LossMode.FEATURE_MATCHING, lambda_weight=10.0)

    def validate(self):
        for label, resolutions in (("full_band", self.full_band_resolutions), ("sub_band", self.sub_band_resolutions)):
            if len(resolutions) != 3:
                raise ConfigurationError(f"loss.{label}_resolutions needs exactly 3 entries, got {len(resolutions)}")
        if self.lambda_weight < 0:
            raise ConfigurationError(f"loss.lambda must be non-negative, got {self.lambda_weight}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mode': self.mode.value,
            'lambda': self.lambda_weight,
            'full_band_resolutions': [r.to_list() for r in self.full_band_resolutions],
            'sub_band_resolutions': [r.to_list() for r in self.sub_band_resolutions],
            'subband_stft': self.subband_stft,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LossConfig":
        return cls(
            mode=LossMode(data['mode']),
            lambda_weight=float(data['lambda']),
            full_band_resolutions=tuple(StftResolution(*r) for r in data['full_band_resolutions']),
            sub_band_resolutions=tuple(StftResolution(*r) for r in data['sub_band_resolutions']),
            subband_stft=bool(data.get('subband_stft', True)),
        )


@dataclass
class FeatureConfig:
    """Mel conditioning feature settings"""
    sample_rate: int = SAMPLE_RATE
    fft_size: int = 1024
    window_size: int = 800
    hop_size: int = HOP_SAMPLES
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    mel_scale: str = "htk"
    log_base: str = "e"
    magnitude_floor: float = 1e-7

    def validate(self):
        if self.sample_rate != SAMPLE_RATE:
            raise ConfigurationError(f"unsupported sample rate {self.sample_rate} (only {SAMPLE_RATE} Hz)")
        if self.n_mels < 1:
            raise ConfigurationError(f"features.n_mels must be positive, got {self.n_mels}")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ConfigurationError(f"mel range [{self.fmin}, {self.fmax}] Hz is not inside [0, Nyquist]")
        StftResolution(self.fft_size, self.window_size, self.hop_size)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureConfig":
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass
class PqmfConfig:
    """Filter-bank design parameters"""
    bands: int = 4
    taps: int = 64
    kaiser_beta: float = 9.0

    def validate(self):
        if self.bands < 2:
            raise ConfigurationError(f"pqmf.bands must be at least 2, got {self.bands}")
        if self.taps < 2 or self.taps % 2:
            raise ConfigurationError(f"pqmf.taps must be even and positive, got {self.taps}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class GeneratorSpec:
    """Generator topology"""
    variant: Variant = Variant.MB
    n_mels: int = 80
    entry_channels: int = 384
    upsample_factors: Tuple[int, ...] = (2, 5, 5)
    stage_channels: Tuple[int, ...] = (192, 96, 48)
    resstack_dilations: Tuple[int, ...] = (1, 3, 9, 27)
    kernel_size: int = 3
    out_channels: int = 4
    entry_kernel: int = 7
    exit_kernel: int = 7
    residual_shortcut: str = "identity"
    padding_mode: str = "reflect"
    slope: float = 0.2

    @classmethod
    def preset(cls, variant: Variant, scale: Scale = Scale.FULL, n_mels: int = 80) -> "GeneratorSpec":
        desk = scale == Scale.DESK
        if variant == Variant.MB:
            return cls(
                variant=variant,
                n_mels=n_mels,
                entry_channels=48 if desk else 384,
                upsample_factors=(2, 5, 5),
                stage_channels=(24, 12, 6) if desk else (192, 96, 48),
                out_channels=4,
            )
        return cls(
            variant=variant,
            n_mels=n_mels,
            entry_channels=64 if desk else 512,
            upsample_factors=(8, 5, 5),
            stage_channels=(32, 16, 8) if desk else (256, 128, 64),
            resstack_dilations=(1, 3, 9) if variant == Variant.BASIC else (1, 3, 9, 27),
            out_channels=1,
        )

    @property
    def frame_upsampling(self) -> int:
        product = 1
        for factor in self.upsample_factors:
            product *= factor
        return product

    @property
    def samples_per_frame(self) -> int:
        return self.frame_upsampling * self.out_channels

    def validate(self, hop_size: int = HOP_SAMPLES):
        if len(self.upsample_factors) != len(self.stage_channels):
            raise ConfigurationError(
                f"{len(self.upsample_factors)} upsample factors but {len(self.stage_channels)} stage channel counts"
            )
        if self.samples_per_frame != hop_size:
            raise ConfigurationError(
                f"upsampling product {self.frame_upsampling} x {self.out_channels} output channels "
                f"= {self.samples_per_frame}, expected {hop_size} samples per mel frame",
                key="model.upsample_factors",
            )
        if self.variant == Variant.MB and self.out_channels < 2:
            raise ConfigurationError("multi-band generator needs one output channel per band")
        if self.variant != Variant.MB and self.out_channels != 1:
            raise ConfigurationError(f"{self.variant.value} generator must have exactly one output channel")
        if self.kernel_size % 2 == 0 or self.entry_kernel % 2 == 0 or self.exit_kernel % 2 == 0:
            raise ConfigurationError("generator kernels must be odd")
        if self.residual_shortcut not in ("conv", "identity"):
            raise ConfigurationError(f"model.residual_shortcut must be conv or identity, got {self.residual_shortcut}")
        if self.padding_mode not in ("reflect", "zero"):
            raise ConfigurationError(f"model.padding_mode must be reflect or zero, got {self.padding_mode}")
        if min(self.stage_channels + (self.entry_channels, self.n_mels)) < 1:
            raise ConfigurationError("channel counts must be positive")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['variant'] = self.variant.value
        for key in ('upsample_factors', 'stage_channels', 'resstack_dilations'):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GeneratorSpec":
        values = {f.name: data[f.name] for f in fields(cls) if f.name in data}
        values['variant'] = Variant(values['variant'])
        for key in ('upsample_factors', 'stage_channels', 'resstack_dilations'):
            if key in values:
                values[key] = tuple(values[key])
        return cls(**values)


@dataclass
class DiscriminatorSpec:
    """Multi-scale discriminator topology"""
    num_scales: int = 3
    entry_kernel: int = 15
    entry_channels: int = 16
    strided: Tuple[Tuple[int, int], ...] = ((64, 4), (256, 16), (512, 64))
    strided_kernel: int = 41
    stride: int = 4
    post_kernel: int = 5
    post_channels: int = 512
    out_kernel: int = 3
    padding_mode: str = "zero"
    slope: float = 0.2

    @classmethod
    def preset(cls, variant: Variant, scale: Scale = Scale.FULL) -> "DiscriminatorSpec":
        if scale == Scale.DESK:
            strided = ((8, 4), (32, 8), (64, 16))
            if variant == Variant.BASIC:
                strided += ((64, 32),)
            return cls(entry_channels=4, strided=strided, post_channels=64)
        if variant == Variant.BASIC:
            return cls(strided=((64, 4), (256, 16), (1024, 64), (1024, 256)), post_channels=1024)
        return cls()

    @property
    def minimum_length(self) -> int:
        return self.stride ** len(self.strided)

    def validate(self, variant: Optional[Variant] = None):
        expected = 4 if variant == Variant.BASIC else 3
        if variant is not None and len(self.strided) != expected:
            raise ConfigurationError(
                f"{variant.value} discriminator blocks need {expected} strided convolutions, got {len(self.strided)}",
                key="discriminator.strided",
            )
        if self.num_scales < 1:
            raise ConfigurationError(f"discriminator.num_scales must be positive, got {self.num_scales}")
        channels = self.entry_channels
        for out_channels, groups in self.strided:
            if channels % groups or out_channels % groups:
                raise ConfigurationError(
                    f"grouped conv {channels}->{out_channels} is not divisible by groups={groups}",
                    key="discriminator.strided",
                )
            channels = out_channels
        if self.padding_mode not in ("reflect", "zero"):
            raise ConfigurationError(f"discriminator.padding_mode must be reflect or zero, got {self.padding_mode}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['strided'] = [list(pair) for pair in self.strided]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DiscriminatorSpec":
        values = {f.name: data[f.name] for f in fields(cls) if f.name in data}
        if 'strided' in values:
            values['strided'] = _as_tuple(values['strided'])
        return cls(**values)


@dataclass
class TrainConfig:
    """Optimization schedule and run bookkeeping"""
    batch_size: int = 4
    crop_seconds: float = 1.0
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    lr_halve_every: int = 100000
    lr_floor: float = 1e-6
    pretrain_steps: int = 200000
    total_steps: int = 1000000
    seed: int = 0
    checkpoint_every: int = 10000
    log_every: int = 100
    out_dir: str = "runs"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    @classmethod
    def preset(cls, variant: Variant, scale: Scale = Scale.FULL) -> "TrainConfig":
        if scale == Scale.DESK:
            return cls(
                batch_size=4,
                lr_g=1e-3,
                lr_d=1e-3,
                pretrain_steps=0 if variant == Variant.BASIC else 300,
                total_steps=500 if variant == Variant.BASIC else 800,
                checkpoint_every=200,
                log_every=10,
                out_dir=f"runs/desk_{variant.value}",
            )
        return cls(
            batch_size=128 if variant == Variant.MB else 48,
            pretrain_steps=0 if variant == Variant.BASIC else 200000,
            out_dir=f"runs/{variant.value}",
        )

    def crop_samples(self, sample_rate: int = SAMPLE_RATE) -> int:
        return int(round(self.crop_seconds * sample_rate))

    def validate(self, sample_rate: int = SAMPLE_RATE, hop_size: int = HOP_SAMPLES):
        crop = self.crop_seconds * sample_rate
        if crop <= 0 or abs(crop - round(crop)) > 1e-9 or round(crop) % hop_size:
            raise ConfigurationError(
                f"crop of {self.crop_seconds} s is {crop} samples, not a positive multiple of {hop_size}",
                key="train.crop_seconds",
            )
        if self.batch_size < 1:
            raise ConfigurationError(f"train.batch_size must be positive, got {self.batch_size}")
        if self.lr_floor > min(self.lr_g, self.lr_d):
            raise ConfigurationError(f"train.lr_floor {self.lr_floor} exceeds the initial learning rate")
        if self.lr_halve_every < 1:
            raise ConfigurationError("train.lr_halve_every must be positive")
        if not 0 <= self.pretrain_steps <= self.total_steps:
            raise ConfigurationError(
                f"train.pretrain_steps ({self.pretrain_steps}) must be in [0, total_steps={self.total_steps}]"
            )
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigurationError("train.checkpoint_every and train.log_every must be positive")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass
class RunConfig:
    """Everything a training run is built from"""
    variant: Variant
    scale: Scale
    generator: GeneratorSpec
    discriminator: DiscriminatorSpec
    loss: LossConfig
    features: FeatureConfig
    pqmf: PqmfConfig
    train: TrainConfig
    data_wavs: List[str] = field(default_factory=list)
    data_wav_dir: Optional[str] = None
    source: Optional[str] = None

    @classmethod
    def preset(cls, variant: Variant, scale: Scale = Scale.DESK) -> "RunConfig":
        return cls(
            variant=variant,
            scale=scale,
            generator=GeneratorSpec.preset(variant, scale),
            discriminator=DiscriminatorSpec.preset(variant, scale),
            loss=LossConfig.for_variant(variant),
            features=FeatureConfig(),
            pqmf=PqmfConfig(),
            train=TrainConfig.preset(variant, scale),
        )

    def validate(self):
        self.features.validate()
        self.generator.validate(self.features.hop_size)
        if self.generator.variant != self.variant:
            raise ConfigurationError("model variant and generator variant disagree")
        if self.generator.n_mels != self.features.n_mels:
            raise ConfigurationError(
                f"generator expects {self.generator.n_mels} mel bins, features produce {self.features.n_mels}"
            )
        self.discriminator.validate(self.variant)
        self.loss.validate()
        if self.variant == Variant.MB:
            self.pqmf.validate()
            if self.pqmf.bands != self.generator.out_channels:
                raise ConfigurationError(
                    f"pqmf.bands ({self.pqmf.bands}) must equal generator output channels "
                    f"({self.generator.out_channels})"
                )
            if self.loss.mode != LossMode.STFT_MB:
                raise ConfigurationError("multi-band generator trains with loss.mode stft_mb")
        elif self.loss.mode == LossMode.STFT_MB:
            raise ConfigurationError("loss.mode stft_mb requires model.variant mb")
        self.train.validate(self.features.sample_rate, self.features.hop_size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'variant': self.variant.value,
            'scale': self.scale.value,
            'generator': self.generator.to_dict(),
            'discriminator': self.discriminator.to_dict(),
            'loss': self.loss.to_dict(),
            'features': self.features.to_dict(),
            'pqmf': self.pqmf.to_dict(),
            'train': self.train.to_dict(),
            'data': {'wavs': list(self.data_wavs), 'wav_dir': self.data_wav_dir},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        return cls(
            variant=Variant(data['variant']),
            scale=Scale(data['scale']),
            generator=GeneratorSpec.from_dict(data['generator']),
            discriminator=DiscriminatorSpec.from_dict(data['discriminator']),
            loss=LossConfig.from_dict(data['loss']),
            features=FeatureConfig.from_dict(data['features']),
            pqmf=PqmfConfig(**data['pqmf']),
            train=TrainConfig.from_dict(data['train']),
            data_wavs=list(data.get('data', {}).get('wavs', [])),
            data_wav_dir=data.get('data', {}).get('wav_dir'),
        )


@dataclass
class ModelStats:
    """Complexity figures derived from a generator spec alone"""
    variant: Variant
    parameter_count: int
    flops_per_second_of_audio: float
    receptive_field_samples: int
    frame_context: int
    discriminator_parameter_count: Optional[int] = None

    @property
    def gflops(self) -> float:
        return self.flops_per_second_of_audio / 1e9

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        return {
            'variant': self.variant.value,
            'parameter_count': self.parameter_count,
            'parameters_millions': round(self.parameter_count / 1e6, 4),
            'flops_per_second_of_audio': self.flops_per_second_of_audio,
            'gflops': round(self.gflops, 4),
            'receptive_field_samples': self.receptive_field_samples,
            'frame_context': self.frame_context,
            'discriminator_parameter_count': self.discriminator_parameter_count,
        }


@dataclass
class BenchReport:
    """Inference speed measurement"""
    variant: str
    rtf: float
    samples_per_second: float
    thread_count: int
    warmup_iterations: int
    measured_iterations: int
    audio_seconds: float
    wall_seconds: float
    iteration_seconds: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        return asdict(self)


@dataclass
class LossRecord:
    """One line of the training loss log"""
    step: int
    phase: Phase
    lr_g: float
    lr_d: float
    stft: Optional[float] = None
    feature_matching: Optional[float] = None
    d_loss: Optional[float] = None
    g_adv: Optional[float] = None
    g_total: Optional[float] = None

    COLUMNS = ('step', 'phase', 'lr_g', 'lr_d', 'stft', 'feature_matching', 'd_loss', 'g_adv', 'g_total')

    def losses(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in self.COLUMNS[4:] if getattr(self, name) is not None}

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['phase'] = self.phase.value
        return data


@dataclass
class CheckResult:
    """Result of one verification check"""
    check_id: str
    title: str
    status: CheckStatus
    message: str
    expected: Optional[str] = None
    actual: Optional[str] = None
    value: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        return {
            'check_id': self.check_id,
            'title': self.title,
            'status': self.status.value,
            'message': self.message,
            'expected': self.expected,
            'actual': self.actual,
            'value': self.value,
        }


@dataclass
class VerificationReport:
    """Outcome of a verification suite"""
    subject: Dict[str, Any]
    run_time: datetime
    results: List[CheckResult]

    total_checks: int = field(init=False)
    passed: int = field(init=False)
    failed: int = field(init=False)
    warnings: int = field(init=False)

    def __post_init__(self):
        self.total_checks = len(self.results)
        self.passed = sum(1 for r in self.results if r.status == CheckStatus.PASS)
        self.failed = sum(1 for r in self.results if r.status == CheckStatus.FAIL)
        self.warnings = sum(1 for r in self.results if r.status == CheckStatus.WARN)

    @property
    def succeeded(self) -> bool:
        return self.failed == 0

    def get_failed_results(self) -> List[CheckResult]:
        """Get all failed check results"""
        return [result for result in self.results if result.status == CheckStatus.FAIL]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'subject': self.subject,
            'run_time': self.run_time.isoformat(),
            'total_checks': self.total_checks,
            'passed': self.passed,
            'failed': self.failed,
            'warnings': self.warnings,
            'results': [r.to_dict() for r in self.results],
        }
