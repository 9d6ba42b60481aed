"""
Training loop: generator pretraining, alternating adversarial updates and checkpointing
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from core.errors import CheckpointError, ConfigurationError, NumericalError
from core.models import FeatureConfig, LossMode, LossRecord, Phase, RunConfig, TrainConfig, Variant
from core.optim import AdamState, adam_step
from core.tensor import ComputeGraph, Tensor, no_grad
from reports.csv_reporter import CSVReporter
from vocoder.discriminator import MultiScaleDiscriminator, build_discriminator
from vocoder.features import FeatureStats, fit_stats, list_wavs, mel_spectrogram, normalize, wav_read
from vocoder.generator import Generator, build_generator
from vocoder.losses import (
    combined_mb_stft_loss,
    d_loss,
    feature_maps,
    feature_matching_loss,
    g_adv_loss,
    g_total_loss,
    multi_res_stft_loss,
    scores,
)
from vocoder.pqmf import PqmfBank, analyze, design_prototype, synthesize_tensor

CHECKPOINT_KIND_TRAINING = "training"
CHECKPOINT_KIND_MODEL = "model"
RUNNING_DECAY = 0.9
LOSS_LOG_NAME = "loss_log.csv"
MODEL_FILE_NAME = "model.mbmg"


@dataclass
class TrainingClip:
    """One corpus utterance: waveform and its normalized [T x n_mels] mel frames"""
    name: str
    audio: np.ndarray
    mel: np.ndarray


@dataclass
class TrainingCorpus:
    clips: List[TrainingClip]
    stats: FeatureStats


@dataclass
class Batch:
    """Aligned crops: audio (B, 1, N), mel (B, n_mels, N / hop), optional sub-bands (B, bands, N / bands)"""
    audio: np.ndarray
    mel: np.ndarray
    sub_bands: Optional[np.ndarray] = None


@dataclass
class TrainState:
    """Everything besides the weights that a resumed run needs"""
    step: int
    phase: Phase
    adam_g: AdamState
    adam_d: AdamState
    running: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def initial(cls, config: TrainConfig) -> "TrainState":
        def adam(lr: float) -> AdamState:
            return AdamState(learning_rate=lr, beta1=config.adam_beta1, beta2=config.adam_beta2,
                             epsilon=config.adam_epsilon)

        phase = Phase.PRETRAIN if config.pretrain_steps > 0 else Phase.ADVERSARIAL
        return cls(step=0, phase=phase, adam_g=adam(config.lr_g), adam_d=adam(config.lr_d))

    def update_running(self, losses: Dict[str, float]):
        for name, value in losses.items():
            previous = self.running.get(name)
            self.running[name] = value if previous is None else RUNNING_DECAY * previous + (1 - RUNNING_DECAY) * value


def lr_at(step: int, config: TrainConfig, initial_lr: Optional[float] = None) -> float:
    """Step-halving schedule, floored at lr_floor"""
    if step < 0:
        raise ConfigurationError(f"step must be non-negative, got {step}")
    initial = config.lr_g if initial_lr is None else initial_lr
    return max(initial * 0.5 ** (step // config.lr_halve_every), config.lr_floor)


def load_corpus(paths: Sequence[Union[str, Path]], features: FeatureConfig,
                stats: Optional[FeatureStats] = None) -> TrainingCorpus:
    """Read WAVs, extract mel frames and normalize them with `stats` (fitted on the corpus when omitted)"""
    if not paths:
        raise ConfigurationError("no training audio: set data.wavs or data.wav_dir")
    audio, mels = [], []
    for path in paths:
        buffer = wav_read(path)
        audio.append(buffer.samples)
        mels.append(mel_spectrogram(buffer, features))
    if stats is None:
        stats = fit_stats(mels)
    clips = [TrainingClip(Path(p).name, a, normalize(m, stats).frames) for p, a, m in zip(paths, audio, mels)]
    seconds = sum(len(c.audio) for c in clips) / features.sample_rate
    logging.info(f"Loaded {len(clips)} training clips ({seconds:.1f} s)")
    return TrainingCorpus(clips=clips, stats=stats)


def corpus_from_config(config: RunConfig, stats: Optional[FeatureStats] = None) -> TrainingCorpus:
    return load_corpus(list_wavs(config.data_wavs, config.data_wav_dir), config.features, stats)


def usable_clips(corpus: TrainingCorpus, crop_samples: int) -> List[TrainingClip]:
    """Clips long enough for one crop; shorter ones are skipped with a warning"""
    usable = []
    for clip in corpus.clips:
        if len(clip.audio) < crop_samples:
            logging.warning(f"Skipping {clip.name}: {len(clip.audio)} samples, a crop needs {crop_samples}")
            continue
        usable.append(clip)
    if not usable:
        raise ConfigurationError(f"no training clip holds a full crop of {crop_samples} samples")
    return usable


def crop_batch(corpus: TrainingCorpus, config: RunConfig, rng: np.random.Generator,
               bank: Optional[PqmfBank] = None) -> Batch:
    """Random hop-aligned crops; sub-band targets are added when a filter bank is given"""
    hop = config.features.hop_size
    crop = config.train.crop_samples(config.features.sample_rate)
    frames = crop // hop
    clips = usable_clips(corpus, crop)
    audio, mel = [], []
    for _ in range(config.train.batch_size):
        clip = clips[rng.integers(len(clips))]
        last_start = min((len(clip.audio) - crop) // hop, len(clip.mel) - frames)
        start = int(rng.integers(last_start + 1))
        audio.append(clip.audio[start * hop : start * hop + crop])
        mel.append(clip.mel[start : start + frames].T)
    batch = Batch(audio=np.stack(audio)[:, None, :], mel=np.ascontiguousarray(np.stack(mel)))
    if bank is not None:
        batch.sub_bands = np.stack([analyze(bank, samples) for samples in audio])
    return batch


class Trainer:
    """Owns the generator, discriminator and optimizer state of one run"""

    def __init__(self, config: RunConfig, corpus: TrainingCorpus, state: Optional[TrainState] = None,
                 bank: Optional[PqmfBank] = None):
        config.validate()
        self.config = config
        crop = config.train.crop_samples(config.features.sample_rate)
        self.corpus = TrainingCorpus(usable_clips(corpus, crop), corpus.stats)
        self.generator: Generator = build_generator(config.generator, seed=config.train.seed)
        self.discriminator: MultiScaleDiscriminator = build_discriminator(config.discriminator,
                                                                           seed=config.train.seed + 1)
        if config.variant == Variant.MB and bank is None:
            bank = design_prototype(config.pqmf.bands, config.pqmf.taps, config.pqmf.kaiser_beta)
        self.bank = bank if config.variant == Variant.MB else None
        self.state = state or TrainState.initial(config.train)

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], corpus: Optional[TrainingCorpus] = None) -> "Trainer":
        resume = load_checkpoint(path)
        if corpus is None:
            corpus = corpus_from_config(resume.config, resume.stats)
        trainer = cls(resume.config, TrainingCorpus(corpus.clips, resume.stats), resume.state, resume.bank)
        trainer.generator.load_state_dict(resume.generator)
        trainer.discriminator.load_state_dict(resume.discriminator)
        logging.info(f"Resuming at step {resume.state.step} ({resume.state.phase.value})")
        return trainer

    # losses

    def _full_band(self, output: Tensor) -> Tensor:
        if self.bank is not None:
            return synthesize_tensor(self.bank, output, trim_delay=True)
        return output

    def _stft_loss(self, batch: Batch, output: Tensor, full_band: Tensor) -> Tensor:
        loss = self.config.loss
        if self.bank is not None and loss.subband_stft:
            return combined_mb_stft_loss(Tensor(batch.audio), full_band, Tensor(batch.sub_bands), output, loss)
        return multi_res_stft_loss(Tensor(batch.audio), full_band, loss.full_band_resolutions)

    def _check(self, name: str, loss: Tensor):
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError(
                f"{name} loss is {value} at step {self.state.step}",
                diagnostics={'step': self.state.step, 'phase': self.state.phase.value, 'loss': name},
            )

    # updates

    def pretrain_step(self, batch: Batch) -> float:
        """One Adam update of the generator on the STFT loss alone"""
        lr = lr_at(self.state.step, self.config.train, self.config.train.lr_g)
        self.generator.zero_grad()
        with ComputeGraph() as graph:
            output = self.generator(Tensor(batch.mel))
            loss = self._stft_loss(batch, output, self._full_band(output))
            self._check("pretrain stft", loss)
            graph.backward(loss)
        adam_step(self.generator.named_tensors(), self.state.adam_g, lr)
        return loss.item()

    def discriminator_update(self, batch: Batch) -> float:
        lr = lr_at(self.state.step, self.config.train, self.config.train.lr_d)
        with no_grad():
            fake = self._full_band(self.generator(Tensor(batch.mel)))
        self.discriminator.zero_grad()
        with ComputeGraph() as graph:
            real_outputs = self.discriminator(Tensor(batch.audio))
            fake_outputs = self.discriminator(fake.detach())
            loss = d_loss(scores(real_outputs), scores(fake_outputs))
            self._check("discriminator", loss)
            graph.backward(loss)
        adam_step(self.discriminator.named_tensors(), self.state.adam_d, lr)
        return loss.item()

    def generator_update(self, batch: Batch) -> Dict[str, float]:
        lr = lr_at(self.state.step, self.config.train, self.config.train.lr_g)
        loss_config = self.config.loss
        self.generator.zero_grad()
        self.discriminator.requires_grad_(False)
        try:
            with ComputeGraph() as graph:
                output = self.generator(Tensor(batch.mel))
                full_band = self._full_band(output)
                fake_outputs = self.discriminator(full_band)
                adversarial = g_adv_loss(scores(fake_outputs))
                if loss_config.mode == LossMode.FEATURE_MATCHING:
                    with no_grad():
                        real_outputs = self.discriminator(Tensor(batch.audio))
                    auxiliary = feature_matching_loss(feature_maps(real_outputs), feature_maps(fake_outputs))
                else:
                    auxiliary = self._stft_loss(batch, output, full_band)
                total = g_total_loss(loss_config.mode, adversarial, auxiliary, loss_config.lambda_weight)
                self._check("generator", total)
                graph.backward(total)
        finally:
            self.discriminator.requires_grad_(True)
        adam_step(self.generator.named_tensors(), self.state.adam_g, lr)
        aux_name = 'feature_matching' if loss_config.mode == LossMode.FEATURE_MATCHING else 'stft'
        return {'g_adv': adversarial.item(), aux_name: auxiliary.item(), 'g_total': total.item()}

    def adversarial_step(self, batch: Batch) -> Tuple[float, Dict[str, float]]:
        """Discriminator update on detached generator output, then generator update"""
        discriminator_loss = self.discriminator_update(batch)
        return discriminator_loss, self.generator_update(batch)

    def train_step(self) -> LossRecord:
        step = self.state.step
        train = self.config.train
        rng = np.random.default_rng([train.seed, step])
        batch = crop_batch(self.corpus, self.config, rng, self.bank)
        record = LossRecord(step=step + 1, phase=Phase.PRETRAIN, lr_g=lr_at(step, train, train.lr_g),
                            lr_d=lr_at(step, train, train.lr_d))
        if step < train.pretrain_steps:
            self.state.phase = Phase.PRETRAIN
            record.stft = self.pretrain_step(batch)
        else:
            if self.state.phase != Phase.ADVERSARIAL:
                logging.info(f"Pretraining finished at step {step}; starting adversarial training")
            self.state.phase = Phase.ADVERSARIAL
            record.phase = Phase.ADVERSARIAL
            record.d_loss, generator_losses = self.adversarial_step(batch)
            for name, value in generator_losses.items():
                setattr(record, name, value)
        self.state.step += 1
        self.state.update_running(record.losses())
        return record

    def fit(self, steps: Optional[int] = None) -> List[LossRecord]:
        """Train until total_steps (or `steps` more), logging and checkpointing into train.out_dir"""
        train = self.config.train
        target = train.total_steps if steps is None else min(self.state.step + steps, train.total_steps)
        out_dir = Path(train.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / LOSS_LOG_NAME
        CSVReporter.prepare_loss_log(log_path, resume_step=self.state.step)
        logging.info(f"Training {self.config.variant.value} from step {self.state.step} to {target}")

        records, pending = [], []
        while self.state.step < target:
            record = self.train_step()
            records.append(record)
            pending.append(record)
            step = self.state.step
            if step % train.log_every == 0 or step == target:
                CSVReporter.append_loss_records(log_path, pending)
                pending = []
                summary = ", ".join(f"{k}={v:.4f}" for k, v in self.state.running.items())
                logging.info(f"step {step} [{record.phase.value}] {summary}")
            if step % train.checkpoint_every == 0:
                self.save(out_dir / f"step_{step}.mbmg")

        if records and self.state.step % train.checkpoint_every:
            self.save(out_dir / f"step_{self.state.step}.mbmg")
        self.export(out_dir / MODEL_FILE_NAME)
        return records

    def save(self, path: Union[str, Path]):
        save_checkpoint(path, self.state, self.generator, self.discriminator, self.config, self.bank,
                        self.corpus.stats)

    def export(self, path: Union[str, Path]):
        export_inference_checkpoint(path, self.generator, self.config, self.bank, self.corpus.stats, self.state.step)


@dataclass
class ResumePoint:
    """Decoded training checkpoint"""
    config: RunConfig
    state: TrainState
    generator: Dict[str, np.ndarray]
    discriminator: Dict[str, np.ndarray]
    bank: Optional[PqmfBank]
    stats: FeatureStats


def _common_metadata(kind: str, config: RunConfig, step: int, bank: Optional[PqmfBank]) -> Dict:
    return {
        'kind': kind,
        'config': config.to_dict(),
        'step': step,
        'pqmf': bank.to_metadata() if bank is not None else None,
    }


def save_checkpoint(path: Union[str, Path], state: TrainState, generator: Generator,
                    discriminator: MultiScaleDiscriminator, config: RunConfig, bank: Optional[PqmfBank],
                    stats: FeatureStats):
    """64-bit checkpoint with weights, optimizer moments and feature statistics"""
    metadata = _common_metadata(CHECKPOINT_KIND_TRAINING, config, state.step, bank)
    metadata.update({
        'phase': state.phase.value,
        'running': dict(state.running),
        'adam_g': state.adam_g.hyperparameters(),
        'adam_d': state.adam_d.hyperparameters(),
    })
    tensors = {}
    for prefix, values in (('generator', generator.state_dict()), ('discriminator', discriminator.state_dict()),
                           ('adam_g', state.adam_g.moments()), ('adam_d', state.adam_d.moments())):
        tensors.update({f"{prefix}/{name}": np.asarray(v, dtype=np.float64) for name, v in values.items()})
    tensors['stats/mean'] = np.asarray(stats.mean, dtype=np.float64)
    tensors['stats/std'] = np.asarray(stats.std, dtype=np.float64)
    write_checkpoint(path, Checkpoint(metadata=metadata, tensors=tensors))


def load_checkpoint(path: Union[str, Path]) -> ResumePoint:
    checkpoint = read_checkpoint(path)
    meta = checkpoint.metadata
    if meta.get('kind') != CHECKPOINT_KIND_TRAINING:
        raise CheckpointError(f"{path}: '{meta.get('kind')}' checkpoint cannot resume training")
    try:
        config = RunConfig.from_dict(meta['config'])
        state = TrainState(
            step=int(meta['step']),
            phase=Phase(meta['phase']),
            adam_g=AdamState.restore(meta['adam_g'], checkpoint.group('adam_g')),
            adam_d=AdamState.restore(meta['adam_d'], checkpoint.group('adam_d')),
            running=dict(meta.get('running', {})),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise CheckpointError(f"{path}: incomplete training metadata ({e})")
    return ResumePoint(
        config=config,
        state=state,
        generator=checkpoint.group('generator'),
        discriminator=checkpoint.group('discriminator'),
        bank=PqmfBank.from_metadata(meta['pqmf']) if meta.get('pqmf') else None,
        stats=_stats(checkpoint),
    )


def _stats(checkpoint: Checkpoint) -> FeatureStats:
    stats = checkpoint.group('stats')
    if 'mean' not in stats or 'std' not in stats:
        raise CheckpointError("checkpoint has no feature statistics")
    return FeatureStats(mean=np.asarray(stats['mean'], dtype=np.float64),
                        std=np.asarray(stats['std'], dtype=np.float64))


def export_inference_checkpoint(path: Union[str, Path], generator: Generator, config: RunConfig,
                                bank: Optional[PqmfBank], stats: FeatureStats, step: int):
    """32-bit generator with weight norm folded in; nothing needed for training is kept"""
    folded = generator.fold_for_inference(np.float32)
    tensors = {f"generator/{name}": np.asarray(v, dtype=np.float32) for name, v in folded.state_dict().items()}
    tensors['stats/mean'] = np.asarray(stats.mean, dtype=np.float32)
    tensors['stats/std'] = np.asarray(stats.std, dtype=np.float32)
    write_checkpoint(path, Checkpoint(metadata=_common_metadata(CHECKPOINT_KIND_MODEL, config, step, bank),
                                      tensors=tensors))
