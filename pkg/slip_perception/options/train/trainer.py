import os
from typing import Dict, List, Sequence

from slip_perception.config import PipelineConfig, config_hash, derive_seed
from slip_perception.constants import BUNDLE_FILE_NAME, Modality, MODALITY_ORDER, TRAIN_LOG_FILE_NAME, VAL_SCORES_FILE_NAME
from slip_perception.errors import DataError
from slip_perception.options import resolve_path, validate_manifest_splits
from slip_perception.pipeline import autoencoder, nap
from slip_perception.pipeline.bundle import ModelBundle, provenance, save_bundle
from slip_perception.pipeline.episode_io import read_manifest
from slip_perception.pipeline.features import EpisodeFeatures, collect, load_split
from slip_perception.pipeline.fusion import build_fusion, check_modalities
from slip_perception.pipeline.streamsync import fit_ranges
from slip_perception.utils.io import ensure_writable_dir, sha256_file
from slip_perception.utils.string_tools import print_colored, print_verbose
from slip_perception.utils.timer import EpochLogger, Timer


def architecture_for(config: PipelineConfig, modalities: Sequence[Modality]) -> autoencoder.AeArchitecture:
    """Full architecture for all modalities; subsets shrink input and bottleneck in proportion."""
    arch = config.autoencoder
    if list(modalities) == list(MODALITY_ORDER):
        return arch
    width = config.fusion.width(modalities)
    bottleneck = max(config.ablation.min_bottleneck, int(round(arch.bottleneck * width / arch.input_dim)))
    return arch.resized(width, min(bottleneck, width))


class Trainer:
    def __init__(self, config: PipelineConfig, manifest_path, out_dir, modalities: Sequence[Modality] = None,
                 episodes: Dict[str, List[EpisodeFeatures]] = None):
        self.config = config.resolved()
        self.manifest_path = resolve_path(manifest_path)
        self.out_dir = ensure_writable_dir(out_dir)
        self.modalities = list(modalities or MODALITY_ORDER)
        check_modalities(self.modalities)
        self.episodes = episodes if episodes is not None else {}

    def load(self, split) -> List[EpisodeFeatures]:
        if split not in self.episodes:
            manifest = read_manifest(self.manifest_path)
            validate_manifest_splits(manifest, ['train', 'val'], self.manifest_path)
            self.episodes[split] = load_split(
                manifest, split, self.config.sync, self.config.mfcc, workers=self.config.workers,
            )
        return self.episodes[split]

    def train(self) -> str:
        config = self.config
        names = ', '.join(m.value for m in self.modalities)
        print_colored('', f'\n\n############# Training on {names} #############', 'blue')
        train_samples, _ = collect(self.load('train'), normal_only=True)
        val_samples, val_meta = collect(self.load('val'), normal_only=True)
        if len(train_samples) < 2 or not val_samples:
            raise DataError(
                f'{len(train_samples)} training and {len(val_samples)} validation ticks are too few to train on'
            )
        print_verbose(f'{len(train_samples)} training ticks, {len(val_samples)} validation ticks')

        ranges = fit_ranges(train_samples, config.sync.depth_max_mm)
        bundle = ModelBundle(
            ranges=ranges,
            fusion=build_fusion(config.fusion),
            autoencoder=None,
            nap=None,
            nap_config=config.nap,
            sync=config.sync,
            mfcc=config.mfcc,
            modalities=self.modalities,
        )
        x_train = bundle.fused(train_samples)
        x_val = bundle.fused(val_samples)

        arch = architecture_for(config, self.modalities)
        epoch_logger = EpochLogger(os.path.join(self.out_dir, TRAIN_LOG_FILE_NAME))

        def on_epoch(record):
            epoch_logger.log(record)
            print_verbose(f'epoch {record.epoch}: train {record.train_loss:.6g}, val {record.val_loss:.6g}')

        bundle.autoencoder = autoencoder.train(
            x_train, arch, config.train, val_data=x_val, init_seed=derive_seed(config.seed, 'init'), on_epoch=on_epoch,
        )
        trace = autoencoder.pathway(x_train, bundle.autoencoder, config.nap.include_input_block)
        bundle.nap = nap.fit(trace.d, config.nap)
        val_scores = bundle.score_fused(x_val)
        bundle.nap = bundle.nap.with_threshold(nap.fit_threshold(val_scores, config.nap.threshold_quantile))

        val_meta = val_meta.assign(score=val_scores)
        val_meta.to_csv(os.path.join(self.out_dir, VAL_SCORES_FILE_NAME), index=False)
        bundle.provenance = provenance(config_hash(config), sha256_file(self.manifest_path))
        bundle_path = save_bundle(bundle, os.path.join(self.out_dir, BUNDLE_FILE_NAME))
        history = bundle.autoencoder.history
        best = min(history, key=lambda r: r.val_loss)
        print_colored(
            'Model bundle written',
            f'{bundle_path}\nepochs: {history[-1].epoch}, best val loss {best.val_loss:.6g} at epoch {best.epoch}\n'
            f'NAP rank: {bundle.nap.kept_rank}, threshold: {bundle.threshold:.6g}\n'
            f'time: {Timer().get_time_since_start()}',
            'green',
        )
        return bundle_path
