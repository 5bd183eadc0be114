"""Model bundle: everything needed to score raw ticks, in one `.npz` file.

Arrays are stored under `fusion/`, `ae/` and `nap/` prefixes. Everything else
(format version, configs, normalization ranges, NAP scalars, active modalities
and provenance) is one JSON document stored as the uint8 array `__meta__`.
"""
import datetime
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from slip_perception.constants import BUNDLE_FORMAT_VERSION, Label, Modality, MODALITY_ORDER
from slip_perception.errors import ConfigError, DataError
from slip_perception.pipeline import autoencoder, nap
from slip_perception.pipeline.dsp import MfccConfig
from slip_perception.pipeline.fusion import (
    FusionOperator, FusionSpec, check_modalities, fuse_batch, fusion_from_weights, fusion_weight_arrays,
)
from slip_perception.pipeline.nap import NapConfig, NapModel
from slip_perception.pipeline.streamsync import NormalizationRanges, SyncConfig, SyncedSample, normalize_sample
from slip_perception.utils.timer import StageTimer

META_KEY = '__meta__'


@dataclass
class ModelBundle:
    ranges: NormalizationRanges
    fusion: FusionOperator
    autoencoder: autoencoder.AeModel
    nap: NapModel
    nap_config: NapConfig
    sync: SyncConfig
    mfcc: MfccConfig
    modalities: List[Modality] = field(default_factory=lambda: list(MODALITY_ORDER))
    provenance: Dict[str, str] = field(default_factory=dict)
    format_version: int = BUNDLE_FORMAT_VERSION

    @property
    def threshold(self) -> Optional[float]:
        return self.nap.threshold

    def resolve_mask(self, mask: Optional[Sequence[Modality]]) -> Optional[List[Modality]]:
        if mask is None:
            return None
        outside = [m.value for m in mask if m not in self.modalities]
        if outside:
            raise ConfigError(
                f'mask names {outside} but the bundle was trained on {[m.value for m in self.modalities]}'
            )
        check_modalities(mask)
        return list(mask)

    def fused(self, samples: Sequence[SyncedSample], mask: Optional[Sequence[Modality]] = None) -> np.ndarray:
        normalized = [normalize_sample(s, self.ranges) for s in samples]
        return fuse_batch(normalized, self.fusion, self.modalities, self.resolve_mask(mask))

    def score_fused(self, x: np.ndarray, timer: StageTimer = None) -> np.ndarray:
        timer = timer or StageTimer()
        if self.nap_config.scorer == 'recon':
            with timer.measure('autoencoder'):
                return np.atleast_1d(autoencoder.reconstruction_error(x, self.autoencoder))
        with timer.measure('autoencoder'):
            trace = autoencoder.pathway(x, self.autoencoder, self.nap_config.include_input_block)
        with timer.measure('nap'):
            return nap.score_batch(trace.d, self.nap)

    def score(self, samples: Sequence[SyncedSample], mask: Optional[Sequence[Modality]] = None,
              timer: StageTimer = None) -> np.ndarray:
        """Anomaly scores of feature-extracted (MFCC-carrying, unnormalized) ticks."""
        if not samples:
            return np.zeros(0)
        timer = timer or StageTimer()
        with timer.measure('fusion'):
            x = self.fused(samples, mask)
        return self.score_fused(x, timer)

    def predict(self, scores) -> List[Label]:
        return [nap.classify(float(s), self.nap) for s in np.atleast_1d(scores)]


def _meta(bundle: ModelBundle) -> dict:
    return {
        'format_version': bundle.format_version,
        'modalities': [m.value for m in bundle.modalities],
        'ranges': json.loads(bundle.ranges.json()),
        'fusion_spec': json.loads(bundle.fusion.spec.json()),
        'autoencoder': json.loads(bundle.autoencoder.arch.json()),
        'ae_layers': sorted(bundle.autoencoder.state_dict()),
        'nap': nap.nap_meta(bundle.nap),
        'nap_config': json.loads(bundle.nap_config.json()),
        'sync': json.loads(bundle.sync.json()),
        'mfcc': json.loads(bundle.mfcc.json()),
        'provenance': bundle.provenance,
    }


def save_bundle(bundle: ModelBundle, path: str) -> str:
    arrays = {f'fusion/{k}': v for k, v in fusion_weight_arrays(bundle.fusion).items()}
    arrays.update({f'ae/{k}': v for k, v in bundle.autoencoder.state_dict().items()})
    arrays.update({f'nap/{k}': v for k, v in nap.nap_arrays(bundle.nap).items()})
    meta = json.dumps(_meta(bundle), sort_keys=True).encode('utf-8')
    arrays[META_KEY] = np.frombuffer(meta, dtype=np.uint8)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'wb') as f:
        np.savez(f, **arrays)
    return path


def load_bundle(path: str) -> ModelBundle:
    if not os.path.isfile(path):
        raise DataError(f'model bundle {path} does not exist')
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    if META_KEY not in arrays:
        raise DataError(f'{path} is not a model bundle')
    meta = json.loads(arrays.pop(META_KEY).tobytes().decode('utf-8'))
    if meta.get('format_version') != BUNDLE_FORMAT_VERSION:
        raise DataError(f'{path} has bundle format {meta.get("format_version")}, expected {BUNDLE_FORMAT_VERSION}')

    def section(prefix):
        return {k[len(prefix) + 1:]: v for k, v in arrays.items() if k.startswith(prefix + '/')}

    arch = autoencoder.AeArchitecture(**meta['autoencoder'])
    ae_state = section('ae')
    if sorted(ae_state) != meta['ae_layers']:
        raise DataError(f'{path} autoencoder layers do not match the recorded layer list')
    return ModelBundle(
        ranges=NormalizationRanges(**meta['ranges']),
        fusion=fusion_from_weights(FusionSpec(**meta['fusion_spec']), section('fusion')),
        autoencoder=autoencoder.AeModel.from_state_dict(arch, ae_state),
        nap=nap.nap_from_arrays(section('nap'), meta['nap']),
        nap_config=NapConfig(**meta['nap_config']),
        sync=SyncConfig(**meta['sync']),
        mfcc=MfccConfig(**meta['mfcc']),
        modalities=[Modality(m) for m in meta['modalities']],
        provenance=meta['provenance'],
        format_version=meta['format_version'],
    )


def provenance(config_hash: str, manifest_sha256: str) -> Dict[str, str]:
    return {
        'config_hash': config_hash,
        'manifest_sha256': manifest_sha256,
        'created_at': datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds'),
    }
