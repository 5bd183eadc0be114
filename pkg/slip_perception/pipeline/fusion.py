"""Fixed multisensory integration.

Each modality goes through a small stack of convolutions and average pools with
frozen random weights and no bias or nonlinearity, so the whole stage is a
linear map. The embeddings are concatenated in the order rgb | depth | audio | ft.

Weights are drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) by numpy's PCG64
generator seeded with `FusionSpec.seed`, layer by layer in concatenation order.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, root_validator, validator

from slip_perception.constants import FT_CHANNELS, Label, Modality, MODALITY_ORDER
from slip_perception.errors import ConfigError, ShapeMismatchError
from slip_perception.pipeline.streamsync import SyncedSample

INIT_SCHEME = 'uniform_fan_in_pcg64'
# samples per convolution batch; bounds the size of the sliding-window copies
FUSE_CHUNK = 128


class ConvLayerSpec(BaseModel):
    out_channels: int
    kernel: int
    stride: int = 1
    pool: int = 1

    class Config:
        extra = 'forbid'

    @validator('out_channels', 'kernel', 'stride', 'pool')
    def _positive(cls, v):
        if v <= 0:
            raise ValueError('must be positive')
        return v


def _default_image_stack():
    return [ConvLayerSpec(out_channels=8, kernel=5, pool=2), ConvLayerSpec(out_channels=12, kernel=3, pool=3)]


class FusionSpec(BaseModel):
    seed: int = 0
    image_size: Tuple[int, int] = (32, 32)
    n_mfcc: int = 13
    ft_dim: int = FT_CHANNELS
    rgb: List[ConvLayerSpec] = None
    depth: List[ConvLayerSpec] = None
    audio: List[ConvLayerSpec] = None
    ft: List[ConvLayerSpec] = None
    output_dim: int = 512
    init: str = INIT_SCHEME

    class Config:
        extra = 'forbid'

    @validator('rgb', 'depth', pre=True, always=True)
    def _image_default(cls, v):
        return _default_image_stack() if v is None else v

    @validator('audio', pre=True, always=True)
    def _audio_default(cls, v):
        return [ConvLayerSpec(out_channels=8, kernel=6)] if v is None else v

    @validator('ft', pre=True, always=True)
    def _ft_default(cls, v):
        return [ConvLayerSpec(out_channels=16, kernel=3)] if v is None else v

    @validator('seed')
    def _u64(cls, v):
        if not 0 <= v < 2 ** 64:
            raise ValueError('seed must be an unsigned 64-bit integer')
        return v

    @root_validator(skip_on_failure=True)
    def _dims_consistent(cls, values):
        if values['init'] != INIT_SCHEME:
            raise ValueError(f'unknown init scheme {values["init"]}, only {INIT_SCHEME} is supported')
        spec = _DimsView(values)
        total = sum(spec.embedding_dim(m) for m in MODALITY_ORDER)
        if total != values['output_dim']:
            raise ValueError(f'output_dim {values["output_dim"]} != sum of embedding dims {total}')
        return values

    def input_shape(self, modality: Modality) -> Tuple[int, ...]:
        return _DimsView(self.dict()).input_shape(modality)

    def layers(self, modality: Modality) -> List[ConvLayerSpec]:
        return {
            Modality.RGB: self.rgb, Modality.DEPTH: self.depth, Modality.AUDIO: self.audio, Modality.FORCE_TORQUE: self.ft,
        }[modality]

    def embedding_dim(self, modality: Modality) -> int:
        return _DimsView(self.dict()).embedding_dim(modality)

    def width(self, modalities: Sequence[Modality] = MODALITY_ORDER) -> int:
        return sum(self.embedding_dim(m) for m in modalities)


class _DimsView:
    """Shape arithmetic shared by validation and the built operator."""

    def __init__(self, values):
        self.values = values

    def input_shape(self, modality):
        h, w = self.values['image_size']
        return {
            Modality.RGB: (3, h, w),
            Modality.DEPTH: (1, h, w),
            Modality.AUDIO: (1, self.values['n_mfcc']),
            Modality.FORCE_TORQUE: (1, self.values['ft_dim']),
        }[modality]

    def embedding_dim(self, modality):
        key = {Modality.RGB: 'rgb', Modality.DEPTH: 'depth', Modality.AUDIO: 'audio', Modality.FORCE_TORQUE: 'ft'}[modality]
        shape = self.input_shape(modality)
        channels, spatial = shape[0], list(shape[1:])
        for layer in self.values[key]:
            layer = layer if isinstance(layer, ConvLayerSpec) else ConvLayerSpec(**layer)
            if any(layer.kernel > s for s in spatial):
                raise ValueError(f'{key} kernel {layer.kernel} does not fit input {spatial}')
            spatial = [(s - layer.kernel) // layer.stride + 1 for s in spatial]
            spatial = [s // layer.pool for s in spatial]
            if any(s <= 0 for s in spatial):
                raise ValueError(f'{key} pooling {layer.pool} leaves no output')
            channels = layer.out_channels
        return int(channels * np.prod(spatial))


@dataclass(frozen=True)
class FusedVector:
    values: np.ndarray
    tick_time: float = 0.0
    label: Label = Label.NORMAL


@dataclass(frozen=True)
class FusionOperator:
    spec: FusionSpec
    weights: Dict[Modality, Tuple[np.ndarray, ...]]

    def embed(self, modality: Modality, x: np.ndarray) -> np.ndarray:
        """x: (N, C, *spatial) -> (N, embedding_dim)."""
        for layer, kernel in zip(self.spec.layers(modality), self.weights[modality]):
            x = _conv(x, kernel, layer.stride)
            x = _avg_pool(x, layer.pool)
        return x.reshape(x.shape[0], -1)


def build_fusion(spec: FusionSpec) -> FusionOperator:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    weights = {}
    for modality in MODALITY_ORDER:
        channels = spec.input_shape(modality)[0]
        spatial_rank = len(spec.input_shape(modality)) - 1
        kernels = []
        for layer in spec.layers(modality):
            shape = (layer.out_channels, channels) + (layer.kernel,) * spatial_rank
            bound = 1.0 / np.sqrt(channels * layer.kernel ** spatial_rank)
            kernel = rng.uniform(-bound, bound, size=shape)
            kernel.flags.writeable = False
            kernels.append(kernel)
            channels = layer.out_channels
        weights[modality] = tuple(kernels)
    return FusionOperator(spec=spec, weights=weights)


def fusion_from_weights(spec: FusionSpec, arrays: Dict[str, np.ndarray]) -> FusionOperator:
    weights = {}
    for modality in MODALITY_ORDER:
        kernels = []
        for i, _ in enumerate(spec.layers(modality)):
            kernel = np.array(arrays[f'{modality.value}/{i}'], dtype=np.float64)
            kernel.flags.writeable = False
            kernels.append(kernel)
        weights[modality] = tuple(kernels)
    return FusionOperator(spec=spec, weights=weights)


def fusion_weight_arrays(op: FusionOperator) -> Dict[str, np.ndarray]:
    return {f'{m.value}/{i}': k for m in MODALITY_ORDER for i, k in enumerate(op.weights[m])}


def _conv(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    spatial = kernel.shape[2:]
    axes = tuple(range(2, 2 + len(spatial)))
    windows = sliding_window_view(x, spatial, axis=axes)
    index = (slice(None), slice(None)) + (slice(None, None, stride),) * len(spatial)
    windows = windows[index]
    if len(spatial) == 2:
        return np.einsum('nchwij,ocij->nohw', windows, kernel, optimize=True)
    return np.einsum('ncli,oci->nol', windows, kernel, optimize=True)


def _avg_pool(x: np.ndarray, pool: int) -> np.ndarray:
    if pool == 1:
        return x
    n, c = x.shape[:2]
    spatial = [s // pool for s in x.shape[2:]]
    trimmed = x[(slice(None), slice(None)) + tuple(slice(0, s * pool) for s in spatial)]
    if len(spatial) == 2:
        return trimmed.reshape(n, c, spatial[0], pool, spatial[1], pool).mean(axis=(3, 5))
    return trimmed.reshape(n, c, spatial[0], pool).mean(axis=3)


def modality_inputs(samples: Sequence[SyncedSample], spec: FusionSpec) -> Dict[Modality, np.ndarray]:
    """Stack the normalized slots of a batch into (N, C, *spatial) arrays."""
    arrays = {}
    for modality in MODALITY_ORDER:
        expected = spec.input_shape(modality)
        try:
            if modality == Modality.RGB:
                batch = np.stack([np.asarray(s.rgb, dtype=np.float64).transpose(2, 0, 1) for s in samples])
            else:
                batch = np.stack([np.asarray(s.slot(modality), dtype=np.float64) for s in samples])[:, None]
        except (ValueError, TypeError) as e:
            raise ShapeMismatchError(f'{modality.value} inputs do not share one shape: {e}') from e
        if batch.shape[1:] != expected:
            raise ShapeMismatchError(
                f'{modality.value} input has shape {batch.shape[1:]} but the fusion spec expects {expected}'
            )
        arrays[modality] = batch
    return arrays


def fuse_batch(samples: Sequence[SyncedSample], op: FusionOperator,
               modalities: Sequence[Modality] = MODALITY_ORDER,
               mask: Optional[Sequence[Modality]] = None) -> np.ndarray:
    """(N, width) fused matrix; modalities outside `mask` enter as zeros."""
    if not samples:
        return np.zeros((0, op.spec.width(modalities)))
    chunks = []
    for start in range(0, len(samples), FUSE_CHUNK):
        inputs = modality_inputs(samples[start:start + FUSE_CHUNK], op.spec)
        blocks = []
        for modality in MODALITY_ORDER:
            if modality not in modalities:
                continue
            x = inputs[modality]
            if mask is not None and modality not in mask:
                x = np.zeros_like(x)
            blocks.append(op.embed(modality, x))
        chunks.append(np.concatenate(blocks, axis=1))
    return np.concatenate(chunks, axis=0)


def fuse(sample: SyncedSample, op: FusionOperator, modalities: Sequence[Modality] = MODALITY_ORDER,
         mask: Optional[Sequence[Modality]] = None) -> FusedVector:
    values = fuse_batch([sample], op, modalities, mask)[0]
    return FusedVector(values=values, tick_time=sample.tick_time, label=sample.label)


def check_modalities(modalities: Sequence[Modality]):
    if not modalities:
        raise ConfigError('the modality mask excludes every modality')
