"""Symmetric fully-connected autoencoder in numpy.

Every dense layer except the last one of the decoder is followed by batch
normalization and a leaky ReLU. The encoder activations H_l(x), taken after the
activation of each encoder layer, are the pathway the anomaly score is built on.
"""
import copy
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, root_validator, validator

from slip_perception.errors import DataError, ShapeMismatchError, TrainingFailureError


class AeArchitecture(BaseModel):
    input_dim: int = 512
    depth: int = 5
    bottleneck: int = 100
    encoder_widths: Optional[List[int]] = None
    negative_slope: float = 0.01
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    class Config:
        extra = 'forbid'

    @validator('input_dim', 'depth', 'bottleneck')
    def _positive(cls, v):
        if v <= 0:
            raise ValueError('must be positive')
        return v

    @validator('negative_slope')
    def _slope(cls, v):
        if not 0 <= v <= 1:
            raise ValueError('negative_slope must lie in [0, 1]')
        return v

    @validator('bn_eps', 'bn_momentum')
    def _non_negative(cls, v):
        if v < 0:
            raise ValueError('must not be negative')
        return v

    @root_validator(skip_on_failure=True)
    def _widths(cls, values):
        widths = values.get('encoder_widths')
        if widths is None:
            widths = geometric_widths(values['input_dim'], values['bottleneck'], values['depth'])
        widths = [int(w) for w in widths]
        if len(widths) != values['depth'] or any(w <= 0 for w in widths):
            raise ValueError(f'encoder_widths must hold {values["depth"]} positive widths, got {widths}')
        values['encoder_widths'] = widths
        values['bottleneck'] = widths[-1]
        return values

    @property
    def decoder_widths(self) -> List[int]:
        return list(reversed(self.encoder_widths[:-1])) + [self.input_dim]

    @property
    def pathway_width(self) -> int:
        return sum(self.encoder_widths)

    def resized(self, input_dim: int, bottleneck: int) -> 'AeArchitecture':
        return AeArchitecture(
            input_dim=input_dim, depth=self.depth, bottleneck=bottleneck, negative_slope=self.negative_slope,
            bn_eps=self.bn_eps, bn_momentum=self.bn_momentum,
        )


def geometric_widths(input_dim: int, bottleneck: int, depth: int) -> List[int]:
    ratio = bottleneck / input_dim
    widths = [int(round(input_dim * ratio ** (i / depth))) for i in range(1, depth + 1)]
    widths[-1] = bottleneck
    return widths


class TrainConfig(BaseModel):
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 60
    patience: int = 20
    seed: int = 0
    val_fraction: float = 0.1

    class Config:
        extra = 'forbid'

    @validator('batch_size')
    def _batch(cls, v):
        if v < 2:
            raise ValueError('batch_size must be at least 2 for batch normalization')
        return v

    @validator('epochs', 'patience')
    def _non_negative(cls, v):
        if v < 0:
            raise ValueError('must not be negative')
        return v

    @validator('val_fraction')
    def _fraction(cls, v):
        if not 0 < v < 1:
            raise ValueError('val_fraction must lie in (0, 1)')
        return v


class Dense:
    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.params = {'weight': weight, 'bias': bias}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._x = None

    def forward(self, x, train=False):
        if train:
            self._x = x
        return x @ self.params['weight'] + self.params['bias']

    def backward(self, dout):
        self.grads['weight'] = self._x.T @ dout
        self.grads['bias'] = dout.sum(axis=0)
        return dout @ self.params['weight'].T


class BatchNorm:
    def __init__(self, width: int, eps: float = 1e-5, momentum: float = 0.1):
        self.params = {'gamma': np.ones(width), 'beta': np.zeros(width)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.eps = eps
        self.momentum = momentum
        self._cache = None

    def forward(self, x, train=False):
        if train:
            if x.shape[0] < 2:
                raise DataError('batch normalization needs at least 2 samples per training batch')
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            n = x.shape[0]
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var * n / (n - 1)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        if train:
            self._cache = (x_hat, inv_std)
        return self.params['gamma'] * x_hat + self.params['beta']

    def backward(self, dout):
        x_hat, inv_std = self._cache
        self.grads['gamma'] = (dout * x_hat).sum(axis=0)
        self.grads['beta'] = dout.sum(axis=0)
        dx_hat = dout * self.params['gamma']
        n = dout.shape[0]
        return inv_std / n * (n * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0))


class LeakyReLU:
    def __init__(self, negative_slope: float = 0.01):
        self.negative_slope = negative_slope
        self.params, self.grads = {}, {}
        self.mask = None

    def forward(self, x, train=False):
        mask = x > 0
        # inference leaves the layer stateless
        if train:
            self.mask = mask
        return np.where(mask, x, self.negative_slope * x)

    def backward(self, dout):
        return np.where(self.mask, dout, self.negative_slope * dout)


@dataclass
class Block:
    dense: Dense
    norm: Optional[BatchNorm] = None
    act: Optional[LeakyReLU] = None

    def layers(self):
        return [layer for layer in (self.dense, self.norm, self.act) if layer is not None]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass(frozen=True)
class PathwayTrace:
    h: np.ndarray
    h_hat: np.ndarray
    d: np.ndarray


@dataclass
class AeModel:
    arch: AeArchitecture
    blocks: List[Block]
    mode: str = 'eval'
    history: List[EpochRecord] = field(default_factory=list)

    @property
    def encoder(self) -> List[Block]:
        return self.blocks[:self.arch.depth]

    @property
    def decoder(self) -> List[Block]:
        return self.blocks[self.arch.depth:]

    def encode(self, x: np.ndarray, train: bool = False) -> List[np.ndarray]:
        hidden = []
        for block in self.encoder:
            for layer in block.layers():
                x = layer.forward(x, train)
            hidden.append(x)
        return hidden

    def decode(self, z: np.ndarray, train: bool = False) -> np.ndarray:
        for block in self.decoder:
            for layer in block.layers():
                z = layer.forward(z, train)
        return z

    def forward_train(self, x: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(x, train=True)[-1], train=True)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for block in reversed(self.blocks):
            for layer in reversed(block.layers()):
                dout = layer.backward(dout)
        return dout

    def parameters(self) -> Iterator[Tuple[str, dict, str]]:
        for i, block in enumerate(self.blocks):
            for kind, layer in (('dense', block.dense), ('bn', block.norm)):
                if layer is None:
                    continue
                for name in layer.params:
                    yield f'{i:02d}/{kind}/{name}', layer, name

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {}
        for i, block in enumerate(self.blocks):
            state[f'{i:02d}/dense/weight'] = block.dense.params['weight']
            state[f'{i:02d}/dense/bias'] = block.dense.params['bias']
            if block.norm is not None:
                state[f'{i:02d}/bn/gamma'] = block.norm.params['gamma']
                state[f'{i:02d}/bn/beta'] = block.norm.params['beta']
                state[f'{i:02d}/bn/running_mean'] = block.norm.running_mean
                state[f'{i:02d}/bn/running_var'] = block.norm.running_var
        return {k: v.copy() for k, v in state.items()}

    @classmethod
    def from_state_dict(cls, arch: AeArchitecture, state: Dict[str, np.ndarray]) -> 'AeModel':
        model = _skeleton(arch)
        for i, block in enumerate(model.blocks):
            block.dense.params['weight'] = np.array(state[f'{i:02d}/dense/weight'], dtype=np.float64)
            block.dense.params['bias'] = np.array(state[f'{i:02d}/dense/bias'], dtype=np.float64)
            if block.norm is not None:
                block.norm.params['gamma'] = np.array(state[f'{i:02d}/bn/gamma'], dtype=np.float64)
                block.norm.params['beta'] = np.array(state[f'{i:02d}/bn/beta'], dtype=np.float64)
                block.norm.running_mean = np.array(state[f'{i:02d}/bn/running_mean'], dtype=np.float64)
                block.norm.running_var = np.array(state[f'{i:02d}/bn/running_var'], dtype=np.float64)
        for i, block in enumerate(model.blocks):
            expected = ([arch.input_dim] + arch.encoder_widths + arch.decoder_widths)[i:i + 2]
            if block.dense.params['weight'].shape != tuple(expected):
                raise ShapeMismatchError(f'layer {i} weight has shape {block.dense.params["weight"].shape}, expected {expected}')
        model._check_finite()
        return model

    def _check_finite(self):
        for key, layer, name in self.parameters():
            if not np.all(np.isfinite(layer.params[name])):
                raise TrainingFailureError(f'parameter {key} is not finite')


def _skeleton(arch: AeArchitecture) -> AeModel:
    dims = [arch.input_dim] + arch.encoder_widths + arch.decoder_widths
    blocks = []
    for i in range(len(dims) - 1):
        dense = Dense(np.zeros((dims[i], dims[i + 1])), np.zeros(dims[i + 1]))
        if i == len(dims) - 2:
            blocks.append(Block(dense))
        else:
            blocks.append(Block(
                dense, BatchNorm(dims[i + 1], arch.bn_eps, arch.bn_momentum), LeakyReLU(arch.negative_slope),
            ))
    return AeModel(arch=arch, blocks=blocks)


def init_model(arch: AeArchitecture, seed: int = 0) -> AeModel:
    rng = np.random.Generator(np.random.PCG64(seed))
    model = _skeleton(arch)
    for block in model.blocks:
        fan_in = block.dense.params['weight'].shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        block.dense.params['weight'] = rng.uniform(-bound, bound, size=block.dense.params['weight'].shape)
        block.dense.params['bias'] = rng.uniform(-bound, bound, size=block.dense.params['bias'].shape)
    return model


def _as_matrix(x, model: AeModel) -> Tuple[np.ndarray, bool]:
    values = getattr(x, 'values', x)
    values = np.asarray(values, dtype=np.float64)
    single = values.ndim == 1
    values = np.atleast_2d(values)
    if values.shape[1] != model.arch.input_dim:
        raise ShapeMismatchError(f'input has width {values.shape[1]}, the autoencoder expects {model.arch.input_dim}')
    if not np.all(np.isfinite(values)):
        raise DataError('autoencoder input contains non-finite values')
    return values, single


def forward(x, model: AeModel) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Eval-mode reconstruction and the encoder activations H_1..H_L."""
    values, single = _as_matrix(x, model)
    hidden = model.encode(values)
    x_hat = model.decode(hidden[-1])
    if single:
        return x_hat[0], [h[0] for h in hidden]
    return x_hat, hidden


def pathway(x, model: AeModel, include_input: bool = False) -> PathwayTrace:
    """H(x), H(x_hat) re-encoded through the same eval-mode encoder, and their difference."""
    values, single = _as_matrix(x, model)
    hidden = model.encode(values)
    x_hat = model.decode(hidden[-1])
    hidden_hat = model.encode(x_hat)
    if include_input:
        hidden = [values] + hidden
        hidden_hat = [x_hat] + hidden_hat
    h = np.concatenate(hidden, axis=1)
    h_hat = np.concatenate(hidden_hat, axis=1)
    if single:
        h, h_hat = h[0], h_hat[0]
    return PathwayTrace(h=h, h_hat=h_hat, d=h - h_hat)


def reconstruction_error(x, model: AeModel) -> np.ndarray:
    values, single = _as_matrix(x, model)
    x_hat = model.decode(model.encode(values)[-1])
    errors = ((values - x_hat) ** 2).sum(axis=1)
    return errors[0] if single else errors


class Adam:
    def __init__(self, model: AeModel, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.t = 0
        self.m = {key: np.zeros_like(layer.params[name]) for key, layer, name in model.parameters()}
        self.v = {key: np.zeros_like(layer.params[name]) for key, layer, name in model.parameters()}

    def step(self):
        self.t += 1
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        for key, layer, name in self.model.parameters():
            g = layer.grads[name]
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * g * g
            m_hat = self.m[key] / (1 - b1 ** self.t)
            v_hat = self.v[key] / (1 - b2 ** self.t)
            layer.params[name] = layer.params[name] - self.cfg.learning_rate * m_hat / (np.sqrt(v_hat) + self.cfg.adam_eps)


def mse(x: np.ndarray, model: AeModel) -> float:
    if len(x) == 0:
        return float('nan')
    x_hat = model.decode(model.encode(x)[-1])
    return float(np.mean((x_hat - x) ** 2))


def train(data, arch: AeArchitecture, cfg: TrainConfig, val_data=None, init_seed: int = 0,
          on_epoch: Callable[[EpochRecord], None] = None) -> AeModel:
    """Adam on the mean squared reconstruction error, keeping the snapshot with the best validation loss."""
    x = np.asarray([getattr(d, 'values', d) for d in data], dtype=np.float64) if not isinstance(data, np.ndarray) \
        else np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise DataError('training needs a non-empty (samples x features) matrix')
    if x.shape[1] != arch.input_dim:
        raise ShapeMismatchError(f'training data has width {x.shape[1]}, the architecture expects {arch.input_dim}')
    if not np.all(np.isfinite(x)):
        raise DataError('training data contains non-finite values')
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if val_data is None:
        order = rng.permutation(len(x))
        n_val = max(1, int(round(cfg.val_fraction * len(x))))
        if len(x) - n_val < 2:
            raise DataError(f'{len(x)} samples are too few to hold out a validation split')
        x, val = x[order[n_val:]], x[order[:n_val]]
    else:
        val = np.asarray(val_data if isinstance(val_data, np.ndarray) else [getattr(d, 'values', d) for d in val_data],
                         dtype=np.float64)
    model = init_model(arch, init_seed)
    best_loss = mse(val, model)
    best_state = model.state_dict()
    model.history.append(EpochRecord(0, mse(x, model), best_loss))
    if on_epoch is not None:
        on_epoch(model.history[-1])
    if cfg.epochs == 0:
        return model
    optimizer = Adam(model, cfg)
    model.mode = 'train'
    waited = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = x[order[start:start + cfg.batch_size]]
            if len(batch) < 2:
                continue
            x_hat = model.forward_train(batch)
            diff = x_hat - batch
            loss = float(np.mean(diff ** 2))
            if not np.isfinite(loss):
                raise TrainingFailureError('training loss is not finite', epoch=epoch)
            model.backward(2.0 * diff / diff.size)
            optimizer.step()
            total += loss * len(batch)
            count += len(batch)
        model.mode = 'eval'
        val_loss = mse(val, model)
        if not np.isfinite(val_loss):
            raise TrainingFailureError('validation loss is not finite', epoch=epoch)
        record = EpochRecord(epoch, total / max(count, 1), val_loss)
        model.history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if val_loss < best_loss:
            best_loss, best_state, waited = val_loss, model.state_dict(), 0
        else:
            waited += 1
            if waited >= cfg.patience:
                break
        model.mode = 'train'
    history = copy.copy(model.history)
    model = AeModel.from_state_dict(arch, best_state)
    model.history = history
    return model
