"""The TL surrogate: conv/tanh/maxpool encoder, frequency concatenation, and a
batch-normalized fully-connected decoder emitting the 400-point ground curve.

Shipped configuration:

    (1000, 40, 1)
      -> conv 3x3 x32, tanh, pool (5,2)   -> (200, 20, 32)
      -> conv 3x3 x64, tanh, pool (5,2)   -> (40, 10, 64)
      -> conv 3x3 x128, tanh, pool (5,2)  -> (8, 5, 128)
      -> conv 3x3 x256, tanh, pool (1,5)  -> (8, 1, 256)
      -> flatten (2048), concat frequency (2049)
      -> [BN -> FC 2048 -> ReLU -> dropout 0.4]
      -> [BN -> FC 1024 -> ReLU -> dropout 0.3]
      -> [BN -> FC 512  -> ReLU -> dropout 0.2]
      -> [BN -> FC 400  -> linear]

for 7,425,682 trainable parameters in total.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm, Conv2D, Dense, Dropout, MaxPool2D, ReLU, Tanh


@dataclass
class ModelConfig:
    input_shape: tuple = (1000, 40, 1)
    conv_channels: tuple = (32, 64, 128, 256)
    kernel: int = 3
    pool_windows: tuple = ((5, 2), (5, 2), (5, 2), (1, 5))
    fc_widths: tuple = (2048, 1024, 512, 400)
    dropout_rates: tuple = (0.4, 0.3, 0.2)
    bn_eps: float = 1e-3
    bn_momentum: float = 0.99
    dtype: str = "float32"

    def latent_shape(self):
        h, w, _ = self.input_shape
        for (ph, pw) in self.pool_windows:
            if h % ph or w % pw:
                raise ValueError(f"pool window ({ph},{pw}) does not divide ({h},{w})")
            h //= ph
            w //= pw
        return (h, w, self.conv_channels[-1])

    def flat_size(self):
        h, w, c = self.latent_shape()
        return h * w * c

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["conv_channels"] = list(self.conv_channels)
        d["pool_windows"] = [list(p) for p in self.pool_windows]
        d["fc_widths"] = list(self.fc_widths)
        d["dropout_rates"] = list(self.dropout_rates)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["input_shape"] = tuple(d["input_shape"])
        d["conv_channels"] = tuple(d["conv_channels"])
        d["pool_windows"] = tuple(tuple(p) for p in d["pool_windows"])
        d["fc_widths"] = tuple(d["fc_widths"])
        d["dropout_rates"] = tuple(d["dropout_rates"])
        return cls(**d)


class SurrogateModel:
    """Forward/backward over the full architecture with named parameters."""

    def __init__(self, config=None, seed=0):
        self.config = config or ModelConfig()
        self.seed = seed
        dtype = np.dtype(self.config.dtype).type
        rng = np.random.default_rng(seed)
        cfg = self.config

        self.conv_blocks = []
        in_ch = cfg.input_shape[2]
        for i, (out_ch, pool) in enumerate(zip(cfg.conv_channels, cfg.pool_windows)):
            conv = Conv2D(in_ch, out_ch, ksize=cfg.kernel, rng=rng, dtype=dtype)
            self.conv_blocks.append((f"conv{i + 1}", conv, Tanh(), MaxPool2D(pool)))
            in_ch = out_ch

        self.fc_blocks = []
        width = cfg.flat_size() + 1   # +1: concatenated frequency
        for i, n_out in enumerate(cfg.fc_widths):
            bn = BatchNorm(width, eps=cfg.bn_eps, momentum=cfg.bn_momentum, dtype=dtype)
            fc = Dense(width, n_out, rng=rng, dtype=dtype)
            act = ReLU() if i < len(cfg.fc_widths) - 1 else None
            drop = Dropout(cfg.dropout_rates[i]) if i < len(cfg.dropout_rates) else None
            self.fc_blocks.append((f"fc{i + 1}", bn, fc, act, drop))
            width = n_out

    # -- parameter bookkeeping ------------------------------------------------

    def named_layers(self):
        for name, conv, _, _ in self.conv_blocks:
            yield name, conv
        for name, bn, fc, _, _ in self.fc_blocks:
            yield f"{name}_bn", bn
            yield name, fc

    def parameters(self):
        """Flat dict of trainable tensors keyed 'layer.param'."""
        out = {}
        for lname, layer in self.named_layers():
            for pname, arr in layer.params.items():
                out[f"{lname}.{pname}"] = arr
        return out

    def gradients(self):
        out = {}
        for lname, layer in self.named_layers():
            for pname, arr in layer.grads.items():
                out[f"{lname}.{pname}"] = arr
        return out

    def running_stats(self):
        out = {}
        for name, bn, _, _, _ in self.fc_blocks:
            out[f"{name}_bn.running_mean"] = bn.running_mean
            out[f"{name}_bn.running_var"] = bn.running_var
        return out

    @property
    def param_count(self):
        return sum(int(p.size) for p in self.parameters().values())

    def describe(self):
        lines = [f"{'layer':<12}{'parameter':<10}{'shape':<20}{'count':>10}"]
        total = 0
        for lname, layer in self.named_layers():
            for pname, arr in layer.params.items():
                lines.append(f"{lname:<12}{pname:<10}{str(arr.shape):<20}{arr.size:>10,}")
                total += arr.size
        lines.append(f"{'total':<42}{total:>10,}")
        lines.append(f"latent shape after conv stack: {self.config.latent_shape()}")
        return "\n".join(lines)

    # -- forward / backward ---------------------------------------------------

    def forward(self, slices, freqs, training=False, dropout_seed=None):
        """Map (B, 1000, 40, 1) normalized slices + (B,) normalized frequencies
        to (B, 400) normalized TL curves.

        ``dropout_seed`` is any seedable object (int or tuple); each dropout
        layer derives an independent substream from it, so a fixed seed gives a
        reproducible mask pattern.
        """
        cfg = self.config
        x = np.asarray(slices)
        if x.ndim == 3:
            x = x[..., None]
        if x.shape[1:] != tuple(cfg.input_shape):
            raise ValueError(f"input shape {x.shape[1:]} != expected {tuple(cfg.input_shape)}")
        f = np.asarray(freqs).reshape(-1, 1).astype(x.dtype)
        if f.shape[0] != x.shape[0]:
            raise ValueError("batch sizes of slices and frequencies disagree")

        for _, conv, act, pool in self.conv_blocks:
            x = pool.forward(act.forward(conv.forward(x, training), training), training)
        B = x.shape[0]
        x = x.reshape(B, -1)
        x = np.concatenate([x, f], axis=1)

        for i, (_, bn, fc, act, drop) in enumerate(self.fc_blocks):
            x = fc.forward(bn.forward(x, training), training)
            if act is not None:
                x = act.forward(x, training)
            if drop is not None:
                rng = None
                if training and dropout_seed is not None:
                    seed = dropout_seed if isinstance(dropout_seed, tuple) else (dropout_seed,)
                    rng = np.random.default_rng(seed + (i,))
                x = drop.forward(x, training, rng=rng)
        return x

    def backward(self, dout):
        """Backpropagate the loss gradient; parameter gradients land in the
        layers' ``grads``. Returns the gradient wrt the (flattened+frequency)
        input of the FC stack for completeness."""
        d = dout
        for _, bn, fc, act, drop in reversed(self.fc_blocks):
            if drop is not None:
                d = drop.backward(d)
            if act is not None:
                d = act.backward(d)
            d = bn.backward(fc.backward(d))
        dfreq = d[:, -1:]
        d = d[:, :-1]
        h, w, c = self.config.latent_shape()
        d = d.reshape(d.shape[0], h, w, c)
        for _, conv, act, pool in reversed(self.conv_blocks):
            d = conv.backward(act.backward(pool.backward(d)))
        return d, dfreq

    def predict(self, slices, freqs, batch_size=32):
        """Inference-mode forward in batches; returns (N, 400)."""
        n = len(freqs)
        out = []
        for i in range(0, n, batch_size):
            out.append(self.forward(slices[i:i + batch_size], freqs[i:i + batch_size],
                                    training=False))
        return np.concatenate(out, axis=0)

    # -- state ----------------------------------------------------------------

    def state_arrays(self):
        """All arrays needed to clone the model: parameters + BN running stats."""
        out = dict(self.parameters())
        out.update(self.running_stats())
        return out

    def load_state_arrays(self, arrays):
        for key, arr in self.state_arrays().items():
            src = arrays[key]
            if src.shape != arr.shape:
                raise ValueError(f"state array {key} has shape {src.shape}, expected {arr.shape}")
            arr[...] = src
