"""Network container, the two architectures, and model file I/O.

The backbone follows the experiment architecture: four 3x3/stride-1
convolutions with 64 filters (only the first padded), each with batch
normalization and a ReLU, then a 512-unit fully connected layer with a
sigmoid activation and dropout 0.3. Heads: a 65-way linear layer for
Q-values, a 1-unit linear layer for the state ("expert") value, or a
dueling head for the baseline.

Model files ("XQNN"): 4-byte magic, version byte, flags byte (bit 0 set
when optimizer state follows), uint32 LE descriptor length, a JSON layer
descriptor, then raw little-endian float32 blocks for every parameter and
batch-norm statistic in declaration order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..board import ACTION_SPACE
from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    DuelingHead,
    Flatten,
    Layer,
    ReLU,
    Sigmoid,
    layer_from_spec,
)

XQNN_MAGIC = b"XQNN"
XQNN_VERSION = 1

BACKBONE_OUT = 512
_CONV_FILTERS = 64
_FC_IN = _CONV_FILTERS * 2 * 2  # spatial 8 -> 8 -> 6 -> 4 -> 2


class Network:
    """An ordered stack of layers operating on (N, 2, 8, 8) state encodings."""

    def __init__(self, layers: list[Layer], dtype=np.float32):
        self.layers = layers
        self.dtype = np.dtype(dtype)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        # accept channels-first input per the state encoding, flow NHWC inside
        if x.ndim == 3:
            x = x[None]
        out = np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=self.dtype)
        for layer in self.layers:
            out = layer.forward(out, train)
        return out

    def backward(self, dout: np.ndarray) -> None:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def _blocks(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in (*layer.params, *layer.state)]

    def descriptor(self) -> dict:
        return {"format": "expertq-net", "layers": [layer.spec() for layer in self.layers]}

    def clone(self) -> "Network":
        other = Network([layer_from_spec(s, self.dtype) for s in self.descriptor()["layers"]], self.dtype)
        for mine, theirs in zip(self._blocks(), other._blocks()):
            theirs[...] = mine
        return other

    def to_bytes(self, optimizer=None) -> bytes:
        desc = json.dumps(self.descriptor(), sort_keys=True).encode()
        flags = 1 if optimizer is not None else 0
        parts = [XQNN_MAGIC, struct.pack("<BBI", XQNN_VERSION, flags, len(desc)), desc]
        for block in self._blocks():
            parts.append(np.asarray(block, dtype="<f4").tobytes())
        if optimizer is not None:
            parts.append(struct.pack("<Q", optimizer.t))
            for m, v in zip(optimizer.m, optimizer.v):
                parts.append(np.asarray(m, dtype="<f4").tobytes())
                parts.append(np.asarray(v, dtype="<f4").tobytes())
        return b"".join(parts)

    def save(self, path, optimizer=None) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes(optimizer))


def load_network(path_or_bytes, with_optimizer: bool = False):
    """Rebuild a Network from an XQNN file.

    Returns the network, or ``(network, optimizer_state)`` when
    ``with_optimizer`` is set; ``optimizer_state`` is ``None`` unless the
    file carries one (``(t, m_blocks, v_blocks)`` otherwise).
    """
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as f:
            data = f.read()
    if data[:4] != XQNN_MAGIC:
        raise ValueError("not a model file (bad magic)")
    version, flags, desc_len = struct.unpack_from("<BBI", data, 4)
    if version != XQNN_VERSION:
        raise ValueError(f"unsupported model version {version}")
    offset = 10
    desc = json.loads(data[offset : offset + desc_len].decode())
    offset += desc_len
    net = Network([layer_from_spec(s, np.float32) for s in desc["layers"]], np.float32)
    for block in net._blocks():
        nbytes = block.size * 4
        if offset + nbytes > len(data):
            raise ValueError("truncated model file")
        block[...] = np.frombuffer(data[offset : offset + nbytes], dtype="<f4").reshape(block.shape)
        offset += nbytes
    opt_state = None
    if flags & 1:
        (t,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        m_blocks, v_blocks = [], []
        for p in net.params():
            nbytes = p.size * 4
            m_blocks.append(np.frombuffer(data[offset : offset + nbytes], dtype="<f4").reshape(p.shape).copy())
            offset += nbytes
            v_blocks.append(np.frombuffer(data[offset : offset + nbytes], dtype="<f4").reshape(p.shape).copy())
            offset += nbytes
        opt_state = (t, m_blocks, v_blocks)
    if offset != len(data):
        raise ValueError("trailing bytes in model file")
    if with_optimizer:
        return net, opt_state
    return net


def backbone_layers(rng: np.random.Generator, dtype=np.float32, fc_activation: str = "sigmoid") -> list[Layer]:
    layers: list[Layer] = []
    in_ch = 2
    for i in range(4):
        layers.append(Conv2D(in_ch, _CONV_FILTERS, 3, pad=1 if i == 0 else 0, rng=rng, dtype=dtype))
        layers.append(BatchNorm(_CONV_FILTERS, dtype=dtype))
        layers.append(ReLU())
        in_ch = _CONV_FILTERS
    layers.append(Flatten())
    layers.append(Dense(_FC_IN, BACKBONE_OUT, rng=rng, dtype=dtype))
    if fc_activation == "sigmoid":
        layers.append(Sigmoid())
    elif fc_activation == "relu":
        layers.append(ReLU())
    else:
        raise ValueError(f"unknown fc_activation {fc_activation!r}")
    layers.append(Dropout(0.3, rng=np.random.default_rng(rng.integers(2**63))))
    return layers


def build_q_network(seed: int, dtype=np.float32, fc_activation: str = "sigmoid") -> Network:
    """Backbone plus a 65-way linear output head."""
    rng = np.random.default_rng(seed)
    layers = backbone_layers(rng, dtype, fc_activation)
    layers.append(Dense(BACKBONE_OUT, ACTION_SPACE, rng=rng, dtype=dtype))
    return Network(layers, dtype)


def build_expert_network(seed: int, dtype=np.float32, fc_activation: str = "sigmoid") -> Network:
    """Backbone plus a single-unit state-value head."""
    rng = np.random.default_rng(seed)
    layers = backbone_layers(rng, dtype, fc_activation)
    layers.append(Dense(BACKBONE_OUT, 1, rng=rng, dtype=dtype))
    return Network(layers, dtype)


def build_dueling_network(seed: int, dtype=np.float32, fc_activation: str = "sigmoid") -> Network:
    """Backbone plus the action/state dueling head (65 combined outputs)."""
    rng = np.random.default_rng(seed)
    layers = backbone_layers(rng, dtype, fc_activation)
    layers.append(DuelingHead(BACKBONE_OUT, ACTION_SPACE, rng=rng, dtype=dtype))
    return Network(layers, dtype)
