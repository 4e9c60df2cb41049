"""Declarative architectures and the network that executes them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L

ARCHITECTURES = ("FC", "CNN", "FullCNN", "MHCNN")
LAYER_KINDS = ("conv1d", "relu", "batchnorm", "avgpool", "maxpool", "flatten", "dense",
               "global_avgpool", "softmax")

# default batch sizes per architecture
BATCH_SIZES = {"CNN": 64, "FullCNN": 16, "MHCNN": 128, "FC": 64}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: int = 0
    filters: int = 0
    size: int = 0
    units: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv1d" and (self.kernel < 1 or self.filters < 1):
            raise ValueError("conv1d needs kernel >= 1 and filters >= 1")
        if self.kind in ("avgpool", "maxpool") and self.size < 2:
            raise ValueError("pool size must be >= 2")
        if self.kind == "dense" and self.units < 1:
            raise ValueError("dense needs units >= 1")

    def to_dict(self):
        return {k: v for k, v in vars(self).items() if k == "kind" or v}


def conv(k, f):
    return LayerSpec("conv1d", kernel=k, filters=f)


def dense(u):
    return LayerSpec("dense", units=u)


RELU, BN, FLAT, SOFTMAX = LayerSpec("relu"), LayerSpec("batchnorm"), LayerSpec("flatten"), LayerSpec("softmax")
AVG2, MAX2, GAP = LayerSpec("avgpool", size=2), LayerSpec("maxpool", size=2), LayerSpec("global_avgpool")


@dataclass(frozen=True)
class ModelSpec:
    """An ordered layer list, or for multi-head models parallel branches
    whose flattened outputs are concatenated before ``layers``."""

    name: str
    layers: tuple
    branches: tuple = ()
    input_length: int = 728
    n_classes: int = 4

    def to_dict(self):
        return {
            "name": self.name,
            "input_length": self.input_length,
            "n_classes": self.n_classes,
            "branches": [[l.to_dict() for l in b] for b in self.branches],
            "layers": [l.to_dict() for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["name"],
            tuple(LayerSpec(**l) for l in d["layers"]),
            tuple(tuple(LayerSpec(**l) for l in b) for b in d.get("branches", [])),
            int(d.get("input_length", 728)),
            int(d.get("n_classes", 4)),
        )


_CONV_STACK = ((9, 2), (7, 2), (7, 4), (5, 8), (3, 12))


def build_model(name: str, n_classes: int = 4, input_length: int = 728) -> ModelSpec:
    """Layer lists for the four architectures.

    Every hidden conv/dense block is followed by ReLU then batchnorm. The
    output layer feeds softmax directly.
    """
    if name == "FC":
        layers = []
        for u in (1024, 512, 256, 128, 64, 16):
            layers += [dense(u), RELU, BN]
        layers += [dense(n_classes), SOFTMAX]
        return ModelSpec(name, tuple(layers), (), input_length, n_classes)
    if name in ("CNN", "FullCNN"):
        layers = []
        for k, f in _CONV_STACK:
            layers += [conv(k, f), RELU, BN, AVG2]
        if name == "CNN":
            layers += [FLAT, dense(128), RELU, BN, dense(n_classes), SOFTMAX]
        else:
            layers += [conv(1, n_classes), GAP, SOFTMAX]
        return ModelSpec(name, tuple(layers), (), input_length, n_classes)
    if name == "MHCNN":
        branches = tuple(
            (conv(k, 16), RELU, BN, MAX2, conv(k, 4), RELU, BN, MAX2, FLAT) for k in (3, 5, 7)
        )
        return ModelSpec(name, (dense(n_classes), SOFTMAX), branches, input_length, n_classes)
    raise ValueError(f"unknown architecture {name!r}; choose from {', '.join(ARCHITECTURES)}")


def _make_layer(spec: LayerSpec, in_shape, rng) -> L.Layer:
    k = spec.kind
    if k == "conv1d":
        return L.Conv1D(in_shape[0], spec.filters, spec.kernel, rng)
    if k == "dense":
        return L.Dense(in_shape[0], spec.units, rng)
    if k == "batchnorm":
        return L.BatchNorm(in_shape[0])
    if k == "relu":
        return L.ReLU()
    if k == "avgpool":
        return L.AvgPool(spec.size)
    if k == "maxpool":
        return L.MaxPool(spec.size)
    if k == "flatten":
        return L.Flatten()
    if k == "global_avgpool":
        return L.GlobalAvgPool()
    return L.Softmax()


def _input_shape(spec: ModelSpec, first: LayerSpec):
    return (spec.input_length,) if first.kind == "dense" else (1, spec.input_length)


def _build_chain(specs, shape, rng):
    mods, trace = [], []
    for s in specs:
        m = _make_layer(s, shape, rng)
        shape = m.out_shape(shape)
        mods.append(m)
        trace.append((s.kind, tuple(shape)))
    return mods, shape, trace


def shape_trace(spec: ModelSpec):
    """Per-layer output shapes from the ModelSpec input length.

    Returns {'branches': [[(kind, shape), ...], ...], 'layers': [...]}.
    Raises ShapeError when the layers do not chain.
    """
    net = Network(spec, seed=0)
    return net.trace


class Network:
    """Executable model. The trailing softmax is applied only at prediction;
    training uses fused softmax + cross-entropy on the logits."""

    def __init__(self, spec: ModelSpec, seed: int = 0, debug: bool = False):
        self.spec = spec
        self.seed = seed
        # debug mode checks every intermediate activation for NaN/inf
        self.debug = debug
        rng = np.random.default_rng(seed)
        self.trace = {"branches": [], "layers": []}
        if spec.branches:
            self.branches, widths = [], 0
            for b in spec.branches:
                mods, shape, tr = _build_chain(b, _input_shape(spec, b[0]), rng)
                if len(shape) != 1:
                    raise L.ShapeError("branch outputs must be flattened")
                self.branches.append(mods)
                self.trace["branches"].append(tr)
                widths += shape[0]
            head_in = (widths,)
        else:
            self.branches = []
            head_in = _input_shape(spec, spec.layers[0])
        head = list(spec.layers)
        self.has_softmax = bool(head) and head[-1].kind == "softmax"
        if self.has_softmax:
            head = head[:-1]
        self.head, out, tr = _build_chain(head, head_in, rng)
        self.trace["layers"] = tr
        if out != (spec.n_classes,):
            raise L.ShapeError(f"network output {out} does not match {spec.n_classes} classes")
        self.require_input_grad(False)
        self.trained = False
        self.epoch = 0

    # -- traversal -------------------------------------------------------
    def modules(self):
        for b in self.branches:
            yield from b
        yield from self.head

    def parameters(self):
        """(key, layer, param name) triples in a fixed order."""
        out = []
        for i, m in enumerate(self.modules()):
            for name in m.params:
                out.append((f"{i}.{m.kind}.{name}", m, name))
        return out

    def zero_grad(self):
        for m in self.modules():
            m.zero_grad()

    # -- passes ----------------------------------------------------------
    def _prep(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        return x

    def forward(self, x, train=False):
        x = self._prep(x)
        if self.branches:
            outs = []
            for b in self.branches:
                h = x[:, None, :]
                for m in b:
                    h = self._guard(m, m.forward(h, train))
                outs.append(h)
            self._splits = np.cumsum([o.shape[1] for o in outs])[:-1]
            h = np.concatenate(outs, axis=1)
        else:
            h = x if self.head[0].kind == "dense" else x[:, None, :]
        for m in self.head:
            h = self._guard(m, m.forward(h, train))
        return h

    def _guard(self, m, h):
        if self.debug and not np.all(np.isfinite(h)):
            raise FloatingPointError(f"non-finite activation after {m!r}")
        return h

    def backward(self, dlogits):
        g = dlogits
        for m in reversed(self.head):
            g = m.backward(g)
        if not self.branches:
            if g is None:
                return None
            return g if g.ndim == 2 else g[:, 0, :]
        dx = None
        for b, gb in zip(self.branches, np.split(g, self._splits, axis=1)):
            for m in reversed(b):
                gb = m.backward(gb)
            if gb is not None:
                dx = gb[:, 0, :] if dx is None else dx + gb[:, 0, :]
        return dx

    def require_input_grad(self, flag=True):
        """Toggle the gradient w.r.t. raw input (off by default for speed)."""
        for chain in (self.branches or [self.head]):
            if isinstance(chain[0], L.Conv1D):
                chain[0].needs_input_grad = flag

    def _bn_stages(self):
        """Batchnorm layers grouped so each group depends only on earlier ones."""
        stages = {}
        depth = 0
        for b in self.branches:
            bns = [m for m in b if isinstance(m, L.BatchNorm)]
            for i, m in enumerate(bns):
                stages.setdefault(i, []).append(m)
            depth = max(depth, len(bns))
        for i, m in enumerate(m for m in self.head if isinstance(m, L.BatchNorm)):
            stages.setdefault(depth + i, []).append(m)
        return [stages[k] for k in sorted(stages)]

    def calibrate_batchnorm(self, x, batch_size=256):
        """Set every batchnorm layer's running statistics to the population
        statistics of ``x``, stage by stage in forward order (parallel
        branches share a stage)."""
        x = self._prep(x)
        for group in self._bn_stages():
            for m in group:
                m.start_collect()
            for i in range(0, len(x), batch_size):
                self.forward(x[i:i + batch_size], train=False)
            for m in group:
                m.finish_collect()

    def predict_proba(self, x, batch_size=512):
        x = self._prep(x)
        parts = [L.softmax(self.forward(x[i:i + batch_size], train=False))
                 for i in range(0, len(x), batch_size)]
        return np.concatenate(parts) if parts else np.empty((0, self.spec.n_classes))

    def predict(self, x, batch_size=512):
        if not self.trained:
            raise RuntimeError("model has not been trained")
        # argmax returns the first maximum, i.e. ties go to the smallest class index
        return self.predict_proba(x, batch_size).argmax(axis=1)

    # -- state -----------------------------------------------------------
    def state_dict(self):
        state = {}
        for i, m in enumerate(self.modules()):
            for name, v in m.params.items():
                state[f"{i}.{m.kind}.{name}"] = v.copy()
            for name, v in m.buffers.items():
                state[f"{i}.{m.kind}.{name}"] = v.copy()
        return state

    def load_state_dict(self, state):
        for i, m in enumerate(self.modules()):
            for store in (m.params, m.buffers):
                for name in store:
                    key = f"{i}.{m.kind}.{name}"
                    if key not in state:
                        raise KeyError(f"checkpoint missing {key}")
                    arr = np.asarray(state[key], dtype=float)
                    if arr.shape != store[name].shape:
                        raise L.ShapeError(f"{key}: shape {arr.shape} != {store[name].shape}")
                    store[name] = arr.copy()

    def n_parameters(self):
        return sum(m.params[n].size for _, m, n in self.parameters())


__all__ = ["LayerSpec", "ModelSpec", "Network", "build_model", "shape_trace", "ARCHITECTURES", "BATCH_SIZES"]
