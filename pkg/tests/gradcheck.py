"""Central-difference gradient checks for layers and whole networks.

The error reported for a tensor is max|analytic - numeric| over the probed
entries divided by max|analytic| over the whole tensor, so entries whose
gradient is tiny compared to the tensor's scale do not blow up the ratio.
"""

import numpy as np

from ramanclf.neural.layers import MaxPool, ReLU, cross_entropy

H = 1e-5


def _probe_indices(shape, rng, n_probe):
    size = int(np.prod(shape))
    flat = np.arange(size) if n_probe is None or size <= n_probe else rng.choice(size, n_probe, replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def _rel(analytic, numeric, scale):
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n)) / max(scale, 1e-12))


def layer_errors(layer, x, rng, train=True, n_probe=None, h=H):
    """{'input': err, param: err, ...} for loss = sum(forward(x) * R)."""
    out = layer.forward(x, train)
    R = rng.normal(size=out.shape)
    layer.zero_grad()
    layer.forward(x, train)
    dx = layer.backward(R)
    grads = {k: v.copy() for k, v in layer.grads.items()}

    def loss():
        return float(np.sum(layer.forward(x, train) * R))

    errs = {}
    targets = [("input", x, dx)] + [(k, layer.params[k], grads[k]) for k in layer.params]
    for name, arr, g in targets:
        idx = _probe_indices(arr.shape, rng, n_probe)
        num, ana = [], []
        for i in idx:
            old = arr[i]
            arr[i] = old + h
            up = loss()
            arr[i] = old - h
            down = loss()
            arr[i] = old
            num.append((up - down) / (2 * h))
            ana.append(g[i])
        errs[name] = _rel(ana, num, np.abs(g).max())
    return errs


class frozen_kinks:
    """Pin every ReLU mask and max-pool selection to the pattern of one
    forward pass.

    The network is piecewise smooth; with the pattern pinned it is smooth
    around the base point and has the same gradient there, so a central
    difference measures the chain rule instead of distance to the nearest
    kink. The kink decisions themselves are covered by the layer checks.
    """

    def __init__(self, net):
        self.net = net

    def __enter__(self):
        for m in self.net.modules():
            if isinstance(m, ReLU):
                m.forward = self._relu(m, m._mask.copy())
            elif isinstance(m, MaxPool) and m.size == 2:
                m.forward = self._maxpool(m, m._first.copy())
        return self

    def __exit__(self, *exc):
        for m in self.net.modules():
            m.__dict__.pop("forward", None)

    @staticmethod
    def _relu(m, mask):
        def forward(x, train=False):
            m._mask = mask
            return np.where(mask, x, 0.0)
        return forward

    @staticmethod
    def _maxpool(m, first):
        def forward(x, train=False):
            w = m._windows(x)
            m._first = first
            return np.where(first, w[..., 0], w[..., 1])
        return forward


def network_errors(net, x, y, rng, n_probe=10, h=H):
    """Same measure for a full network under softmax cross-entropy in train mode,
    probing with the activation pattern frozen (see ``frozen_kinks``)."""
    net.require_input_grad(True)
    net.zero_grad()
    _, dlogits = cross_entropy(net.forward(x, train=True), y)
    dx = net.backward(dlogits)
    grads = {key: layer.grads[name].copy() for key, layer, name in net.parameters()}

    def loss():
        return cross_entropy(net.forward(x, train=True), y)[0]

    errs = {}
    targets = [("input", None, None, dx)] + [(k, l, n, grads[k]) for k, l, n in net.parameters()]
    with frozen_kinks(net):
        for key, layer, name, g in targets:
            arr = x if layer is None else layer.params[name]
            num, ana = [], []
            for i in _probe_indices(arr.shape, rng, n_probe):
                old = arr[i]
                arr[i] = old + h
                up = loss()
                arr[i] = old - h
                down = loss()
                arr[i] = old
                num.append((up - down) / (2 * h))
                ana.append(g[i])
            errs[key] = _rel(ana, num, np.abs(g).max())
    net.require_input_grad(False)
    return errs
