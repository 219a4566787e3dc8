"""Source networks and graph tracing.

Each architecture is written once against a Tracer, which simultaneously
computes the reference activations in numpy and records the equivalent
ONNX node list. The recorded graph is later executed independently by
`runtime.run_graph` for verification, so the forward math here is
deliberately implemented with different numpy primitives (tensordot and
window loops rather than im2col and strided views).
"""

import hashlib

import numpy as np

from . import wire


def _name_seed(seed, name):
    # stable per-parameter stream regardless of creation order
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RandomParams:
    """He-initialized float32 parameters, deterministic per (seed, name)."""

    def __init__(self, seed=0):
        self.seed = seed

    def get(self, name, shape, kind):
        rng = np.random.default_rng(_name_seed(self.seed, name))
        if kind in ("conv_w", "lin_w"):
            fan_in = int(np.prod(shape[1:]))
            arr = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
        elif kind in ("conv_b", "lin_b", "bn_bias"):
            arr = rng.normal(0.0, 0.05, shape)
        elif kind == "bn_scale":
            # modest scales keep residual towers from inflating the
            # activation magnitude (trained networks behave similarly)
            arr = rng.normal(0.3, 0.03, shape)
        elif kind == "bn_mean":
            arr = rng.normal(0.0, 0.1, shape)
        elif kind == "bn_var":
            arr = rng.uniform(0.5, 1.5, shape)
        else:
            raise ValueError(f"unknown parameter kind {kind!r}")
        return arr.astype(np.float32)


class NpzParams:
    """Parameters loaded from an .npz checkpoint keyed by parameter name."""

    def __init__(self, path):
        self.arrays = np.load(path)

    def get(self, name, shape, kind):
        if name not in self.arrays:
            raise KeyError(f"checkpoint is missing parameter {name!r}")
        arr = np.asarray(self.arrays[name], dtype=np.float32)
        if arr.shape != tuple(shape):
            raise ValueError(
                f"parameter {name!r}: checkpoint shape {arr.shape}, need {tuple(shape)}"
            )
        return arr


def _pad4(x, pad, value=0.0):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                  constant_values=value)


class Tracer:
    """Computes activations and records the matching ONNX nodes."""

    INPUT = "input"

    def __init__(self, params, x):
        self.params = params
        self.nodes = []
        self.inits = {}
        self.values = {self.INPUT: np.ascontiguousarray(x, dtype=np.float32)}
        self._counter = 0

    def _fresh(self, hint):
        self._counter += 1
        return f"{hint}_{self._counter}"

    def _param(self, name, shape, kind):
        arr = self.params.get(name, shape, kind)
        self.inits[name] = arr
        return arr

    def _emit(self, op, ins, out, **attrs):
        self.nodes.append(wire.node(op, ins, [out], name=out, **attrs))

    def conv(self, x, c_out, k, name, stride=1, pad=0, bias=True):
        v = self.values[x]
        c_in = v.shape[1]
        w = self._param(f"{name}.w", (c_out, c_in, k, k), "conv_w")
        ins = [x, f"{name}.w"]
        b = None
        if bias:
            b = self._param(f"{name}.b", (c_out,), "conv_b")
            ins.append(f"{name}.b")
        padded = _pad4(v, pad)
        view = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))
        view = view[:, :, ::stride, ::stride]
        out_v = np.tensordot(view, w, axes=([1, 4, 5], [1, 2, 3]))
        out_v = out_v.transpose(0, 3, 1, 2)
        if b is not None:
            out_v = out_v + b[:, np.newaxis, np.newaxis]
        out = self._fresh(name)
        self._emit("Conv", ins, out, kernel_shape=[k, k], strides=[stride, stride],
                   pads=[pad, pad, pad, pad])
        self.values[out] = out_v.astype(np.float32)
        return out

    def bn(self, x, name, eps=1e-5):
        v = self.values[x]
        c = v.shape[1]
        scale = self._param(f"{name}.scale", (c,), "bn_scale")
        bias = self._param(f"{name}.bias", (c,), "bn_bias")
        mean = self._param(f"{name}.mean", (c,), "bn_mean")
        var = self._param(f"{name}.var", (c,), "bn_var")
        out_v = (v - mean[:, None, None]) / np.sqrt(var + eps)[:, None, None]
        out_v = out_v * scale[:, None, None] + bias[:, None, None]
        out = self._fresh(name)
        self._emit("BatchNormalization",
                   [x, f"{name}.scale", f"{name}.bias", f"{name}.mean", f"{name}.var"],
                   out, epsilon=float(eps))
        self.values[out] = out_v.astype(np.float32)
        return out

    def relu(self, x):
        out = self._fresh("relu")
        self._emit("Relu", [x], out)
        self.values[out] = np.maximum(self.values[x], 0.0)
        return out

    def _pool(self, x, k, stride, pad, ceil_mode, reducer, fill):
        v = _pad4(self.values[x], pad, value=fill)
        n, c, h, w = v.shape
        div = (lambda a: -(-a // stride)) if ceil_mode else (lambda a: a // stride)
        oh, ow = div(h - k) + 1, div(w - k) + 1
        # window loop: accumulate the k*k shifted slices
        acc = None
        extra_h = (oh - 1) * stride + k - h
        extra_w = (ow - 1) * stride + k - w
        if extra_h > 0 or extra_w > 0:
            v = np.pad(v, ((0, 0), (0, 0), (0, max(extra_h, 0)), (0, max(extra_w, 0))),
                       constant_values=fill)
        for i in range(k):
            for j in range(k):
                s = v[:, :, i : i + (oh - 1) * stride + 1 : stride,
                      j : j + (ow - 1) * stride + 1 : stride]
                acc = s.copy() if acc is None else reducer(acc, s)
        return acc

    def maxpool(self, x, k, stride, pad=0, ceil_mode=False):
        out_v = self._pool(x, k, stride, pad, ceil_mode, np.maximum, -np.inf)
        out = self._fresh("maxpool")
        self._emit("MaxPool", [x], out, kernel_shape=[k, k], strides=[stride, stride],
                   pads=[pad, pad, pad, pad], ceil_mode=int(ceil_mode))
        self.values[out] = out_v.astype(np.float32)
        return out

    def avgpool(self, x, k, stride):
        out_v = self._pool(x, k, stride, 0, False, np.add, 0.0) / (k * k)
        out = self._fresh("avgpool")
        self._emit("AveragePool", [x], out, kernel_shape=[k, k],
                   strides=[stride, stride])
        self.values[out] = out_v.astype(np.float32)
        return out

    def gap(self, x):
        out = self._fresh("gap")
        self._emit("GlobalAveragePool", [x], out)
        self.values[out] = self.values[x].mean(axis=(2, 3), keepdims=True).astype(
            np.float32
        )
        return out

    def add(self, a, b):
        out = self._fresh("add")
        self._emit("Add", [a, b], out)
        self.values[out] = self.values[a] + self.values[b]
        return out

    def concat(self, names):
        out = self._fresh("concat")
        self._emit("Concat", names, out, axis=1)
        self.values[out] = np.concatenate([self.values[n] for n in names], axis=1)
        return out

    def flatten(self, x):
        out = self._fresh("flatten")
        self._emit("Flatten", [x], out, axis=1)
        v = self.values[x]
        self.values[out] = v.reshape(v.shape[0], -1)
        return out

    def linear(self, x, d_out, name):
        v = self.values[x]
        d_in = v.shape[1]
        w = self._param(f"{name}.w", (d_out, d_in), "lin_w")
        b = self._param(f"{name}.b", (d_out,), "lin_b")
        out = self._fresh(name)
        self._emit("Gemm", [x, f"{name}.w", f"{name}.b"], out, transB=1)
        self.values[out] = (v @ w.T + b).astype(np.float32)
        return out


# --- architectures ----------------------------------------------------------

def alexnet(t):
    x = t.relu(t.conv(t.INPUT, 64, 11, "conv1", stride=4, pad=2))
    x = t.maxpool(x, 3, 2)
    x = t.relu(t.conv(x, 192, 5, "conv2", pad=2))
    x = t.maxpool(x, 3, 2)
    x = t.relu(t.conv(x, 384, 3, "conv3", pad=1))
    x = t.relu(t.conv(x, 256, 3, "conv4", pad=1))
    x = t.relu(t.conv(x, 256, 3, "conv5", pad=1))
    x = t.maxpool(x, 3, 2)
    x = t.flatten(x)
    x = t.relu(t.linear(x, 4096, "fc6"))
    x = t.relu(t.linear(x, 4096, "fc7"))
    return x, "fc7_relu"


def _basic_block(t, x, c_out, name, stride=1):
    identity = x
    out = t.relu(t.bn(t.conv(x, c_out, 3, f"{name}.conv1", stride=stride, pad=1,
                             bias=False), f"{name}.bn1"))
    out = t.bn(t.conv(out, c_out, 3, f"{name}.conv2", pad=1, bias=False),
               f"{name}.bn2")
    if stride != 1 or t.values[x].shape[1] != c_out:
        identity = t.bn(
            t.conv(x, c_out, 1, f"{name}.down", stride=stride, bias=False),
            f"{name}.down_bn",
        )
    return t.relu(t.add(out, identity))


def _resnet(t, blocks):
    x = t.relu(t.bn(t.conv(t.INPUT, 64, 7, "conv1", stride=2, pad=3, bias=False),
                    "bn1"))
    x = t.maxpool(x, 3, 2, pad=1)
    for stage, (n_blocks, c_out) in enumerate(zip(blocks, (64, 128, 256, 512))):
        for i in range(n_blocks):
            stride = 2 if stage > 0 and i == 0 else 1
            x = _basic_block(t, x, c_out, f"layer{stage + 1}.{i}", stride=stride)
    return t.flatten(t.gap(x)), "avgpool_flatten"


def resnet18(t):
    return _resnet(t, (2, 2, 2, 2))


def resnet34(t):
    return _resnet(t, (3, 4, 6, 3))


def _fire(t, x, squeeze, expand, name):
    s = t.relu(t.conv(x, squeeze, 1, f"{name}.squeeze"))
    e1 = t.relu(t.conv(s, expand, 1, f"{name}.expand1"))
    e3 = t.relu(t.conv(s, expand, 3, f"{name}.expand3", pad=1))
    return t.concat([e1, e3])


def squeezenet(t):
    x = t.relu(t.conv(t.INPUT, 64, 3, "conv1", stride=2))
    x = t.maxpool(x, 3, 2, ceil_mode=True)
    x = _fire(t, x, 16, 64, "fire2")
    x = _fire(t, x, 16, 64, "fire3")
    x = t.maxpool(x, 3, 2, ceil_mode=True)
    x = _fire(t, x, 32, 128, "fire4")
    x = _fire(t, x, 32, 128, "fire5")
    x = t.maxpool(x, 3, 2, ceil_mode=True)
    x = _fire(t, x, 48, 192, "fire6")
    x = _fire(t, x, 48, 192, "fire7")
    x = _fire(t, x, 64, 256, "fire8")
    x = _fire(t, x, 64, 256, "fire9")
    # 2x2 output grid over the final 13x13 feature map
    x = t.avgpool(x, 7, 6)
    return t.flatten(x), "pool2x2_flatten"


ARCHITECTURES = {
    "alexnet": (alexnet, 4096),
    "resnet18": (resnet18, 512),
    "resnet34": (resnet34, 512),
    "squeezenet": (squeezenet, 2048),
}
