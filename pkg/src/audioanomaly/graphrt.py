"""Numpy executor for the ONNX op subset emitted by the model export
tool: Conv, Relu, MaxPool, AveragePool, GlobalAveragePool,
BatchNormalization, Add, Concat, Flatten, Gemm (plus identity Dropout
and Reshape). float32 throughout."""

import numpy as np

from .onnxio import OnnxError, load_model


class GraphExecError(OnnxError):
    pass


def _pair(v, default):
    if v is None:
        return default
    return tuple(int(x) for x in v)


def _pad_input(x, pads, value=0.0):
    # ONNX pads: [top, left, bottom, right] for 2-D spatial
    t, l, b, r = pads
    if t == l == b == r == 0:
        return x
    return np.pad(
        x, ((0, 0), (0, 0), (t, b), (l, r)), mode="constant", constant_values=value
    )


def _windows(x, kh, kw, sh, sw):
    """[N, C, OH, OW, kh, kw] view of sliding windows."""
    view = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return view[:, :, ::sh, ::sw]


def _conv(x, w, b, attrs):
    sh, sw = _pair(attrs.get("strides"), (1, 1))
    dil = _pair(attrs.get("dilations"), (1, 1))
    group = int(attrs.get("group", 1))
    if dil != (1, 1):
        raise GraphExecError("dilated convolution not supported")
    if group != 1:
        raise GraphExecError("grouped convolution not supported")
    kh, kw = w.shape[2], w.shape[3]
    pads = attrs.get("pads")
    pads = (0, 0, 0, 0) if pads is None else tuple(int(p) for p in pads)
    x = _pad_input(x, pads)
    n, c, h, wd = x.shape
    oh = (h - kh) // sh + 1
    ow = (wd - kw) // sw + 1
    cols = _windows(x, kh, kw, sh, sw)  # [N, C, OH, OW, kh, kw]
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    kernel = w.reshape(w.shape[0], -1)  # [M, C*kh*kw]
    out = cols @ kernel.T
    if b is not None:
        out += b
    return out.reshape(n, oh, ow, w.shape[0]).transpose(0, 3, 1, 2)


def _pool_output_size(h, k, s, p0, p1, ceil_mode):
    span = h + p0 + p1 - k
    if ceil_mode:
        return -(-span // s) + 1
    return span // s + 1


def _maxpool(x, attrs):
    kh, kw = _pair(attrs.get("kernel_shape"), None)
    sh, sw = _pair(attrs.get("strides"), (kh, kw))
    pads = attrs.get("pads")
    pt, pl, pb, pr = (0, 0, 0, 0) if pads is None else tuple(int(p) for p in pads)
    ceil_mode = bool(attrs.get("ceil_mode", 0))
    n, c, h, w = x.shape
    oh = _pool_output_size(h, kh, sh, pt, pb, ceil_mode)
    ow = _pool_output_size(w, kw, sw, pl, pr, ceil_mode)
    # extend padding so every window is in bounds (ceil_mode overhang)
    need_h = (oh - 1) * sh + kh - (h + pt)
    need_w = (ow - 1) * sw + kw - (w + pl)
    x = _pad_input(x, (pt, pl, max(pb, need_h), max(pr, need_w)), value=-np.inf)
    win = _windows(x, kh, kw, sh, sw)[:, :, :oh, :ow]
    return win.max(axis=(4, 5))


def _avgpool(x, attrs):
    kh, kw = _pair(attrs.get("kernel_shape"), None)
    sh, sw = _pair(attrs.get("strides"), (kh, kw))
    pads = attrs.get("pads")
    if pads is not None and any(int(p) for p in pads):
        raise GraphExecError("padded AveragePool not supported")
    win = _windows(x, kh, kw, sh, sw)
    return win.mean(axis=(4, 5))


def _batchnorm(x, scale, bias, mean, var, attrs):
    eps = float(attrs.get("epsilon", 1e-5))
    inv = scale / np.sqrt(var + eps)
    return x * inv[:, np.newaxis, np.newaxis] + (
        bias - mean * inv
    )[:, np.newaxis, np.newaxis]


def _gemm(a, b, c, attrs):
    alpha = float(attrs.get("alpha", 1.0))
    beta = float(attrs.get("beta", 1.0))
    if int(attrs.get("transA", 0)):
        a = a.T
    if int(attrs.get("transB", 0)):
        b = b.T
    out = alpha * (a @ b)
    if c is not None:
        out = out + beta * c
    return out


class GraphExecutor:
    """Run an ONNX graph on float32 NCHW batches."""

    def __init__(self, model):
        self.model = model
        self.graph = model.graph
        if len(self.graph.inputs) != 1:
            raise GraphExecError(
                f"expected exactly one graph input, found {len(self.graph.inputs)}"
            )
        self.input_name = self.graph.inputs[0][0]
        self.input_shape = self.graph.inputs[0][1]
        if not self.graph.outputs:
            raise GraphExecError("graph declares no outputs")
        self.output_name = self.graph.outputs[0]
        self.weights = {
            k: np.ascontiguousarray(v, dtype=np.float32)
            if v.dtype.kind == "f"
            else v
            for k, v in self.graph.initializers.items()
        }

    @classmethod
    def from_file(cls, path):
        return cls(load_model(path))

    def run(self, x):
        x = np.ascontiguousarray(x, dtype=np.float32)
        values = {self.input_name: x}

        def fetch(name):
            if name in values:
                return values[name]
            if name in self.weights:
                return self.weights[name]
            raise GraphExecError(f"missing tensor {name!r}")

        for node in self.graph.nodes:
            op = node.op_type
            ins = node.inputs
            if op == "Conv":
                b = fetch(ins[2]) if len(ins) > 2 else None
                out = _conv(fetch(ins[0]), fetch(ins[1]), b, node.attrs)
            elif op == "Relu":
                out = np.maximum(fetch(ins[0]), 0.0)
            elif op == "MaxPool":
                out = _maxpool(fetch(ins[0]), node.attrs)
            elif op == "AveragePool":
                out = _avgpool(fetch(ins[0]), node.attrs)
            elif op == "GlobalAveragePool":
                out = fetch(ins[0]).mean(axis=(2, 3), keepdims=True)
            elif op == "BatchNormalization":
                out = _batchnorm(
                    fetch(ins[0]), fetch(ins[1]), fetch(ins[2]),
                    fetch(ins[3]), fetch(ins[4]), node.attrs,
                )
            elif op == "Add":
                out = fetch(ins[0]) + fetch(ins[1])
            elif op == "Concat":
                axis = int(node.attrs.get("axis", 1))
                out = np.concatenate([fetch(i) for i in ins], axis=axis)
            elif op == "Flatten":
                axis = int(node.attrs.get("axis", 1))
                a = fetch(ins[0])
                out = a.reshape(int(np.prod(a.shape[:axis])), -1)
            elif op == "Reshape":
                a = fetch(ins[0])
                shape = [int(s) for s in fetch(ins[1])]
                shape = [a.shape[i] if s == 0 else s for i, s in enumerate(shape)]
                out = a.reshape(shape)
            elif op == "Gemm":
                c = fetch(ins[2]) if len(ins) > 2 else None
                out = _gemm(fetch(ins[0]), fetch(ins[1]), c, node.attrs)
            elif op == "Dropout":
                out = fetch(ins[0])
            else:
                raise GraphExecError(f"unsupported op {op!r} (node {node.name!r})")
            values[node.outputs[0]] = np.asarray(out, dtype=np.float32)

        if self.output_name not in values:
            raise GraphExecError(f"declared output {self.output_name!r} never produced")
        return values[self.output_name]
