"""Verification runtime: parses an exported graph back from its bytes
and executes it with numpy. Used to prove, before a file is published,
that what was serialized computes the same tap activations as the source
network."""

import numpy as np


class RuntimeError_(Exception):
    pass


# --- wire-format reader -----------------------------------------------------

def _read_varint(buf, pos):
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise RuntimeError_("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _fields(buf):
    pos = 0
    while pos < len(buf):
        key, pos = _read_varint(buf, pos)
        field_no, wire_type = key >> 3, key & 0x7
        if wire_type == 0:
            value, pos = _read_varint(buf, pos)
        elif wire_type == 2:
            size, pos = _read_varint(buf, pos)
            value = buf[pos : pos + size]
            if len(value) != size:
                raise RuntimeError_("truncated field")
            pos += size
        elif wire_type == 5:
            value = int.from_bytes(buf[pos : pos + 4], "little")
            pos += 4
        elif wire_type == 1:
            value = int.from_bytes(buf[pos : pos + 8], "little")
            pos += 8
        else:
            raise RuntimeError_(f"wire type {wire_type} not handled")
        yield field_no, wire_type, value


def _parse_tensor(buf):
    dims, data_type, raw, name = [], None, b"", ""
    for fno, _, val in _fields(buf):
        if fno == 1:
            dims.append(val)
        elif fno == 2:
            data_type = val
        elif fno == 8:
            name = val.decode("utf-8")
        elif fno == 9:
            raw = val
    dtype = {1: "<f4", 7: "<i8"}.get(data_type)
    if dtype is None:
        raise RuntimeError_(f"tensor {name!r}: data type {data_type} not handled")
    return name, np.frombuffer(raw, dtype=dtype).reshape(dims).copy()


def _parse_attr(buf):
    name, atype = "", None
    f_val = i_val = None
    ints = []
    for fno, wt, val in _fields(buf):
        if fno == 1:
            name = val.decode("utf-8")
        elif fno == 2:
            f_val = np.frombuffer(val.to_bytes(4, "little"), dtype="<f4")[0]
        elif fno == 3:
            i_val = val
        elif fno == 8:
            ints.append(val)
        elif fno == 20:
            atype = val
    if atype == 1:
        return name, float(f_val)
    if atype == 2:
        return name, int(i_val)
    if atype == 7:
        return name, [int(i) for i in ints]
    raise RuntimeError_(f"attribute {name!r}: type {atype} not handled")


def _parse_node(buf):
    inputs, outputs, op_type, attrs = [], [], "", {}
    for fno, _, val in _fields(buf):
        if fno == 1:
            inputs.append(val.decode("utf-8"))
        elif fno == 2:
            outputs.append(val.decode("utf-8"))
        elif fno == 4:
            op_type = val.decode("utf-8")
        elif fno == 5:
            k, v = _parse_attr(val)
            attrs[k] = v
    return op_type, inputs, outputs, attrs


def _input_name(buf):
    for fno, _, val in _fields(buf):
        if fno == 1:
            return val.decode("utf-8")
    raise RuntimeError_("unnamed value_info")


def parse_graph(data):
    """Return (nodes, initializers, input_name, output_name, metadata)."""
    graph_buf = None
    metadata = {}
    for fno, _, val in _fields(data):
        if fno == 7:
            graph_buf = val
        elif fno == 14:
            entry = dict(
                (f, v.decode("utf-8")) for f, _, v in _fields(val) if f in (1, 2)
            )
            metadata[entry.get(1, "")] = entry.get(2, "")
    if graph_buf is None:
        raise RuntimeError_("no graph in model")
    nodes, inits, in_names, out_name = [], {}, [], None
    for fno, _, val in _fields(graph_buf):
        if fno == 1:
            nodes.append(_parse_node(val))
        elif fno == 5:
            name, arr = _parse_tensor(val)
            inits[name] = arr
        elif fno == 11:
            in_names.append(_input_name(val))
        elif fno == 12:
            out_name = _input_name(val)
    real_inputs = [n for n in in_names if n not in inits]
    if len(real_inputs) != 1 or out_name is None:
        raise RuntimeError_("expected one graph input and one output")
    return nodes, inits, real_inputs[0], out_name, metadata


# --- numpy execution --------------------------------------------------------

def _win(x, kh, kw, sh, sw):
    view = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return view[:, :, ::sh, ::sw]


def _pad(x, pads, value=0.0):
    t, l, b, r = pads
    if not (t or l or b or r):
        return x
    return np.pad(x, ((0, 0), (0, 0), (t, b), (l, r)), constant_values=value)


def _run_conv(x, w, b, attrs):
    sh, sw = attrs.get("strides", [1, 1])
    pads = attrs.get("pads", [0, 0, 0, 0])
    x = _pad(x, pads)
    kh, kw = w.shape[2], w.shape[3]
    n, c, h, wd = x.shape
    oh, ow = (h - kh) // sh + 1, (wd - kw) // sw + 1
    cols = _win(x, kh, kw, sh, sw).transpose(0, 2, 3, 1, 4, 5)
    cols = cols.reshape(n * oh * ow, c * kh * kw)
    out = cols @ w.reshape(w.shape[0], -1).T
    if b is not None:
        out += b
    return out.reshape(n, oh, ow, w.shape[0]).transpose(0, 3, 1, 2)


def _run_maxpool(x, attrs):
    kh, kw = attrs["kernel_shape"]
    sh, sw = attrs.get("strides", [kh, kw])
    pt, pl, pb, pr = attrs.get("pads", [0, 0, 0, 0])
    ceil_mode = attrs.get("ceil_mode", 0)
    n, c, h, w = x.shape
    div = (lambda a, s: -(-a // s)) if ceil_mode else (lambda a, s: a // s)
    oh = div(h + pt + pb - kh, sh) + 1
    ow = div(w + pl + pr - kw, sw) + 1
    need_h = (oh - 1) * sh + kh - (h + pt)
    need_w = (ow - 1) * sw + kw - (w + pl)
    x = _pad(x, (pt, pl, max(pb, need_h), max(pr, need_w)), value=-np.inf)
    return _win(x, kh, kw, sh, sw)[:, :, :oh, :ow].max(axis=(4, 5))


def _run_avgpool(x, attrs):
    kh, kw = attrs["kernel_shape"]
    sh, sw = attrs.get("strides", [kh, kw])
    return _win(x, kh, kw, sh, sw).mean(axis=(4, 5))


def run_graph(data, x):
    """Execute model bytes on a float32 NCHW batch; returns the output."""
    nodes, inits, input_name, output_name, _ = parse_graph(data)
    values = {input_name: np.ascontiguousarray(x, dtype=np.float32)}

    def get(name):
        if name in values:
            return values[name]
        if name in inits:
            return inits[name]
        raise RuntimeError_(f"tensor {name!r} unavailable")

    for op, ins, outs, attrs in nodes:
        if op == "Conv":
            out = _run_conv(get(ins[0]), get(ins[1]),
                            get(ins[2]) if len(ins) > 2 else None, attrs)
        elif op == "Relu":
            out = np.maximum(get(ins[0]), 0.0)
        elif op == "MaxPool":
            out = _run_maxpool(get(ins[0]), attrs)
        elif op == "AveragePool":
            out = _run_avgpool(get(ins[0]), attrs)
        elif op == "GlobalAveragePool":
            out = get(ins[0]).mean(axis=(2, 3), keepdims=True)
        elif op == "BatchNormalization":
            scale, bias, mean, var = (get(i) for i in ins[1:5])
            eps = attrs.get("epsilon", 1e-5)
            inv = scale / np.sqrt(var + eps)
            out = get(ins[0]) * inv[:, None, None] + (bias - mean * inv)[:, None, None]
        elif op == "Add":
            out = get(ins[0]) + get(ins[1])
        elif op == "Concat":
            out = np.concatenate([get(i) for i in ins], axis=attrs.get("axis", 1))
        elif op == "Flatten":
            a = get(ins[0])
            out = a.reshape(a.shape[0], -1)
        elif op == "Gemm":
            a, b = get(ins[0]), get(ins[1])
            if attrs.get("transB", 0):
                b = b.T
            out = a @ b
            if len(ins) > 2:
                out = out + get(ins[2])
        else:
            raise RuntimeError_(f"op {op!r} not handled")
        values[outs[0]] = np.asarray(out, dtype=np.float32)

    if output_name not in values:
        raise RuntimeError_(f"output {output_name!r} never produced")
    return values[output_name]
