"""ONNX protobuf writer (wire format only, no protobuf dependency).

Covers the subset needed here: float32/int64 initializers with raw_data,
nodes with float/int/ints attributes, one graph input, one graph output,
opset import and metadata_props.
"""

import struct

import numpy as np


def varint(v):
    out = bytearray()
    while True:
        byte = v & 0x7F
        v >>= 7
        if v:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def tag(field_no, wire_type):
    return varint((field_no << 3) | wire_type)


def ld(field_no, payload):
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    return tag(field_no, 2) + varint(len(payload)) + payload


def vi(field_no, value):
    return tag(field_no, 0) + varint(value)


def f32(field_no, value):
    return tag(field_no, 5) + struct.pack("<f", float(value))


def tensor(name, arr):
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        data_type, dtype = 1, "<f4"
    else:
        data_type, dtype = 7, "<i8"
    parts = [vi(1, int(d)) for d in arr.shape]
    parts.append(vi(2, data_type))
    parts.append(ld(8, name))
    parts.append(ld(9, np.ascontiguousarray(arr, dtype=dtype).tobytes()))
    return b"".join(parts)


def attribute(name, value):
    body = ld(1, name)
    if isinstance(value, float):
        body += f32(2, value) + vi(20, 1)
    elif isinstance(value, int):
        body += vi(3, value) + vi(20, 2)
    elif isinstance(value, (list, tuple)):
        body += b"".join(vi(8, int(v)) for v in value) + vi(20, 7)
    else:
        raise TypeError(f"unsupported attribute value {value!r}")
    return body


def node(op_type, inputs, outputs, name="", **attrs):
    body = b"".join(ld(1, i) for i in inputs)
    body += b"".join(ld(2, o) for o in outputs)
    if name:
        body += ld(3, name)
    body += ld(4, op_type)
    body += b"".join(ld(5, attribute(k, v)) for k, v in sorted(attrs.items()))
    return body


def value_info(name, shape):
    dims = b"".join(ld(1, vi(1, int(d))) for d in shape)
    tensor_type = vi(1, 1) + ld(2, dims)  # elem_type = float32
    return ld(1, name) + ld(2, ld(1, tensor_type))


def graph(nodes, initializers, input_name, input_shape, output_name, name="g"):
    parts = [ld(1, n) for n in nodes]
    parts.append(ld(2, name))
    parts.extend(ld(5, tensor(k, v)) for k, v in initializers.items())
    parts.append(ld(11, value_info(input_name, input_shape)))
    parts.append(ld(12, value_info(output_name, [])))
    return b"".join(parts)


def model(graph_bytes, metadata=None, opset=13, ir_version=8):
    body = vi(1, ir_version)
    body += ld(7, graph_bytes)
    body += ld(8, vi(2, opset))  # opset_import { version }
    for key, value in sorted((metadata or {}).items()):
        body += ld(14, ld(1, key) + ld(2, value))
    return body
