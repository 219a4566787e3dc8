"""Minimal ONNX model reader.

Parses the protobuf wire format directly (no protobuf dependency) for the
subset of the ONNX schema needed to run image-classifier feature
extractors: graph structure, node attributes, float32/int64 initializers
and tensor value-info shapes.
"""

from dataclasses import dataclass, field

import numpy as np


class OnnxError(Exception):
    pass


# --- protobuf wire format ---------------------------------------------------

def _read_varint(buf, pos):
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise OnnxError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise OnnxError("varint too long")


def _signed(value):
    # int64 fields are two's complement over 64 bits
    return value - (1 << 64) if value >= (1 << 63) else value


def iter_fields(buf):
    """Yield (field_number, wire_type, payload) for a serialized message.

    Payload is an int for varint/fixed fields and bytes for
    length-delimited fields.
    """
    pos = 0
    while pos < len(buf):
        tag, pos = _read_varint(buf, pos)
        field_no, wire_type = tag >> 3, tag & 0x7
        if wire_type == 0:
            value, pos = _read_varint(buf, pos)
        elif wire_type == 1:
            value = int.from_bytes(buf[pos : pos + 8], "little")
            pos += 8
        elif wire_type == 2:
            size, pos = _read_varint(buf, pos)
            value = buf[pos : pos + size]
            if len(value) != size:
                raise OnnxError("truncated length-delimited field")
            pos += size
        elif wire_type == 5:
            value = int.from_bytes(buf[pos : pos + 4], "little")
            pos += 4
        else:
            raise OnnxError(f"unsupported wire type {wire_type}")
        yield field_no, wire_type, value


def _packed_varints(buf):
    out = []
    pos = 0
    while pos < len(buf):
        v, pos = _read_varint(buf, pos)
        out.append(_signed(v))
    return out


# --- ONNX message subset ----------------------------------------------------

DT_FLOAT = 1
DT_INT64 = 7


@dataclass
class Attribute:
    name: str
    value: object


@dataclass
class Node:
    op_type: str
    inputs: list
    outputs: list
    name: str = ""
    attrs: dict = field(default_factory=dict)


@dataclass
class Graph:
    nodes: list
    initializers: dict  # name -> ndarray
    inputs: list  # (name, shape) for non-initializer inputs
    outputs: list  # names
    name: str = ""


@dataclass
class Model:
    graph: Graph
    ir_version: int = 0
    opset_version: int = 0
    metadata: dict = field(default_factory=dict)


def _parse_tensor(buf):
    dims, data_type, raw, floats, int64s, name = [], None, None, [], [], ""
    for fno, wt, val in iter_fields(buf):
        if fno == 1:
            if wt == 0:
                dims.append(_signed(val))
            else:
                dims.extend(_packed_varints(val))
        elif fno == 2:
            data_type = val
        elif fno == 4:
            floats.extend(np.frombuffer(val, dtype="<f4")) if wt == 2 else floats.append(
                np.frombuffer(val.to_bytes(4, "little"), dtype="<f4")[0]
            )
        elif fno == 7:
            if wt == 0:
                int64s.append(_signed(val))
            else:
                int64s.extend(_packed_varints(val))
        elif fno == 8:
            name = val.decode("utf-8")
        elif fno == 9:
            raw = val
    if data_type == DT_FLOAT:
        arr = (
            np.frombuffer(raw, dtype="<f4")
            if raw is not None
            else np.asarray(floats, dtype=np.float32)
        )
    elif data_type == DT_INT64:
        arr = (
            np.frombuffer(raw, dtype="<i8")
            if raw is not None
            else np.asarray(int64s, dtype=np.int64)
        )
    else:
        raise OnnxError(f"unsupported tensor data type {data_type} for {name!r}")
    return name, arr.reshape(dims or (arr.size,)).copy()


def _parse_attribute(buf):
    name, atype = "", None
    f_val = i_val = s_val = t_val = None
    floats, ints, strings = [], [], []
    for fno, wt, val in iter_fields(buf):
        if fno == 1:
            name = val.decode("utf-8")
        elif fno == 2:
            f_val = np.frombuffer(val.to_bytes(4, "little"), dtype="<f4")[0]
        elif fno == 3:
            i_val = _signed(val)
        elif fno == 4:
            s_val = val.decode("utf-8")
        elif fno == 5:
            t_val = _parse_tensor(val)[1]
        elif fno == 7:
            if wt == 2:
                floats.extend(np.frombuffer(val, dtype="<f4"))
            else:
                floats.append(np.frombuffer(val.to_bytes(4, "little"), dtype="<f4")[0])
        elif fno == 8:
            if wt == 2:
                ints.extend(_packed_varints(val))
            else:
                ints.append(_signed(val))
        elif fno == 9:
            strings.append(val.decode("utf-8"))
        elif fno == 20:
            atype = val
    for candidate, type_code in (
        (f_val, 1), (i_val, 2), (s_val, 3), (t_val, 4),
    ):
        if atype == type_code:
            return Attribute(name, candidate)
    if atype == 6 or (atype is None and floats):
        return Attribute(name, [float(f) for f in floats])
    if atype == 7 or (atype is None and ints):
        return Attribute(name, [int(i) for i in ints])
    if atype == 8 or (atype is None and strings):
        return Attribute(name, strings)
    # fall back to whichever singular value is present
    for candidate in (f_val, i_val, s_val, t_val):
        if candidate is not None:
            return Attribute(name, candidate)
    return Attribute(name, None)


def _parse_value_info(buf):
    name, shape = "", None
    for fno, _, val in iter_fields(buf):
        if fno == 1:
            name = val.decode("utf-8")
        elif fno == 2:
            for f2, _, v2 in iter_fields(val):
                if f2 == 1:  # tensor_type
                    for f3, _, v3 in iter_fields(v2):
                        if f3 == 2:  # shape
                            dims = []
                            for f4, _, v4 in iter_fields(v3):
                                if f4 == 1:  # dim
                                    dim_value = None
                                    for f5, _, v5 in iter_fields(v4):
                                        if f5 == 1:
                                            dim_value = _signed(v5)
                                    dims.append(dim_value)
                            shape = dims
    return name, shape


def _parse_node(buf):
    node = Node(op_type="", inputs=[], outputs=[])
    for fno, _, val in iter_fields(buf):
        if fno == 1:
            node.inputs.append(val.decode("utf-8"))
        elif fno == 2:
            node.outputs.append(val.decode("utf-8"))
        elif fno == 3:
            node.name = val.decode("utf-8")
        elif fno == 4:
            node.op_type = val.decode("utf-8")
        elif fno == 5:
            attr = _parse_attribute(val)
            node.attrs[attr.name] = attr.value
    return node


def _parse_graph(buf):
    graph = Graph(nodes=[], initializers={}, inputs=[], outputs=[])
    raw_inputs = []
    for fno, _, val in iter_fields(buf):
        if fno == 1:
            graph.nodes.append(_parse_node(val))
        elif fno == 2:
            graph.name = val.decode("utf-8")
        elif fno == 5:
            name, arr = _parse_tensor(val)
            graph.initializers[name] = arr
        elif fno == 11:
            raw_inputs.append(_parse_value_info(val))
        elif fno == 12:
            graph.outputs.append(_parse_value_info(val)[0])
    graph.inputs = [(n, s) for n, s in raw_inputs if n not in graph.initializers]
    return graph


def _parse_string_entry(buf):
    key = value = ""
    for fno, _, val in iter_fields(buf):
        if fno == 1:
            key = val.decode("utf-8")
        elif fno == 2:
            value = val.decode("utf-8")
    return key, value


def load_model(path):
    """Parse an ONNX file into the Model subset."""
    buf = open(path, "rb").read()
    model = Model(graph=None)
    try:
        for fno, _, val in iter_fields(buf):
            if fno == 1:
                model.ir_version = _signed(val)
            elif fno == 7:
                model.graph = _parse_graph(val)
            elif fno == 8:
                for f2, _, v2 in iter_fields(val):
                    if f2 == 2:
                        model.opset_version = _signed(v2)
            elif fno == 14:
                key, value = _parse_string_entry(val)
                model.metadata[key] = value
    except OnnxError as exc:
        raise OnnxError(f"{path}: {exc}") from exc
    if model.graph is None:
        raise OnnxError(f"{path}: no graph found (not an ONNX model?)")
    return model
