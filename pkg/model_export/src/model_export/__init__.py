"""One-shot exporter that turns the four feature-extractor networks into
portable ONNX graphs with fixed tap points, plus a sidecar recording the
weight checksum, tap name and output dimension."""

from .export import EXPORTABLE, ExportError, ExportSpec, export_model

__all__ = ["EXPORTABLE", "ExportError", "ExportSpec", "export_model"]
