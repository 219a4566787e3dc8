"""Acoustic anomaly detection for machine sounds.

Pipeline: WAV ingest -> Mel spectrogram -> 64x64 patches rendered as RGB
images -> embeddings from a pretrained image classifier -> classical
anomaly models -> clip-level AUC evaluation.
"""

__version__ = "0.1.0"
