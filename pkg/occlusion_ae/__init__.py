"""Occlusion auto-encoder: self-supervised point-cloud pretraining on a tape-based numpy autodiff."""

__version__ = "0.1.0"
