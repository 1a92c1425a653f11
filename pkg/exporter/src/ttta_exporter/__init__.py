"""Exporter bridging image datasets to the ttta toolkit's file formats.

Runs a feature extractor over an image folder and writes per-image feature
tensors plus a manifest the core CLI consumes; also converts organized
3-channel coordinate TIFFs into point-map tensors. The boundary with the
core is purely format-mediated: this package emits the files, the core
reads them.
"""

__version__ = "0.1.0"
