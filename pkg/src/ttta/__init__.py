"""Toolkit for refining per-pixel anomaly scores into binary segmentation masks.

Core pipeline: mine sparse pseudo-labels from a score map, train a linear SVM
on the corresponding dense features at test time, and predict a binary mask.
Also ships the mu + c*sigma threshold baseline, a memory-bank scorer, and
pixel-level evaluation metrics.
"""

__version__ = "0.1.0"
