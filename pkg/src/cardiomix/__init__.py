"""Desk-scale CMRI classification pipeline: CutMix/MixUp augmentation,
from-scratch classifiers, stratified k-fold metrics and attribution maps."""

__version__ = "0.1.0"
