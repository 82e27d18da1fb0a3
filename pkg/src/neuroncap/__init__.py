"""Neuron captioning at desk scale.

An LSTM caption decoder over precomputed exemplar feature grids, with four
interchangeable attention mechanisms (additive, bilinear, scaled dot-product
self-attention, and their summed fusion), pointwise-mutual-information
reranking of beam candidates, and a BLEU / embedding-matching evaluation
harness.  Everything runs on a small float64 reverse-mode autodiff core so
gradients are finite-difference checkable end to end.
"""

__version__ = "0.1.0"
