"""Dual-branch molecular property prediction at desk scale.

The package pairs a graph-attention encoder over parsed molecular graphs
with a Transformer encoder over tokenized SMILES strings, fuses the two
branches through multi-head cross-attention, and trains the whole stack
with Adam on a minimal float64 reverse-mode autodiff engine.  Benchmark
aggregation (AUC-ROC, RMSE, min-max rank scores) lives in
:mod:`molfuse.metrics`.
"""

__version__ = "0.1.0"
