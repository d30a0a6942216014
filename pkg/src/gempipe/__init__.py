"""gempipe: an end-to-end generalized entity matching pipeline.

Ingest heterogeneous entity collections, block candidate pairs, inject
domain knowledge into long text, label pairs through an HTTP service,
train a structure-aware transformer matcher, and explain its decisions.
"""

__version__ = "0.1.0"
