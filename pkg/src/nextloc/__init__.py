"""Next-location prediction from LBSN check-in data.

Pipeline: check-in ingestion and filtering, trajectory graph construction,
hierarchical graph convolution for location/user embeddings, GRU + attention
sequence modeling over weekly sub-trajectories, multi-task training, and an
evaluation/analysis harness.
"""

__version__ = "0.1.0"
