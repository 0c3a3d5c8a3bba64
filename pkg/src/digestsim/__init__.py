"""Deterministic slotted simulator for decentralized SGD protocols."""

__version__ = "0.1.0"

from . import baselines, data, digest, metrics, objectives, simcore, topology

__all__ = [
    "__version__",
    "baselines",
    "data",
    "digest",
    "metrics",
    "objectives",
    "simcore",
    "topology",
]
