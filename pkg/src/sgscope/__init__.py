"""Query-driven discovery of interesting subgraphs in social media property graphs."""

from .graph import EdgeKind, NodeKind, PropertyGraph

__all__ = ["EdgeKind", "NodeKind", "PropertyGraph"]
__version__ = "0.1.0"
