"""clinfed: federated clinical data integration engine.

Three-layer integrated data model (data / metadata / semantics) with a
metadata-driven record store, a medical-concept ontology supporting semantic
query enhancement and information-content similarity, and a multi-node
federation gateway with person-centric merging.
"""

__version__ = "0.1.0"
