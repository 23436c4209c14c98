"""Planar Ising model via order-disorder observables and s-embeddings."""

from .errors import (BoundaryError, CriticalityError, DegenerateLineError,
                     DegenerateSpinorError, DomainError, EmbeddingError,
                     GeometryError, InputError, NonIntegrableError, ShapeError,
                     SheetError, SizeError)
from .planar_map import (BoundaryArc, Cell, Corner, DualPair, PlanarMap,
                         build_dual_pair, build_map, load_graph, map_from_json,
                         map_to_json, save_graph)

__version__ = "0.1.0"
