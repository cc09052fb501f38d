from .params import ElastoplasticParams, hardening
from .radial_return import (
    USING_COMPILED_KERNEL,
    consistent_tangent,
    elastic_stress,
    return_map,
    return_map_batch,
)
from .state import PointState, StateBatch

__all__ = [
    "ElastoplasticParams",
    "hardening",
    "PointState",
    "StateBatch",
    "elastic_stress",
    "return_map",
    "return_map_batch",
    "consistent_tangent",
    "USING_COMPILED_KERNEL",
]
