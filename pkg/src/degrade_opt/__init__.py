"""Maintenance-aware production scheduling under stochastic equipment degradation."""
from .instance import (Instance, InstanceError, builtin_instance, builtin_instances,
                       load_instance, save_instance)

__version__ = "0.1.0"

__all__ = [
    "Instance", "InstanceError", "builtin_instance", "builtin_instances",
    "load_instance", "save_instance",
]
