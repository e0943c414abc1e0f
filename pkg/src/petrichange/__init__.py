"""Reconfigurable Petri nets for bottom-up change management of service orchestrations."""
from .petri import PLAIN, Marking, Net, build_net, enabled, fire, fire_sequence, incidence_matrix, state_equation

__all__ = [
    "PLAIN",
    "Marking",
    "Net",
    "build_net",
    "enabled",
    "fire",
    "fire_sequence",
    "incidence_matrix",
    "state_equation",
]
__version__ = "0.1.0"
