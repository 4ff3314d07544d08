"""Meshfree discrete-element and peridynamics engine with signed-distance
particle geometry."""

from .contact import ElasticContactParams, ViscoelasticContactParams, detect_contact, solve_contact_points
from .errors import SdfDemError
from .geometry import BoxShape, ConvexPolytopeShape, HalfSpaceShape, SphereShape
from .integration import StepPlan, advance_simulation
from .rigid_body import Gravity, RigidBody, ViscousDamping
from .simulation import Simulation

__version__ = "0.1.0"

__all__ = [
    "BoxShape",
    "ConvexPolytopeShape",
    "ElasticContactParams",
    "Gravity",
    "HalfSpaceShape",
    "RigidBody",
    "SdfDemError",
    "Simulation",
    "SphereShape",
    "StepPlan",
    "ViscoelasticContactParams",
    "ViscousDamping",
    "advance_simulation",
    "detect_contact",
    "solve_contact_points",
]
