"""Benchmark problems: builders, generators, serializers, oracles."""

from .charging import (ChargingInstance, analytic_charging_equilibrium,
                       build_charging_game, charging_demand,
                       default_charging_instance,
                       generate_charging_instances)
from .conditions import ConditionsReport, check_existence_conditions
from .dispatch import (DispatchInstance, build_dispatch_game,
                       default_dispatch_instance, even_targets,
                       generate_dispatch_instances)
from .io import parse_instance, parse_instance_text, serialize_instance

__all__ = [
    "ChargingInstance", "DispatchInstance", "ConditionsReport",
    "analytic_charging_equilibrium", "build_charging_game",
    "build_dispatch_game", "charging_demand", "check_existence_conditions",
    "default_charging_instance", "default_dispatch_instance", "even_targets",
    "generate_charging_instances", "generate_dispatch_instances",
    "parse_instance", "parse_instance_text", "serialize_instance",
]
