"""Trace-driven simulator of SSD-internal interconnects, including the Venice scout-reserved mesh."""

from .flash import FlashGeometry, FlashOp, FlashTimingConfig, PRESETS
from .interconnect import Arch, build_topology, parse_arch
from .metrics import PowerModel, RunReport, emit_report
from .routing import RoutingMode, reserve_path
from .ssd import IoRequest, SimConfig, SsdSimulator, compute_transfer_latency, simulate

__all__ = [
    "Arch", "FlashGeometry", "FlashOp", "FlashTimingConfig", "IoRequest", "PRESETS", "PowerModel",
    "RoutingMode", "RunReport", "SimConfig", "SsdSimulator", "build_topology", "compute_transfer_latency",
    "emit_report", "parse_arch", "reserve_path", "simulate",
]

__version__ = "0.1.0"
