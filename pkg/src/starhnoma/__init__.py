"""Dual-mode smart-surface hybrid-NOMA downlink simulator."""

__version__ = "0.1.0"

from .config import SystemConfig, load_config, make_config  # noqa: F401
from .channel import ChannelSet, synthesize_channels  # noqa: F401
from .pairing import ClusterPlan, plan_clusters  # noqa: F401
