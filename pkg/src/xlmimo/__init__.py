"""Cell-free XL-MIMO uplink simulator and multi-agent RL power-control lab."""

from . import channel, dlpc, env, harness, marl, se, seeding

__version__ = "0.1.0"

__all__ = ["channel", "se", "env", "marl", "dlpc", "harness", "seeding", "__version__"]
