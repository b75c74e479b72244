"""Quarter-car active suspension controlled by a DDPG agent."""

__version__ = "0.1.0"
