"""Multi-agent RL for heating-setpoint control of a five-zone office building."""

__version__ = "0.1.0"
