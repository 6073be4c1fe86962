"""Cost-guided diffusion local planner for 2D navigation."""

__version__ = "0.1.0"
