"""SketchBetween: sketch-guided in-betweening for sprite animation."""

__version__ = "0.1.0"
