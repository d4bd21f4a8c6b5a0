"""knoblab: actionable attribute knobs over a differentiable image-to-stress pipeline."""

__version__ = "0.1.0"
