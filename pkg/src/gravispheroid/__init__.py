"""Gravimetry toolkit: fields of buried spheroids and bar assemblies, pole
detection, sphere depth/mass estimates and box-constrained refinement."""

__version__ = "0.1.0"
