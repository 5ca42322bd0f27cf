"""Rotor-based shell kinematics: geometric algebra, surface geometry,
deformation analysis, energy scalings, and a synthetic stereo measurement
pipeline, served over HTTP with a thin CLI client."""

__version__ = "0.1.0"
