"""Simulation and drive compilation for a dual-sided transparent
polymer-stabilised LC waveguide display."""

__version__ = "0.1.0"
