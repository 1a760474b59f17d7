"""Discrete-event simulator for CXL Linked Memory Buffer (LMB) device memory extension."""

__version__ = "0.1.0"
