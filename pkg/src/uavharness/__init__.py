"""Headless multi-UAV simulation test harness."""

__version__ = "0.1.0"
