"""Logging helpers for run events."""
