"""General utility helpers."""
