"""Reporting utilities: result tables, run manifests and the markdown run report."""
