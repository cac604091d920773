"""Metrics, zero-shot evaluation grids and comparison reports."""
