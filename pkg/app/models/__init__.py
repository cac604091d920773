"""Pydantic models for configs, manifests and reports."""
