"""Hypernetwork-generated adapters for zero-shot cross-lingual transfer."""
