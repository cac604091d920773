"""Regimes, sampling, training loops and few-shot fine-tuning."""
