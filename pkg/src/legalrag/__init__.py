"""Retrieval-augmented few-shot prompting pipeline for legal answer-candidate classification."""

__version__ = "0.1.0"
