"""Mixture-of-Thought logical reasoning toolkit.

A deterministic truth-table entailment engine plus the data curation,
inference and evaluation machinery built around three reasoning modalities
(natural language, code, truth table).
"""

__version__ = "0.1.0"
