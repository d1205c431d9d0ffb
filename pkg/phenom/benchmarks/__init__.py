"""Benchmarks: known-relationship recall, retrieval and feature regression."""
