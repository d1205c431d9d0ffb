"""Test suites for phenom."""
