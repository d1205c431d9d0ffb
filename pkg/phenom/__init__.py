"""phenom: masked-autoencoder featurization and benchmarking of microscopy screens."""

__version__ = "0.1.0"
