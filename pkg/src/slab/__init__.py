"""slab: spectral and WKB experiments for Schrodinger flows on a doubled cylinder."""

__version__ = "0.1.0"
