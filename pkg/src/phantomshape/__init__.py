"""Shape derivatives of elliptic problems in phantom-field flow charts."""

__version__ = "0.1.0"
