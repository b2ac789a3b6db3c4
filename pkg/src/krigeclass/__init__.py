"""Indicator-kriging soft classification for coarse multispectral imagery."""

__version__ = "0.1.0"
