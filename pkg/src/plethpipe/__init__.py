"""Whole-body plethysmography analysis: ingest, breath metrics, comparisons."""

__version__ = "0.1.0"
