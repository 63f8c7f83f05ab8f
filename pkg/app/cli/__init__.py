"""
SpecLab command line package
"""

from app.cli.commands import build_parser, main

__all__ = ["build_parser", "main"]
