#!/usr/bin/env python3
"""
SpecLab Version Tracking Module

Version: 1.0.0
Author: SpecLab Development Team
Description: Tool and file-format version constants
License: [To be determined]
"""

from dataclasses import dataclass
from typing import Any


@dataclass(frozen=True)
class VersionInfo:
    """Version information container"""

    major: int
    minor: int
    patch: int

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"


TOOL_VERSION = VersionInfo(1, 0, 0)

# On-disk format versions; bump on any layout change
CUBE_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
CONFIG_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1


def get_version() -> str:
    """Get current version string"""
    return str(TOOL_VERSION)


def get_version_info() -> dict[str, Any]:
    """Get version information embedded in reports"""
    return {
        "version": get_version(),
        "cube_format": CUBE_FORMAT_VERSION,
        "checkpoint_format": CHECKPOINT_FORMAT_VERSION,
        "config_schema": CONFIG_SCHEMA_VERSION,
        "report_schema": REPORT_SCHEMA_VERSION,
    }


VERSION = get_version()
