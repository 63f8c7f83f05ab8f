#!/usr/bin/env python3
"""
SpecLab Application Package

Version: 1.0.0
Author: SpecLab Development Team
Description: Self-supervised spectral embedding laboratory for cross-date
             species classification
License: [To be determined]
"""

__version__ = "1.0.0"
__author__ = "SpecLab Development Team"
__description__ = "Inter-date Barlow-Twins pretraining versus reflectance for cross-date LDA"
