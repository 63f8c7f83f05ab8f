#!/usr/bin/env python3
"""
SpecLab - Main Entry Point

Version: 1.0.0
Author: SpecLab Development Team
Description: Cross-date self-supervised hyperspectral species classification lab
License: [To be determined]

Usage:
    python main.py sweep --config configs/smoke.json --out runs/smoke
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

# Load environment variables
load_dotenv()

from app.cli.commands import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
