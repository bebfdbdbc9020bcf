"""Analysis, synthesis and simulation of switched networked control systems
under denial-of-service and deception attacks."""
from __future__ import annotations

__version__ = "0.1.0"
