"""
Command-line interface for film-growth.
"""

__all__: list[str] = []
