"""
Run configuration, manifest and snapshot models.
"""

__all__: list[str] = []
