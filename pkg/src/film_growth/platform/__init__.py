"""
Execution platform helpers (worker pool).
"""
