"""
Core module tests.
"""