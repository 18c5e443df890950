"""
Utils module tests.
"""