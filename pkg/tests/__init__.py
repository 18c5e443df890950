"""
Test package for SPMP3D.
"""
