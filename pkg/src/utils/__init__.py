"""
Configuration parsing and report writers
"""
