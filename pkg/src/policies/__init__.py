"""
Network definitions and the per-variant policy repository
"""
