"""
Knowledge-guided hierarchical reinforcement learning in room-structured gridworlds
"""

__version__ = '0.1.0'
