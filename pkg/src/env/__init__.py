"""
Partially observable multi-room gridworld
"""
