"""
Evaluation rollouts, return profiles, visit distributions and reports
"""
