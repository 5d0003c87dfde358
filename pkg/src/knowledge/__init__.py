"""
Knowledge layer: instance and type graphs, activation and the recommender
"""
