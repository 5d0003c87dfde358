"""
PPO updates, experience collection and the training loop
"""
