"""Learned path following: reward shaping, follower environment and DDPG training."""
