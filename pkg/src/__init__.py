"""PPO and Lagrangian PPO for a simulated arm reaching past an obstacle"""
__version__ = "1.0.0"
