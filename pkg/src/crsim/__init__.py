"""Agenda-based user simulation for evaluating conversational recommender agents."""

__version__ = "0.1.0"
