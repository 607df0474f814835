"""Grushin heat equation laboratory."""
