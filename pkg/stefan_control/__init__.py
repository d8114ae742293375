"""Inverse one-phase Stefan problem solver package."""
