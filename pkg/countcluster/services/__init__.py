"""Guidance pipeline services."""
