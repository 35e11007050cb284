"""Pipeline constants and reference tables."""
