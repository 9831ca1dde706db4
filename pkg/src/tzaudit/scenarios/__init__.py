"""Canned scenario configs shipped as JSON data files."""
