"""Meshes, sign counting, constants, errors and problem-file parsing."""
