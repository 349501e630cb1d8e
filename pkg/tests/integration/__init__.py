"""Integration tests for the Lorenz Lab job runner."""
