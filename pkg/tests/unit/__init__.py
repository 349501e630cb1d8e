"""Unit tests for Lorenz Lab"""
