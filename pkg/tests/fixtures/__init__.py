"""Test fixtures and mock objects"""
