"""Lorenz Lab test suite"""
