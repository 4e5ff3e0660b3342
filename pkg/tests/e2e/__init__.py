"""
E2E Tests

This directory contains end-to-end tests that drive the forge CLI through whole experiment runs.
"""
