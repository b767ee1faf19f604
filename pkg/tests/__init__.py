"""
Test suite for gr-jidds module
"""
