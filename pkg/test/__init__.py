"""
Package test
Tests for every simulator module and the qsdc command line
"""
