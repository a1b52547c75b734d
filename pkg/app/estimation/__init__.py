"""
Package estimation
Maximum-likelihood channel estimation and its CSV input surface
"""
