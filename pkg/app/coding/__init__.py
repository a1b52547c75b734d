"""
Package coding
Toeplitz mask codec and Gaussian interval mapping
"""
