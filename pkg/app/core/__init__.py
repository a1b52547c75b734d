"""
Package core
Gaussian-state sampling and covariance-matrix algebra
"""
