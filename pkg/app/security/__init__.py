"""
Package security
Entanglement check statistic and secrecy-capacity analysis
"""
