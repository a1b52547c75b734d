"""
Package protocol
End-to-end Alice/Bob session over the simulated multiplexed channel
"""
