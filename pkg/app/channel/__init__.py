"""
Package channel
Fiber and detector noise model, eavesdropper tap and OAM subchannel multiplexing
"""
