"""Multi-talker decoding over HMM state posteriors."""
