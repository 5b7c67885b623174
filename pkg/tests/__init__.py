# Test suite for the conic geometry engine
