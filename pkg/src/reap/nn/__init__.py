"""Numpy LeNet-style network with fake-quant and approximate-MAC forward modes."""
