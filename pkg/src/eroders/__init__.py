"""Gal'perin rates, forcing sets and stable-eroder decisions for monotone 1-D cellular automata."""
