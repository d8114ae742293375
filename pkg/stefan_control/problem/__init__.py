"""Problem data, coefficient expressions and problem files."""
