# Combined p-values for the smallest k of L tests
__version__ = "1.0.0"
