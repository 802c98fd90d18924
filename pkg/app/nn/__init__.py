# Numerical core
