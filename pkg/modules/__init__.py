# Numerical modules
