# Conic geometry engine: boundary manifolds, metrics, distances, quotients and LNE checks
