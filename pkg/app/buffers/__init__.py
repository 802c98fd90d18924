# Buffers
