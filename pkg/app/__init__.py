# RiCL Simulator
