"""Generic finite element machinery driven by incremental potential densities."""
