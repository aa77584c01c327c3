"""Source root.

Packages:
- film_growth.core: spectral basis, noise, integrator, stabilizer, statistics
- film_growth.models: run configuration and snapshot encoding
- film_growth.workflows: experiment pipelines dispatched by the CLI
- film_growth.cli: command-line entry point
"""
