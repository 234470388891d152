# Command-line front end: manifests, CSV output, benchmarks and self-tests.
