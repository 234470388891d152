# This file ensures that the core directory is treated as a package.
