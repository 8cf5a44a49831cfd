"""Build-aware incremental C-to-Rust migration toolkit.

The pipeline has three stages: mine a knowledge base of historical C/Rust
translation pairs, reconstruct a compilable Rust skeleton from a project's
real build trace, then translate function bodies bottom-up with retrieval
guidance and a compiler-feedback repair loop.
"""

__version__ = "0.1.0"
