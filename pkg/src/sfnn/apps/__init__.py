"""Financial applications built on the fixed-point networks."""
