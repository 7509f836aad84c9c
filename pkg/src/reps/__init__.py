"""Rationale curation via tournament-style pairwise selection.

Subpackages cover the full pipeline: corpus data model (`domain`), pairwise
judges and scorers (`judges`, `remote`), the elimination tournament engine
(`tournament`), labeling regimes and controlled test sets (`datasets`), the
reference verifier (`verifier`), evaluation metrics (`metrics`), and
desk-scale simulation studies (`experiments`, `synth`, `simkernel`).
"""

__version__ = "0.1.0"
