"""Point-set image retrieval and semi-automatic annotation.

New images are matched against an annotated corpus with Hausdorff-family
distances over extracted edge-point sets; a reviewer picks a match and
validates the propagated keywords.
"""

__version__ = "0.1.0"
