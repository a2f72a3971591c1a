"""Perceptual quality toolkit for tabulated BRDFs.

Pipeline: MERL-convention table I/O and half/diff coordinates
(:mod:`brdfnqm.merl`, :mod:`brdfnqm.geometry`), analytic synthesis
(:mod:`brdfnqm.synth`), angular subsampling (:mod:`brdfnqm.sampling`),
perceptual preprocessing (:mod:`brdfnqm.preprocess`), JOD pseudo-labelling
(:mod:`brdfnqm.jod`), the neural quality metric (:mod:`brdfnqm.nn`),
baseline BRDF-space metrics (:mod:`brdfnqm.baselines`), and rank
correlation reporting (:mod:`brdfnqm.evaluate`).
"""

__version__ = "0.1.0"
