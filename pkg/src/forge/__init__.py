"""forge: data toolkit for long-context continual pretraining.

Pipeline: ingest sharded domain-tagged corpora, measure length/domain
distributions, build budgeted length-upsampled mixtures, pack fixed-length
training chunks, plan training cost, and generate/score needle-in-a-haystack
retrieval grids.
"""

__version__ = "0.1.0"
