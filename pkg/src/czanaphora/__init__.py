"""Czech pronominal anaphora resolution: dataset tooling, metric, baseline and prompting harness."""

__version__ = "0.1.0"
