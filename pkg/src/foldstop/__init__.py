"""Early stopping of k-fold cross-validation during hyperparameter search.

The package bundles everything needed to study when it pays off to abandon a
configuration before all of its cross-validation folds have been evaluated:
conditional search spaces, stratified splitters, small from-scratch learners,
the stopping policies themselves, a budgeted scheduler (live and simulated),
and post-hoc analysis of the resulting trial logs.
"""

__version__ = "0.1.0"
