"""Heavy-tailed policy search toolkit.

Policy families with tunable tail index, a random-horizon unbiased policy
gradient estimator, desk-scale benchmark environments, a block-sum tail-index
estimator for gradient noise, and Monte Carlo machinery for Levy-driven
exit-time and transition-time scaling laws.
"""

from heavypg.stable_random import SeededStream, StableSpec

__all__ = ["SeededStream", "StableSpec"]
__version__ = "0.1.0"
