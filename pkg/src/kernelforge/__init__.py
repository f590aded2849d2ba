"""kernelforge: a desk-scale harness for kernel-optimization agents.

Operator tasks, a simulated executor with a calibrated cost model, a
sandboxed tool-using environment, reward/metric plumbing, and the RL math
needed to train and evaluate agents against it.
"""

__version__ = "0.1.0"
