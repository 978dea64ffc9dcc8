"""
Token Turing Machine
Token-summarisation memory read/write around a processing unit, with a
numpy autodiff core, synthetic tasks, baselines and a FLOP analyzer.
"""

__version__ = "1.0.0"
