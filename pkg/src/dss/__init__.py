"""Dynamically stable system (DSS) adversarial-example detection.

A classifier under test is wrapped in a disrupt/restore loop: each loop
zeros the least-salient pixels, refills them from retained context, and
records how far the image and the classifier's logits drift from the
original input. Adversarial inputs destabilize under this loop; clean and
merely noisy inputs do not. A logistic detector over the recorded
trajectory norms separates the two.
"""

__version__ = "0.1.0"
