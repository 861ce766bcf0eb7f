"""Curious subgoal agent laboratory.

A GAN transition model drives a curiosity reward, a subgoal generator
proposes interpretable (observation cell, tile value) goals, and a
goal-conditioned navigator pursues them on procedurally generated
Door & Key gridworlds, trained by a V-trace actor-critic.
"""

from . import agent, autodiff, baselines, config, gridworld, learner, nn, \
    toy, transition_gan, vtrace

__all__ = ["agent", "autodiff", "baselines", "config", "gridworld",
           "learner", "nn", "toy", "transition_gan", "vtrace"]
__version__ = "0.1.0"
