"""Exact decision procedures for lumping states of discrete Bayesian networks."""

from .errors import *  # noqa: F401,F403
from .graph import Dag, d_separates, markov_equivalent, relatives, skeleton_and_immoralities, structural_profile
from .lumping import Lumping, class_mass, lumped_cpd, pushforward
from .model import BayesNet, JointTable, conditional, factorizes_over, joint, marginal, with_initial
from .report import CheckReport, Verdict

__version__ = "0.1.0"
