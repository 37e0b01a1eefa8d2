"""Newton's method on computational graphs in time linear in the graph size.

The Newton step of a function expressed as a DAG of smooth node functions is
obtained from the KKT system of the equivalent constrained problem, which is
solved by message passing over a tree decomposition of the graph.
"""
from .autodiff import dense_hessian, gradient, hessian_vector, reverse_adjoints
from .compgraph import CompGraph, EvalTrace, ExtraConstraint, NodeDecl, build_graph, evaluate, moralize
from .errors import *  # noqa: F401,F403
from .hypertree import Hypergraph, TreeDecomposition, decompose, validate
from .mpqp import StructuredQP, dense_kkt_solve, solve
from .newton import SolverConfig, SqpState, newton_step, sqp_solve
from .problems import (ProblemInstance, make_banded_chain, make_lqr_chain, make_problem,
                       make_random_dag, make_rosenbrock, make_spring_damper)

__version__ = "0.1.0"
