"""Min-sum message passing on grid MRFs with index-based backpropagation."""
from . import _threads  # noqa: F401  (sizes the numba pool before any kernel import)
from ._threads import get_threads, set_threads, threads
from .autodiff import (GradientSet, SoftHead, isgmr_backward, loss_and_gradients, soft_head_backward,
                       soft_head_forward, trwp_backward)
from .baselines import (meanfield_forward, meanfield_iterate_energy, sgm_forward, sgm_iterate_energy,
                        sgm_iterative)
from .grid import (CONNECTIVITIES, Direction, GridGraph, Scanline, Topology, build_direction_set,
                   build_topology, enumerate_scanlines, previous_node)
from .isgmr import isgmr_forward, isgmr_iterate_energy
from .potentials import (PairwiseFunction, Potentials, build_pairwise, constant_edge_weights, default_rho,
                         energy, gradient_edge_weights, make_potentials)
from .results import CostOutput, IndexStore, MessageField
from .trwp import trwp_forward, trwp_iterate_energy

__version__ = "0.1.0"
