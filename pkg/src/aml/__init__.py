"""Assignment maps, reference states and the positivity of reduced open-system dynamics."""

from .errors import *  # noqa: F401,F403
from .tensor_linalg import (INFINITE, LabeledOperator, Spectrum, SubsystemLabel, devectorize,
                            haar_unitary, hermitian_eig, identity, min_eigenvalue, operator,
                            partial_trace, permute, relative_entropy, tensor, trace_distance,
                            vectorize, von_neumann_entropy)
from .states import (DensityOperator, MarkovBlocks, MarkovStructure, conditional_mutual_information,
                     cq_state, ghz_state, is_markov, markov_state, maximally_entangled,
                     maximally_mixed, pure_state, random_density, validate_density)
from .assignment import (AssignmentBasis, AssignmentMap, OperatorSubspace, apply_assignment,
                         build_assignment, choi_of_assignment, classify_assignment,
                         consistency_check, cp_assignment_from_structure, independence_rank,
                         is_cp, kernel_component, positivity_falsifier, u_consistency_check)
from .dynamics import (ReferenceState, SuperOperator, build_reference, classify_dynamics,
                       contraction_probe, counterexample_search, markovianity_report,
                       operator_sum_decomposition, reduced_dynamics, steered_set)

__version__ = "0.1.0"
