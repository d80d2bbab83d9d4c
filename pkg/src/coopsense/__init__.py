"""Decision fusion for cooperative spectrum sensing.

Optimal (Bayesian) and baseline fusion rules, a greedy approximation and a
counting-based pseudo-polynomial variant for the PU-constrained problem,
sensing-set selection, exact oracles and a Monte-Carlo slot simulator.
"""

from .constrained import (
    ConstrainedSolution,
    MovableItem,
    exact_constrained_bruteforce,
    exact_constrained_milp,
    greedy_constrained,
    hard_instance,
    is_boundary_case,
    knapsack_view,
    random_selection_constrained,
)
from .dp import (
    CountThresholdRule,
    JointCountTable,
    ScaledLogParams,
    build_joint_counts,
    greedy_dp,
    greedy_from_counts,
    scale_logs,
)
from .fusion import (
    BayesRule,
    DecisionRule,
    KofNRule,
    RuleEvaluation,
    TableRule,
    and_rule,
    bayes_decide,
    bayes_total,
    evaluate_baselines,
    evaluate_rule,
    k_of_n_rule,
    majority_rule,
    optimal_rule_bruteforce,
    or_rule,
    rule_from_bayes,
)
from .model import (
    BudgetExceededError,
    DimensionError,
    InfeasibleError,
    ObservationVector,
    ObservationWeights,
    SensorProfile,
    SensorSet,
    SystemParams,
    likelihood_active,
    likelihood_idle,
    load_instance,
    save_instance,
    weights,
)
from .selection import (
    SelectionResult,
    TimingParams,
    best_subset_exhaustive,
    choose_sensing_set,
    sfs_select,
    verify_monotonicity,
)
from .sim import SimSummary, SlotTrace, iter_slots, run_simulation

__version__ = "0.1.0"
