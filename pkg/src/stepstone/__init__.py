"""stepstone: Monte Carlo laboratory for a 1-d biased voter model with tracer
labels, its branching-coalescing duals (discrete and continuum), and the
Wright-Fisher SPDE limits, with duality identities as executable oracles."""

from .scaling import (
    ScalingFamily,
    LimitParams,
    DerivedRatios,
    derived_ratios,
    classify_regime,
    sqrt_family,
    deterministic_regime_family,
)
from .lattice import Torus
from .forward import (
    Configuration,
    DensityProfile,
    simulate,
    density_profiles,
    product_statistic,
)
from .eventlog import (
    Arrow,
    EventLog,
    generate_event_log,
    replay_forward,
    replay_dual,
    thin_selection,
)
from .dual import (
    OrderedDual,
    DualSample,
    apply_order_rules,
    simulate_dual,
    eval_F,
    eval_G,
)

__version__ = "0.1.0"

from . import experiments  # noqa: E402  (registers the experiment kinds)
from .harness import ExperimentSpec, run as run_experiment  # noqa: E402
