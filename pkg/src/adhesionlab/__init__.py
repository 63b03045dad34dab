"""adhesionlab: interacting-particle and PDE simulation on the periodic torus."""

__version__ = "0.1.0"

from .torus import (  # noqa: F401
    KernelSpec,
    make_kernel,
    wrap,
    torus_displacement,
    base_kernel_eval,
    base_kernel_grad,
    scaled_kernel_eval,
    scaled_kernel_grad,
    kernel_norm,
    validate_kernel,
)
from .measures import (  # noqa: F401
    DensityField,
    ParticleConfig,
    field_distance,
    mollify,
    mollify_field,
    sample_iid,
)
from .models import (  # noqa: F401
    AdhesionVelocityModel,
    EnergyModel,
    build_energy_model,
    build_velocity_model,
    validate_energy_model,
    validate_velocity_model,
)
from .sde import (  # noqa: F401
    RunRecord,
    SimState,
    default_dt,
    default_grid,
    simulate,
    simulate_batch,
)
from .pde import (  # noqa: F401
    PdeInstabilityError,
    PdeRun,
    gronwall_gap,
    solve_local,
    solve_nonlocal,
)
from .diagnostics import (  # noqa: F401
    check_energy_dissipation,
    check_l2_energy_inequality,
    entropy,
    field_energy,
    fisher_information,
    grad_energy_norm,
)
from .harness import (  # noqa: F401
    StudyConfig,
    fluctuation_scaling_study,
    moment_bound_check,
    run_convergence_study,
)
