"""Design and simulation toolkit for multilayer superwavelength atomic arrays.

Three independent routes to the coupling efficiency r0 of a stacked
2D-lattice light interface:

* `latstack.interface` -- analytic 1D model (interlayer kernel, loss rates,
  resonant-spacing curves, multi-shell scans, four-layer designs);
* `latstack.dipole`    -- full coupled-dipole scattering of finite stacks
  under Gaussian-beam drive with mode-overlap reflectivity;
* `latstack.rays`      -- geometrical-optics multiple-scattering engine for
  finite layers and the infinite-layer channel sum.

`latstack.lattice` generates geometries and diffraction orders;
`latstack.harness` runs configuration-driven sweeps with deterministic
CSV/JSON artifacts (CLI: `latstack`).

Units: lengths in optical wavelengths (k = 2*pi), rates and detunings in
single-atom linewidths.
"""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    DiffractionOrder,
    StackSpec,
    WindowTooSmallError,
    build_positions,
    enumerate_orders,
    gamma0,
    quarter_cell_shifts,
    single_layer,
    two_layer,
)
from .interface import (  # noqa: F401
    InterfaceParams,
    NotAnEigenmodeError,
    ResonantCurve,
    design_multilayer_shifts,
    interlayer_kernel,
    multilayer_params,
    multiorder_scan,
    resonant_lattice_constant,
    resonant_spacing_curves,
    resonant_two_layer,
    two_layer_params,
)
from .dipole import (  # noqa: F401
    BeamSpec,
    DipoleProblem,
    ReflectivityResult,
    ResonanceWindowError,
    assemble_and_solve,
    find_resonance,
    gaussian_mode_field,
    greens_coupling,
    reflectivity_map_numeric,
    reflectivity_overlap,
)
from .rays import (  # noqa: F401
    LayerChannels,
    RayGrid,
    finite_ray_channel_reflectivity,
    finite_ray_reflectivity,
    infinite_stack_reflectivity,
    layer_channel_matrix,
    scaling_fit,
)
