"""Simulated PM-fiber Mach-Zehnder interferometer with a circle-crosspoint
polarization controller.

Submodules: :mod:`polarization` (Stokes math), :mod:`fiber` (Jones chains and
Poincare circles), :mod:`plant` (the interferometer), :mod:`dsp` (visibility
estimation), :mod:`controller` (trial-and-error optimizer) and
:mod:`scenarios` / :mod:`cli` (experiments).
"""

from .controller import CCCController, Command, ControllerState, Mode, step_width
from .dsp import DspPipeline, Frame, VisibilitySample, visibility
from .fiber import (ConnectorJoint, FiberSegment, OpticalPath, StretcherActuator, circle_fit,
                    circle_intersections, propagate, sweep_trajectory)
from .plant import InterferometerPlant, PlantConfig
from .polarization import (EllipseAngles, PlaneWaveField, StokesVector, overlap_visibility,
                           sphere_angle, stokes_from_field)

__version__ = "0.1.0"
