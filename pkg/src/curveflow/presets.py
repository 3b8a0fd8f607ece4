"""Built-in initial curves and their companion run parameters.

Each preset bundles a closed parametric curve (positively oriented) with the
solver parameters used for the corresponding reference computation.  The
formulas are transcribed verbatim; initial spline curves are obtained by L2
projection onto the requested space.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, pi, sin

import numpy as np

__all__ = ["Preset", "PRESETS", "preset_names", "get_preset"]


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    curve: callable  # u in [0, 1) -> point in the plane
    defaults: dict


def _willmore_star(u: float) -> np.ndarray:
    f = 2 * pi * u + sin(4 * pi * u)
    r = 1 + 0.2 * sin(f) + 0.4 * cos(f)
    th = -(10 / pi) * (cos(2 * pi * u) + cos(6 * pi * u) / 9)
    return np.array([r * cos(th), r * sin(th)])


def _willmore_ellipse(u: float) -> np.ndarray:
    th = 2 * pi * u - 0.4 * sin(4 * pi * u)
    return np.array([2 * cos(th), sin(th)])


_R0, _R1, _EPS = 0.5, 1.5, 0.1
_TH0, _TH1 = 3 * pi / 4, pi


def _lobed_star(u: float) -> np.ndarray:
    f = 2 * pi * u + 0.5 * sin(4 * pi * u)
    r = (_R1 - _R0) * (cos(f) + 1) / 2 + _R0 + _EPS * sin(8 * pi * u)
    th = (_TH0 + _TH1) * (sin(2 * pi * u) + 1) / 2 - _TH1
    return np.array([r * cos(th), r * sin(th)])


def _helfrich_star(u: float) -> np.ndarray:
    return _lobed_star(u - sin(2 * pi * u) / (3 * pi))


PRESETS = {
    "willmore_star": Preset(
        name="willmore_star",
        description="star-shaped curve for the (unconstrained) Willmore flow",
        curve=_willmore_star,
        defaults=dict(
            scheme="willmore_tv",
            n_basis=25,
            degree=3,
            k0=4.0,
            alpha0=10.0,
            t_end=0.1,
            tau_cap=1e-4,
        ),
    ),
    "willmore_ellipse": Preset(
        name="willmore_ellipse",
        description="2:1 ellipse with nonuniform parametrization, for the "
        "dissipation-multiplier study (uniform time steps)",
        curve=_willmore_ellipse,
        defaults=dict(
            scheme="willmore_tv",
            n_basis=20,
            degree=3,
            k0=1.0,
            alpha0=1.0,
            t_end=4.0,
            uniform_dt=0.01,
        ),
    ),
    "apw_star": Preset(
        name="apw_star",
        description="lobed curve for the area-preserving Willmore flow",
        curve=_lobed_star,
        defaults=dict(
            scheme="apw_tv",
            n_basis=30,
            degree=3,
            k0=0.0,
            alpha0=1.0,
            t_end=4.0,
            tau_cap=4.0 / 1000.0,
        ),
    ),
    "helfrich_star": Preset(
        name="helfrich_star",
        description="reparametrized lobed curve for the Helfrich flow",
        curve=_helfrich_star,
        defaults=dict(
            scheme="helfrich_tv",
            n_basis=30,
            degree=3,
            k0=0.0,
            alpha0=1.0,
            t_end=2.0,
            tau_cap=2.0 / 2000.0,
        ),
    ),
}


def preset_names():
    return tuple(PRESETS)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(PRESETS)}"
        ) from None
