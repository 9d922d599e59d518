"""Parameter presets shared by the CLI, its help text and the tests.

``outdoor`` places cameras on a horizontal plane; ``indoor`` uses a full 3D grid.
"""

from lens_forge.placement import PLANAR, VOLUMETRIC
from lens_forge.volume import DEFAULT_RV, DEFAULT_T_SIGMA

PRESETS = {
    "outdoor": dict(r_v=DEFAULT_RV, t_sigma=DEFAULT_T_SIGMA, d_max=8.0, d_sigma=1.0, e_max=1.0,
                    r_0=1, sigma_r=1, theta=15.0, mode=PLANAR),
    "indoor": dict(r_v=DEFAULT_RV, t_sigma=DEFAULT_T_SIGMA, d_max=0.5, d_sigma=0.2, e_max=0.2,
                   r_0=1, sigma_r=1, theta=20.0, mode=VOLUMETRIC),
}
DEFAULT_PRESET = "outdoor"

# renderer sample counts: large outdoor scenes vs small indoor ones
SAMPLING = {"outdoor": (256, 256), "indoor": (128, 128)}

DEFAULT_RATIOS = (0.0, 1.0, 2.0, 5.0, 10.0)

# thresholds applied by ``ablate --check``
CHECK_MAX_RATIO_FRACTION = 0.6


def preset(name):
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def describe(key):
    """Help-text fragment listing a parameter's value under every preset."""
    return ", ".join(f"{name} {PRESETS[name][key]}" for name in PRESETS)
