"""Numerical tolerances shared across modules."""

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    # certification
    strong_margin: float = 0.02
    lip_tol: float = 1e-3
    residual_floor: float = 0.01
    # fixed points
    fp_tol: float = 1e-10
    cluster_rel: float = 1e-6
    # inversion
    inv_tol: float = 1e-9
    dd_floor: float = 1e-6
    # linear algebra / geometry
    sigma_min_rel: float = 1e-8
    tol_zero: float = 1e-9

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValueError(f"tolerance {f.name} must be positive, got {value!r}")

    def updated(self, **overrides):
        return replace(self, **overrides)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT = Tolerances()
