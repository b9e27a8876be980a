"""Construction of filter instances from flat parameter mappings.

The CLI flags and the HTTP service's JSON filter descriptors share this
vocabulary: a method name plus the parameters the paper-style experiments
use (lambda, sigma, tau, time, ...). Construction returns the filtered
image together with the matrix-free state transition.
"""

from dataclasses import dataclass

from .diffusion import DiffusionConfig, Diffusivity, evolve
from .grid import Image
from .kernels import (
    BilateralConfig,
    NLMeansConfig,
    bilateral_S,
    bilateral_apply,
    nlmeans_S,
    nlmeans_apply,
)
from .linsolve import LinearOperator

__all__ = ["FilterInstance", "build_smoothing_filter", "diffusivity_from_name", "SMOOTHING_METHODS"]

SMOOTHING_METHODS = ("hd", "nld", "eed", "bilateral", "nlmeans")

_DIFFUSIVITY_ALIASES = {
    "charbonnier": "charbonnier",
    "ch": "charbonnier",
    "pm": "rational_perona_malik",
    "perona_malik": "rational_perona_malik",
    "rational_perona_malik": "rational_perona_malik",
    "we": "weickert",
    "weickert": "weickert",
}


def diffusivity_from_name(name, lam):
    kind = _DIFFUSIVITY_ALIASES.get(str(name).lower())
    if kind is None:
        raise ValueError(f"unknown diffusivity {name!r}")
    return Diffusivity(kind, float(lam))


@dataclass
class FilterInstance:
    """A configured filter: its output on the image and its transition."""

    method: str
    params: dict
    filtered: Image
    operator: LinearOperator

    def summary(self):
        parts = [f"{k}={v}" for k, v in sorted(self.params.items())]
        return f"{self.method}({', '.join(parts)})"


def _steps_from(params):
    if params.get("steps") is not None:
        steps = int(params["steps"])
    else:
        time = float(params.get("time") or 0.0)
        tau = float(params.get("tau") or 5.0)
        steps = int(round(time / tau)) if time > 0 else 0
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    return steps


def build_smoothing_filter(image, params):
    """Build one of hd/nld/eed/bilateral/nlmeans on the given image.

    Unknown methods or invalid parameter values raise ValueError.
    """
    params = dict(params)
    method = str(params.pop("method", "")).lower()
    if method not in SMOOTHING_METHODS:
        raise ValueError(f"unknown filter method {method!r}")

    if method in ("hd", "nld", "eed"):
        tau = float(params.get("tau") or 5.0)
        steps = _steps_from(params)
        public = {"tau": tau, "steps": steps}
        if method == "hd":
            cfg = DiffusionConfig(model="homogeneous", tau=tau, steps=steps)
        else:
            diffusivity = diffusivity_from_name(
                params.get("diffusivity", "charbonnier"), params.get("lambda", 1.0)
            )
            cfg = DiffusionConfig(
                model="isotropic_nonlinear" if method == "nld" else "eed",
                diffusivity=diffusivity,
                sigma=float(params.get("sigma", 0.0)),
                tau=tau,
                steps=steps,
            )
            public.update(diffusivity=diffusivity.kind, **{"lambda": diffusivity.lam},
                          sigma=cfg.sigma)
        filtered, frozen = evolve(image, cfg)
        op = frozen.as_operator()
    elif method == "bilateral":
        cfg = BilateralConfig(
            sigma_t=float(params.get("sigma_t", 30.0)),
            sigma_s=float(params.get("sigma_s", 10.0)),
            window_radius=int(params.get("window_radius", 0)),
        )
        public = {"sigma_t": cfg.sigma_t, "sigma_s": cfg.sigma_s,
                  "window_radius": cfg.window_radius}
        filtered = bilateral_apply(image, cfg)
        op = bilateral_S(image, cfg)
    else:
        cfg = NLMeansConfig(
            sigma=float(params.get("sigma", 10.0)),
            patch_radius=int(params.get("patch_radius", 3)),
            search_radius=int(params.get("search_radius", 0)),
        )
        public = {"sigma": cfg.sigma, "patch_radius": cfg.patch_radius,
                  "search_radius": cfg.search_radius}
        filtered = nlmeans_apply(image, cfg)
        op = nlmeans_S(image, cfg)

    return FilterInstance(method, public, filtered, op)
