"""JSON scene files for the command-line driver.

A scene looks like::

    {
      "k": 1.0,
      "direction": [0, 0, 1],
      "polarization": [1, 0, 0],
      "shape": {"kind": "sphere", "a": 0.01},
      "density": 0.001,
      "domain": {"min": [0, 0, 0], "max": [1, 1, 1]},
      "probes": {"kind": "sphere", "radius": 1.5, "n_theta": 6, "n_phi": 12},
      "solver": {"method": "iterative", "tol": 1e-11},
      "output": "out"
    }

Polarization entries may be real numbers, ``[re, im]`` pairs or strings such
as ``"1+2j"``. Sections named after subcommands (``single_body``, ``reduce``,
``continuum``, ``design``, ``convergence``) carry their own options.
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .emcore import PlaneWave
from .ensemble import Box, DensityField
from .errors import ValidationError
from .gridio import read_grid
from .many_body import direction_grid
from .single_body import ParticleShape


class SceneError(ValidationError):
    """A scene file failed to parse or validate; ``where`` names the field or line."""

    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass
class Scene:
    k: float
    incident: PlaneWave
    shape: ParticleShape
    c0: float
    domain: Box
    density: DensityField | None
    probes: np.ndarray
    method: str = "iterative"
    tol: float = 1e-11
    output: str = "out"
    sections: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def a(self):
        return self.shape.a

    def section(self, name):
        return self.sections.get(name, {})


def _number(obj, where, positive=False):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise SceneError(where, f"expected a number, got {obj!r}")
    x = float(obj)
    if not np.isfinite(x):
        raise SceneError(where, "must be finite")
    if positive and x <= 0:
        raise SceneError(where, f"must be positive, got {x}")
    return x


def _vector(obj, where, n=3):
    if not isinstance(obj, (list, tuple)) or len(obj) != n:
        raise SceneError(where, f"expected a list of {n} numbers")
    return np.array([_number(v, f"{where}[{i}]") for i, v in enumerate(obj)])


def _complex(obj, where):
    if isinstance(obj, str):
        try:
            return complex(obj.replace(" ", ""))
        except ValueError:
            raise SceneError(where, f"cannot read {obj!r} as a complex number") from None
    if isinstance(obj, (list, tuple)) and len(obj) == 2:
        return complex(_number(obj[0], where), _number(obj[1], where))
    if isinstance(obj, dict):
        return complex(_number(obj.get("re", 0.0), where), _number(obj.get("im", 0.0), where))
    return complex(_number(obj, where))


def _polarization(obj, alpha):
    if not isinstance(obj, (list, tuple)) or len(obj) != 3:
        raise SceneError("polarization", "expected three (possibly complex) components")
    amp = np.array([_complex(v, f"polarization[{i}]") for i, v in enumerate(obj)])
    size = np.linalg.norm(amp)
    if size == 0:
        raise SceneError("polarization", "must be non-zero")
    along = np.dot(alpha, amp)
    tangential = amp - along * alpha
    if np.linalg.norm(tangential) <= 1e-12 * size:
        raise SceneError(
            "polarization",
            "violates transversality polarization . direction = 0: it is parallel to the "
            "incidence direction and has no tangential part",
        )
    if abs(along) > 1e-8 * size:
        warnings.warn(
            f"polarization projected onto the plane normal to the incidence direction "
            f"(removed component {abs(along):.3g})",
            stacklevel=3,
        )
    return tangential


def _shape(obj, raw):
    if obj is None:
        if "a" not in raw:
            raise SceneError("shape", "give a shape section or a top-level radius a")
        return ParticleShape.sphere(_number(raw["a"], "a", positive=True))
    if not isinstance(obj, dict):
        raise SceneError("shape", "expected an object")
    kind = obj.get("kind", "sphere")
    try:
        if kind == "sphere":
            a = obj.get("a", raw.get("a"))
            if a is None:
                raise SceneError("shape.a", "sphere needs a radius")
            return ParticleShape.sphere(_number(a, "shape.a", positive=True))
        if kind == "ellipsoid":
            axes = _vector(obj.get("semi_axes"), "shape.semi_axes")
            return ParticleShape.ellipsoid(*axes)
    except ValidationError as exc:
        if isinstance(exc, SceneError):
            raise
        raise SceneError("shape", str(exc)) from None
    raise SceneError("shape.kind", f"unsupported shape {kind!r} (sphere or ellipsoid)")


def _domain(obj):
    if obj is None:
        return Box.cube()
    if not isinstance(obj, dict):
        raise SceneError("domain", "expected {min: [...], max: [...]}")
    lo = _vector(obj.get("min"), "domain.min")
    hi = _vector(obj.get("max"), "domain.max")
    try:
        return Box(tuple(lo), tuple(hi))
    except ValidationError as exc:
        raise SceneError("domain", str(exc)) from None


def _density(obj, domain, base_dir):
    if obj is None:
        return None
    try:
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return DensityField.uniform(_number(obj, "density"), domain)
        if isinstance(obj, dict) and "value" in obj:
            return DensityField.uniform(_number(obj["value"], "density.value"), domain)
        if isinstance(obj, dict) and "grid" in obj:
            path = obj["grid"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            if not os.path.exists(path):
                raise SceneError("density.grid", f"file not found: {path}")
            box, values = read_grid(path)
            return DensityField(box, values=values)
    except SceneError:
        raise
    except ValidationError as exc:
        raise SceneError("density", str(exc)) from None
    raise SceneError("density", "expected a number, {value: x} or {grid: path}")


def _probes(obj, domain):
    if obj is None:
        obj = {"kind": "sphere"}
    if not isinstance(obj, dict):
        raise SceneError("probes", "expected an object")
    if "points" in obj:
        pts = obj["points"]
        if not isinstance(pts, list) or not pts:
            raise SceneError("probes.points", "expected a non-empty list of points")
        return np.array([_vector(p, f"probes.points[{i}]") for i, p in enumerate(pts)])
    kind = obj.get("kind", "sphere")
    if kind == "sphere":
        center = _vector(obj["center"], "probes.center") if "center" in obj else np.asarray(domain.center)
        radius = _number(obj.get("radius", 1.5 * float(np.max(domain.sides))), "probes.radius", positive=True)
        nt = int(_number(obj.get("n_theta", 6), "probes.n_theta", positive=True))
        npf = int(_number(obj.get("n_phi", 12), "probes.n_phi", positive=True))
        return center + radius * direction_grid(nt, npf)
    if kind == "grid":
        lo = _vector(obj.get("min"), "probes.min")
        hi = _vector(obj.get("max"), "probes.max")
        dims = [int(_number(v, "probes.dims", positive=True)) for v in obj.get("dims", [])]
        if len(dims) != 3:
            raise SceneError("probes.dims", "expected three positive integers")
        axes = [np.linspace(lo[i], hi[i], dims[i]) for i in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3, order="C")
    raise SceneError("probes.kind", f"unsupported probe layout {kind!r} (sphere, grid or points)")


SECTIONS = ("single_body", "many_body", "reduce", "continuum", "design", "convergence")


def parse_scene(text, base_dir=".") -> Scene:
    """Parse and validate a scene; raises SceneError naming the offending line or field."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    if not isinstance(raw, dict):
        raise SceneError("scene", "top level must be an object")
    if "k" not in raw:
        raise SceneError("k", "wavenumber is required")
    k = _number(raw["k"], "k", positive=True)
    alpha = _vector(raw.get("direction", [0.0, 0.0, 1.0]), "direction")
    norm = np.linalg.norm(alpha)
    if norm == 0:
        raise SceneError("direction", "must be non-zero")
    alpha = alpha / norm
    if "polarization" not in raw:
        raise SceneError("polarization", "is required")
    amp = _polarization(raw["polarization"], alpha)
    incident = PlaneWave(k, alpha, amp)
    shape = _shape(raw.get("shape"), raw)
    c0 = _number(raw["c0"], "c0", positive=True) if "c0" in raw else shape.c_D
    domain = _domain(raw.get("domain"))
    density = _density(raw.get("density"), domain, base_dir)
    if density is not None:
        domain = density.box
    probes = _probes(raw.get("probes"), domain)
    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise SceneError("solver", "expected an object")
    method = solver.get("method", "iterative")
    if method not in ("iterative", "direct"):
        raise SceneError("solver.method", f"must be 'iterative' or 'direct', got {method!r}")
    tol = _number(solver.get("tol", 1e-11), "solver.tol", positive=True)
    sections = {}
    for name in SECTIONS:
        sec = raw.get(name, raw.get(name.replace("_", "-"), {}))
        if not isinstance(sec, dict):
            raise SceneError(name, "expected an object")
        sections[name] = sec
    output = raw.get("output", "out")
    if not isinstance(output, str):
        raise SceneError("output", "expected a directory path")
    if not os.path.isabs(output):
        output = os.path.join(base_dir, output)
    return Scene(
        k=k,
        incident=incident,
        shape=shape,
        c0=c0,
        domain=domain,
        density=density,
        probes=probes,
        method=method,
        tol=tol,
        output=output,
        sections=sections,
        raw=raw,
    )
