"""Experiment configuration: a flat text format with dotted keys.

Grammar (one entry per line):
    key.subkey = value
    # comment / blank lines ignored
Values: int, float, bare word, quoted string, or comma-separated list of
those.  No environment variables are consulted.

Recognized keys:
    mesh.kind           cube | ball | layered_ball | file
    mesh.divisions      cube divisions
    mesh.side           cube side [m]
    mesh.radius         ball radius [m]
    mesh.radii          layered_ball radii [m], ascending list
    mesh.refinement     generator refinement level
    mesh.path           mesh file (gmsh .msh or plain-tet)
    material.eps_r      per-region relative permittivity list
    material.sigma      per-region conductivity list [S/m]
    material.rho        per-region mass density list [kg/m^3] (optional)
    excitation.kind     plane_wave | dipole | dipole_scattered
    excitation.e0       plane-wave polarization [V/m]
    excitation.khat     propagation direction
    excitation.p        dipole moment [A m]
    excitation.r0       dipole position [m]
    frequency           excitation frequency [Hz] (single value)
    sweep.frequencies   frequency sweep axis [Hz]
    sweep.refinements   refinement sweep axis
    sweep.contrasts     conductivity-ratio sweep axis
    formulations        subset of standard, loop_star, reg_gram, reg_diag
    solver.method       direct | iterative
    solver.tol          iterative tolerance
    solver.maxit        iterative iteration cap
    bounds.alpha        tightness parameter in (0, 1)
    seed                RNG seed for randomized estimators
    output.dir          output directory
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

_KNOWN_FORMULATIONS = ("standard", "loop_star", "reg_gram", "reg_diag")


class ConfigError(ValueError):
    pass


def _parse_scalar(tok):
    tok = tok.strip()
    if len(tok) >= 2 and tok[0] == tok[-1] and tok[0] in "'\"":
        return tok[1:-1]
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        pass
    return tok


def parse_config_text(text):
    """Parse dotted-key text into a flat {key: value} dict."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        if "," in val:
            out[key] = [_parse_scalar(t) for t in val.split(",") if t.strip()]
        else:
            out[key] = _parse_scalar(val)
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int = 1234
    output_dir: str = "."

    @classmethod
    def from_file(cls, path):
        with open(path) as f:
            raw = parse_config_text(f.read())
        cfg = cls(raw)
        cfg.seed = int(raw.get("seed", 1234))
        cfg.output_dir = str(raw.get("output.dir", "."))
        cfg.validate()
        return cfg

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def _aslist(self, key, default=None):
        v = self.raw.get(key, default)
        if v is None:
            return None
        return list(np.atleast_1d(v).astype(float))

    def validate(self):
        r = self.raw
        kind = r.get("mesh.kind")
        if kind not in ("cube", "ball", "layered_ball", "file"):
            raise ConfigError(f"mesh.kind must be one of cube/ball/"
                              f"layered_ball/file, got {kind!r}")
        sigma = self._aslist("material.sigma")
        eps_r = self._aslist("material.eps_r")
        if sigma is None or eps_r is None:
            raise ConfigError("material.eps_r and material.sigma required")
        if len(sigma) != len(eps_r):
            raise ConfigError("material tables must have equal length")
        if any(s < 0 for s in sigma):
            raise ConfigError("negative conductivity")
        if any(e <= 0 for e in eps_r):
            raise ConfigError("non-positive permittivity")
        for form in self.formulations():
            if form not in _KNOWN_FORMULATIONS:
                raise ConfigError(f"unknown formulation {form!r}")
        axes = [k for k in ("sweep.frequencies", "sweep.refinements",
                            "sweep.contrasts") if k in r]
        if len(axes) > 1:
            raise ConfigError(f"at most one sweep axis, got {axes}")
        freqs = self._aslist("sweep.frequencies") or \
            self._aslist("frequency", [1.0])
        if any(f <= 0 for f in freqs):
            raise ConfigError("frequencies must be positive")
        self._check_regions(kind, len(sigma))

    def _check_regions(self, kind, n_regions):
        if kind == "layered_ball":
            radii = self._aslist("mesh.radii")
            if radii is None:
                raise ConfigError("layered_ball needs mesh.radii")
            if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
                raise ConfigError("mesh.radii must be ascending positive")
            if len(radii) != n_regions:
                raise ConfigError("one material region per layer required")

    # ----- builders -----

    def build_mesh(self, refinement=None):
        from .mesh import cube_mesh, ball_mesh, layered_ball_mesh, load_mesh
        r = self.raw
        kind = r["mesh.kind"]
        if kind == "cube":
            return cube_mesh(int(r.get("mesh.divisions", 2)),
                             float(r.get("mesh.side", 1.0)))
        if kind == "ball":
            return ball_mesh(float(r.get("mesh.radius", 0.1)),
                             int(refinement if refinement is not None
                                 else r.get("mesh.refinement", 1)))
        if kind == "layered_ball":
            return layered_ball_mesh(self._aslist("mesh.radii"),
                                     int(refinement if refinement is not None
                                         else r.get("mesh.refinement", 1)))
        return load_mesh(str(r["mesh.path"]))

    def build_material(self, contrast=None):
        from .em_basis import Material
        sigma = np.asarray(self._aslist("material.sigma"))
        if contrast is not None:
            # contrast sweeps scale the maximum-conductivity regions
            base = sigma.min()
            sigma = np.where(sigma == sigma.max(), base * contrast, sigma)
        return Material(self._aslist("material.eps_r"), sigma,
                        self._aslist("material.rho"))

    def build_excitation(self, mesh, mat, ops=None):
        from .assembly import (assemble_plane_wave, assemble_dipole,
                               assemble_dipole_scattered, assemble_operators,
                               QuadSpec)
        r = self.raw
        kind = r.get("excitation.kind", "plane_wave")
        if kind == "plane_wave":
            return assemble_plane_wave(
                mesh, mat, np.asarray(self._aslist("excitation.e0",
                                                   [1.0, 0.0, 0.0])),
                np.asarray(self._aslist("excitation.khat", [0.0, 0.0, 1.0])))
        p = np.asarray(self._aslist("excitation.p", [0.0, 0.0, 1.0]))
        r0 = np.asarray(self._aslist("excitation.r0", [0.0, 0.0, 0.0]))
        if kind == "dipole":
            return assemble_dipole(mesh, mat, p=p, r0=r0)
        if kind == "dipole_scattered":
            if ops is None:
                ops = assemble_operators(mesh, mat, QuadSpec())
            return assemble_dipole_scattered(ops, p, r0)
        raise ConfigError(f"unknown excitation.kind {kind!r}")

    def formulations(self):
        v = self.raw.get("formulations", ["reg_gram"])
        if isinstance(v, str):
            v = [v]
        return [str(x) for x in v]

    def frequencies(self):
        return self._aslist("sweep.frequencies") or \
            self._aslist("frequency", [1.0])

    def sweep_axis(self):
        """(name, values) of the configured sweep axis."""
        r = self.raw
        if "sweep.frequencies" in r:
            return "frequency", self._aslist("sweep.frequencies")
        if "sweep.refinements" in r:
            return "refinement", [int(x) for x in
                                  np.atleast_1d(r["sweep.refinements"])]
        if "sweep.contrasts" in r:
            return "contrast", self._aslist("sweep.contrasts")
        return "frequency", self.frequencies()
