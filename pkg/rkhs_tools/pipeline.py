"""Stage orchestration for ``certify_rkhs.py``.

Each stage writes its artifacts and a ``stage_<name>.json`` report into the
output directory; ``write_certificate`` assembles the reports of every stage
present into ``certificate.json``. Later stages read earlier artifacts and
raise ``StageMissing`` when they are absent or belong to another config.
"""
import os
import math
import logging
from functools import cached_property

import numpy as np
import pandas as pd

from rkhs_tools import __version__
from rkhs_tools.errors import CoverError, GateFailure, StageMissing
from rkhs_tools.frames import (
    VectorSystem,
    almost_orthogonal_riesz,
    almost_tight_frame,
    bessel_bound,
    biorthogonal_system,
    canonical_dual,
    coefficient_norms,
    dual_frame_molecules,
    frame_bounds,
    interpolate,
    interpolation_nodes,
    interpolation_norm,
    kernel_sample_distance,
    kernel_samples,
    molecule_certify,
    orthonormalize,
    probe_region,
    riesz_bounds,
    tight_frame_molecules,
)
from rkhs_tools.group import AFFINE, NeighborhoodSpec, affine_box, box, polynomial_weight
from rkhs_tools.pointset import (
    DisjointCover,
    PointFamily,
    disjoint_cover,
    is_dense,
    near_uniform_set,
    relative_separation,
    uniformity,
)
from rkhs_tools.rkhs import KernelCertificate, certify_kernel
from rkhs_tools.scenarios import (
    Scenario,
    affine_lattice,
    affine_lattice_cell,
    covering_affine_lattice,
    jittered_lattice,
    lattice_cell,
    square_lattice,
)
from utils.config_utils import RunConfig
from utils.fs_utils import (
    config_hash,
    read_columns,
    read_csv,
    read_json,
    write_columns,
    write_csv,
    write_json,
)
from utils.report_utils import summary_lines, write_summary_workbook

STAGE_ORDER = ("certify-kernel", "build-points", "build-frame", "build-riesz", "certify-molecules", "interpolate")
CERTIFICATE = "certificate.json"
SUMMARY = "certificate_summary.xlsx"


def gate(name: str, passed: bool, measured=None, limit=None, detail: str = "", warn: bool = False) -> dict:
    status = "PASS" if passed else ("WARN" if warn else "FAIL")
    return {"gate": name, "status": status, "measured": measured, "limit": limit, "detail": detail}


def kernel_gates(cert: KernelCertificate) -> list[dict]:
    return [
        gate("certify_kernel.bd", cert.bd.passed, cert.bd.alpha, cert.bd.floor),
        gate("certify_kernel.loc", cert.loc.passed, cert.loc.growth_ratio, cert.loc.limit),
        gate("certify_kernel.wuc", cert.wuc.passed, cert.wuc.relative[-1], cert.wuc.tol),
    ]


def neighborhood_from_dict(data: dict) -> NeighborhoodSpec:
    closed = data.get("closed", [False, False])
    return NeighborhoodSpec(
        lower=tuple(data["lower"]),
        upper=tuple(data["upper"]),
        closed_lower=bool(closed[0]),
        closed_upper=bool(closed[1]),
        log_scale=bool(data.get("log_scale", False)),
        mirror=bool(data.get("mirror", False)),
        symmetrize=bool(data.get("symmetrize", False)),
        label=data.get("label", "U"),
    )


class CertificationPipeline:
    def __init__(self, config: RunConfig, output_dir: str | None = None):
        self.config = config
        self.output_dir = output_dir or config.output_dir
        os.makedirs(self.output_dir, exist_ok=True)
        self.logger = logging.getLogger(__name__)
        self.config_dict = config.canonical()
        self.config_hash = config_hash(self.config_dict, __version__)
        self._kernel_certificate = None
        self._points = None

    @cached_property
    def scenario(self) -> Scenario:
        return Scenario(self.config.scenario)

    @property
    def weight(self):
        exponent = self.config.weight_exponent
        return polynomial_weight(self.scenario.group, exponent) if exponent > 0 else None

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    # -- stage bookkeeping -------------------------------------------------

    def _save_stage(self, stage: str, report: dict, gates: list[dict]) -> dict:
        data = {
            "stage": stage,
            "config_hash": self.config_hash,
            "window": self.scenario.grid.describe(),
            "tolerances": self.config.tolerances,
            "gates": gates,
            "report": report,
        }
        write_json(self.path(f"stage_{stage}.json"), data)
        failed = [g["gate"] for g in gates if g["status"] == "FAIL"]
        if failed:
            self.logger.warning("Stage %s finished with failing gates: %s", stage, ", ".join(failed))
        else:
            self.logger.info("Stage %s passed (%d gates)", stage, len(gates))
        return data

    def _load_stage(self, stage: str) -> dict:
        path = self.path(f"stage_{stage}.json")
        data = read_json(path, stage)
        if data.get("config_hash") != self.config_hash:
            raise StageMissing(stage, path, f"{path} was written under config {str(data.get('config_hash'))[:12]}, "
                                            f"current config is {self.config_hash[:12]}")
        return data

    def _guarded(self, stage: str, build):
        """Run ``build(gates)``; a raised gate failure is recorded before it propagates."""
        gates: list[dict] = []
        try:
            report = build(gates)
        except GateFailure as exc:
            gates.append(gate(exc.gate, False, exc.measured, exc.limit, str(exc)))
            self._save_stage(stage, {"error": str(exc)}, gates)
            raise
        return self._save_stage(stage, report, gates)

    # -- certify-kernel ----------------------------------------------------

    def certify_kernel(self) -> dict:
        def build(gates):
            s = self.scenario
            tol = self.config.tolerances
            cert = certify_kernel(s.kernel, s.grid, self.weight, wuc_tol=tol["wuc"], loc_growth=tol["loc_growth"])
            self._kernel_certificate = cert
            write_csv(cert.theta.to_frame(), self.path("kernel_envelope.csv"))
            write_csv(cert.wuc.to_frame(), self.path("wuc_profile.csv"))
            write_csv(cert.loc.growth_frame(), self.path("loc_growth.csv"))
            gates.extend(kernel_gates(cert))
            return cert.to_dict()

        return self._guarded("certify-kernel", build)

    @property
    def kernel_certificate(self):
        if self._kernel_certificate is None:
            self._load_stage("certify-kernel")
            s = self.scenario
            tol = self.config.tolerances
            self.logger.info("Re-evaluating kernel certificate for %s", s.kernel.label)
            self._kernel_certificate = certify_kernel(s.kernel, s.grid, self.weight, wuc_tol=tol["wuc"],
                                                      loc_growth=tol["loc_growth"])
        cert = self._kernel_certificate
        if not cert.passed:
            failing = next(g for g in kernel_gates(cert) if g["status"] == "FAIL")
            raise GateFailure(failing["gate"], failing["measured"], failing["limit"],
                              f"{cert.kernel_label} has no passing kernel certificate")
        return cert

    # -- build-points ------------------------------------------------------

    def _directive_points(self):
        """Family, neighborhood U and (for near-uniform sets) the construction cover."""
        s = self.scenario
        g = s.group
        spec = s.spec
        params = {k: v for k, v in self.config.points.items() if k != "kind"}
        kind = self.config.points["kind"]
        extra: dict = {}
        if kind == "lattice" and g.id == AFFINE:
            family = covering_affine_lattice(params["a"], params["b"], s.grid)
            return family, affine_lattice_cell(params["a"], params["b"]), None, extra
        if kind == "lattice":
            h = params["spacing"]
            family = square_lattice(g, h, params.get("extent", spec.window))
            return family, lattice_cell(h, g.dim), None, extra
        if kind == "jittered":
            h, jitter = params["spacing"], params.get("jitter", 0.0)
            family = jittered_lattice(g, h, params.get("extent", spec.window), jitter, self.config.seed)
            return family, lattice_cell(h * (1 + 2 * jitter), g.dim), None, extra
        if kind == "near_uniform":
            u = self._u_box(params)
            result = near_uniform_set(u, params["epsilon"], s.grid, seed=self.config.seed)
            extra["near_uniform"] = result.to_dict()
            return result.family, u, result.cover, extra
        frame = pd.read_csv(params["path"])
        family = PointFamily.from_frame(g, frame, label=os.path.basename(params["path"]))
        return family, self._u_box(params), None, extra

    def _u_box(self, params: dict) -> NeighborhoodSpec:
        g = self.scenario.group
        radius = params.get("u_radius", 1.0)
        if g.id == AFFINE:
            return affine_box(radius, params.get("u_log_radius", 0.5), symmetrize=False, label="U")
        return box(radius, g.dim, label="U")

    def build_points(self) -> dict:
        def build(gates):
            self._load_stage("certify-kernel")
            s = self.scenario
            family, u, cover, extra = self._directive_points()
            density = is_dense(family, u, s.grid)
            if not density:
                raise GateFailure("build_points.density", len(density.uncovered), 0, f"{family.label} is not U-dense")
            gates.append(gate("build_points.density", True, 0, 0))
            cover = cover or disjoint_cover(family, u, s.grid)
            if self.config.points["kind"] in ("lattice", "jittered") and np.any(cover.measures <= 0):
                keep = cover.measures > 0
                self.logger.info("Dropping %d members whose cells hold no grid node", int(np.count_nonzero(~keep)))
                family = PointFamily(family.group, family.points[keep], label=family.label)
                cover = disjoint_cover(family, u, s.grid)
            uni = uniformity(family, u, s.grid, seed=self.config.seed, extra_covers=(cover,))
            rel = relative_separation(family, s.group.q_neighborhood, s.grid)
            write_csv(family.to_frame(), self.path("points.csv"))
            write_csv(cover.to_frame(), self.path("cover.csv"))
            self._points = (family, u, cover)
            return {
                "points": len(family),
                "label": family.label,
                "digest": family.digest(),
                "rel": rel,
                "u": u.to_dict(),
                "cover_ratio": cover.ratio,
                "cover_hash": cover.cover_hash(),
                "uniformity": uni.to_dict(),
                **extra,
            }

        return self._guarded("build-points", build)

    def load_points(self) -> tuple[PointFamily, NeighborhoodSpec, DisjointCover]:
        if self._points is None:
            report = self._load_stage("build-points")["report"]
            s = self.scenario
            family = PointFamily.from_frame(s.group, read_csv(self.path("points.csv"), "build-points"),
                                            label=report["label"])
            u = neighborhood_from_dict(report["u"])
            assignment = read_csv(self.path("cover.csv"), "build-points")["member"].to_numpy()
            measures = np.bincount(assignment, weights=s.grid.weights, minlength=len(family))
            cover = DisjointCover(family, u, s.grid, assignment, measures)
            if cover.cover_hash() != report["cover_hash"]:
                raise CoverError("cover.csv does not match the build-points report")
            self._points = (family, u, cover)
        return self._points

    # -- build-frame -------------------------------------------------------

    def _save_system(self, name: str, system: VectorSystem, in_space: bool):
        write_columns(self.path(name), {"kind": system.kind, "label": system.label, "in_space": in_space},
                      centers=system.centers, expansion=system.expansion, index=system.index.points)

    def load_system(self, name: str, stage: str) -> tuple[VectorSystem, bool]:
        header, arrays = read_columns(self.path(name), stage)
        s = self.scenario
        index = PointFamily(s.group, arrays["index"], label="Lambda")
        system = VectorSystem(s.kernel, arrays["centers"], arrays["expansion"], index, header["kind"], header["label"])
        return system, bool(header["in_space"])

    def build_frame(self) -> dict:
        def build(gates):
            s = self.scenario
            cfg = self.config.frame
            tol = self.config.tolerances
            mol = self.config.molecules
            mode = cfg["mode"]
            cert = self.kernel_certificate
            family, u, cover = self.load_points()
            common = dict(delta=cfg["delta"], gate=cfg["gate"], w=self.weight, radius=mol["radius"],
                          threshold=mol["threshold"], seed=self.config.seed)
            out = {"mode": mode, "space": s.space.describe()}
            built = None
            if mode == "canonical":
                # uniformity gate first
                built = canonical_dual(s.kernel, family, u, cfg["uniformity_gate"], s.space, s.grid, cert,
                                       covers=(cover,), tol=tol["duality"], **common)
                gates.append(gate("canonical_dual.duality", True, built.residual, tol["duality"]))

            weighted, report = almost_tight_frame(s.kernel, family, cover, s.space, cert)
            write_csv(report.eigenvalue_frame(), self.path("frame_eigenvalues.csv"))
            gates.append(gate("almost_tight_frame.frame", report.is_frame, report.lower, 0.0))
            out["almost_tight"] = report.to_dict()
            if mode == "almost_tight":
                self._save_system("frame_system.npz", weighted, False)
                return out

            if mode == "dual":
                built = dual_frame_molecules(s.kernel, family, cover, s.space, s.grid, cert,
                                             tol=tol["duality"], **common)
                gates.append(gate("dual_frame_molecules.duality", True, built.residual, tol["duality"]))
            elif mode == "tight":
                built = tight_frame_molecules(s.kernel, family, cover, s.space, s.grid, cert,
                                              tol=tol["parseval"], **common)
                gates.append(gate("tight_frame_molecules.parseval", True, built.residual, tol["parseval"]))
                out["output_frame"] = frame_bounds(built.system, s.space).to_dict()
            else:
                alternative = dual_frame_molecules(s.kernel, family, cover, s.space, s.grid, cert,
                                                   tol=tol["duality"], **common)
                checks = s.space.random_coords(20, self.config.seed + 1)
                canonical_norms = coefficient_norms(built.system, s.space, checks)
                alternative_norms = coefficient_norms(alternative.system, s.space, checks)
                gap = float(np.max(canonical_norms - alternative_norms))
                limit = tol["duality"] * float(np.max(alternative_norms))
                gates.append(gate("canonical_dual.minimality", gap <= limit, gap, limit))
                out["coefficient_norm_gap"] = float(np.max(alternative_norms - canonical_norms))
            out["residual"] = built.residual
            out["molecules"] = built.certificate.to_dict()
            gates.append(gate(f"build_frame.{mode}.molecules", built.certificate.passed,
                              built.certificate.decay, built.certificate.threshold))
            out["calculus"] = built.calculus.to_dict() if built.calculus else None
            self._save_system("frame_system.npz", built.system, True)
            return out

        return self._guarded("build-frame", build)

    # -- build-riesz -------------------------------------------------------

    def _riesz_family(self) -> tuple[PointFamily, NeighborhoodSpec]:
        s = self.scenario
        g = s.group
        cfg = self.config.riesz
        lattice = cfg["lattice"]
        if g.id == AFFINE:
            a, b = lattice["a"], lattice["b"]
            top = int(lattice.get("scales", 1))
            points = affine_lattice(a, b, range(-top, top + 1), signs=(1,),
                                    window=(lattice.get("extent", 2 * b), top * math.log(a)))
            return PointFamily(g, points.points, label=points.label), affine_lattice_cell(a, b)
        family = square_lattice(g, lattice["spacing"], lattice.get("extent", lattice["spacing"]))
        return family, box(cfg["separation"], g.dim, label="sep")

    def build_riesz(self) -> dict:
        def build(gates):
            self._load_stage("certify-kernel")
            s = self.scenario
            cfg = self.config.riesz
            tol = self.config.tolerances
            family, sep = self._riesz_family()
            normalized, report = almost_orthogonal_riesz(s.kernel, family, sep, s.grid)
            write_csv(report.eigenvalue_frame(), self.path("riesz_eigenvalues.csv"))
            write_csv(family.to_frame(), self.path("riesz_points.csv"))
            gates.append(gate("almost_orthogonal_riesz.bounds", report.is_frame, report.lower, 0.0))
            biorthogonal, inverse = biorthogonal_system(s.kernel, family, s.grid, cfg["delta"], cfg["gate"],
                                                        self.weight, tol["biorthogonality"])
            orthonormal, root = orthonormalize(s.kernel, family, s.grid, cfg["delta"], cfg["gate"],
                                               self.weight, tol["biorthogonality"])
            gates.append(gate("biorthogonal_system.biorthogonality", True,
                              inverse.calculus.residual if inverse.calculus else None, tol["biorthogonality"]))
            gates.append(gate("orthonormalize.gramian", True,
                              root.calculus.residual if root.calculus else None, tol["biorthogonality"]))
            self._save_system("riesz_system.npz", biorthogonal, False)
            self._save_system("orthonormal_system.npz", orthonormal, False)
            distances = kernel_sample_distance(orthonormal)
            return {
                "points": len(family),
                "separation": sep.to_dict(),
                "riesz": report.to_dict(),
                "inverse": inverse.to_dict(),
                "inverse_sqrt": root.to_dict(),
                "kernel_sample_distance": {"min": float(distances.min()), "max": float(distances.max())},
            }

        return self._guarded("build-riesz", build)

    # -- certify-molecules -------------------------------------------------

    def certify_molecules(self) -> dict:
        def build(gates):
            s = self.scenario
            mol = self.config.molecules
            out = {}
            targets = [("frame", "frame_system.npz", "build-frame"), ("riesz", "riesz_system.npz", "build-riesz")]
            present = [t for t in targets if os.path.exists(self.path(t[1]))]
            if not present:
                raise StageMissing("build-frame", self.path("frame_system.npz"))
            for name, filename, stage in present:
                self._load_stage(stage)
                system, in_space = self.load_system(filename, stage)
                region = probe_region(s.space, s.grid) if in_space else None
                cert = molecule_certify(system, s.grid, self.weight, mol["radius"], mol["threshold"], region)
                write_csv(cert.decay_profile(), self.path(f"{name}_molecule_decay.csv"))
                gates.append(gate(f"{name}.molecules", cert.passed, cert.decay, mol["threshold"]))
                bound = bessel_bound(cert, system.index)
                measured = (frame_bounds(system, s.space) if in_space else riesz_bounds(system)).upper
                gates.append(gate(f"{name}.bessel", measured <= bound.bound_sq * (1 + 1e-9), measured,
                                  bound.bound_sq, "report only", warn=True))
                out[name] = {"kind": system.kind, "certificate": cert.to_dict(), "bessel": bound.to_dict(),
                             "upper_frame_bound": measured}
            return out

        return self._guarded("certify-molecules", build)

    # -- interpolate -------------------------------------------------------

    def interpolate(self, values_path: str) -> dict:
        def build(gates):
            s = self.scenario
            tol = self.config.tolerances["interpolation"]
            self._load_stage("build-riesz")
            system, _ = self.load_system("riesz_system.npz", "build-riesz")
            frame = pd.read_csv(values_path)
            a = frame["value"].to_numpy(dtype=float)
            if "value_imag" in frame.columns:
                a = a + 1j * frame["value_imag"].to_numpy(dtype=float)
            f = interpolate(system, a, s.grid)
            nodes = interpolation_nodes(system, a)
            residual = float(np.max(np.abs(nodes - a))) if len(a) else 0.0
            limit = tol * max(1.0, float(np.max(np.abs(a))) if len(a) else 1.0)
            gates.append(gate("interpolate.nodes", residual <= limit, residual, limit))
            normalized = kernel_samples(s.kernel, system.index, 1.0 / np.sqrt(np.real(s.kernel.diagonal(system.index.points))))
            norm, bound = interpolation_norm(system, riesz_bounds(normalized), a)
            gates.append(gate("interpolate.norm_bound", norm <= bound * (1 + 1e-9), norm, bound))
            write_csv(f.to_frame(), self.path("interpolant.csv"))
            node_frame = system.index.to_frame()
            node_frame["target"] = np.real(a)
            node_frame["value"] = np.real(nodes)
            if np.iscomplexobj(nodes):
                node_frame["value_imag"] = np.imag(nodes)
            write_csv(node_frame, self.path("interpolation_nodes.csv"))
            return {"coefficients": len(a), "node_residual": residual, "norm": norm, "norm_bound": bound}

        return self._guarded("interpolate", build)

    # -- certificate -------------------------------------------------------

    def write_certificate(self) -> dict:
        stages = {}
        for stage in STAGE_ORDER:
            try:
                stages[stage] = self._load_stage(stage)
            except StageMissing as exc:
                if os.path.exists(exc.path):
                    self.logger.warning("Leaving %s out of the certificate: %s", stage, exc)
                continue
        statuses = [g["status"] for data in stages.values() for g in data["gates"]]
        certificate = {
            "schema": 1,
            "version": __version__,
            "config": self.config_dict,
            "config_hash": self.config_hash,
            "stage_order": list(stages),
            "stages": stages,
            "passed": bool(stages) and "FAIL" not in statuses,
        }
        write_json(self.path(CERTIFICATE), certificate)
        self.logger.info("Certificate written: %d stages, passed=%s", len(stages), certificate["passed"])
        return certificate

    def failing_gates(self, certificate: dict) -> list[str]:
        return [g["gate"] for data in certificate["stages"].values() for g in data["gates"] if g["status"] == "FAIL"]

    def run(self) -> dict:
        dispatch = {
            "certify-kernel": self.certify_kernel,
            "build-points": self.build_points,
            "build-frame": self.build_frame,
            "build-riesz": self.build_riesz,
            "certify-molecules": self.certify_molecules,
        }
        try:
            for stage in self.config.stages:
                self.logger.info("Running stage %s", stage)
                dispatch[stage]()
        finally:
            certificate = self.write_certificate()
        return certificate

    def report(self) -> tuple[list[str], bool]:
        """Summarise an existing certificate and write the xlsx workbook; never recomputes."""
        certificate = read_json(self.path(CERTIFICATE), "run")
        lines = summary_lines(certificate)
        write_summary_workbook(certificate, self.path(SUMMARY))
        return lines, bool(certificate.get("passed"))
