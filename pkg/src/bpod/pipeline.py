"""Staged, resumable runs: build -> simulate -> pod -> adjoint -> bpod -> reduce -> evaluate.

Each stage records a hash of the settings it depends on (plus its upstream
stage hashes) in ``manifest.txt``; a stage whose hash is unchanged and whose
files still match their checksums is skipped.
"""

from __future__ import annotations

import hashlib
import logging
import platform
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import analysis as an
from . import io as bio
from .balancing import (Provenance, ReducedOrderModel, bpod, exact_balanced_truncation,
                        gramians, pair_boundary, reduce)
from .channel import WavenumberPair, build_os_squire, optimal_perturbation
from .config import CaseConfig, CaseKind, to_ini
from .dynamics import (SnapshotSet, adjoint_impulse_snapshots, direct_impulse_snapshots, stack)
from .errors import ChecksumError, FormatError, VersionMismatchError
from .field3d import Box3D, actuator_system, gaussian_actuator, remove_mean
from .modal import ModeBasis, output_projection, pod
from .system import LinearSystem

log = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
MANIFEST_VERSION = 1
STAGES = ("build", "simulate", "pod", "adjoint", "bpod", "reduce", "evaluate")

_STAGE_KEYS = {
    "build": ("kind", "alpha", "beta", "Re", "N", "Nx", "Nz", "actuator_amplitude",
              "actuator_alpha", "actuator_alpha_y"),
    "simulate": ("count", "dt", "T", "decay_threshold", "T_max", "fine_fraction", "fine_horizon"),
    "pod": ("pod_modes",),
    "adjoint": ("output_projection_ranks", "adjoint_count"),
    "bpod": (),
    "reduce": ("model_ranks", "force_rank"),
    "evaluate": ("impulse", "freq", "spectrum", "bounds", "re_sweep", "traces",
                 "omega_min", "omega_max", "omega_count"),
}
_EXACT_LIMIT = 1000  # largest state dimension for the dense exact oracle


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage, self.cause = stage, cause


# --------------------------------------------------------------------------- manifest

class Manifest:
    """``key: value`` run record."""

    def __init__(self, path: Path):
        self.path = path
        self.entries: dict[str, str] = {}
        if path.is_file():
            for line in path.read_text().splitlines():
                if ": " in line:
                    k, v = line.split(": ", 1)
                    self.entries[k] = v
            version = self.entries.get("manifest_version")
            if version is not None and int(version) != MANIFEST_VERSION:
                raise VersionMismatchError(
                    f"{path}: manifest version {version}, this tool writes {MANIFEST_VERSION}")

    def get(self, key: str, default=None):
        return self.entries.get(key, default)

    def set(self, key: str, value) -> None:
        self.entries[key] = str(value)

    def drop_prefix(self, prefix: str) -> None:
        for k in [k for k in self.entries if k.startswith(prefix)]:
            del self.entries[k]

    def save(self) -> None:
        self.entries["manifest_version"] = str(MANIFEST_VERSION)
        text = "".join(f"{k}: {self.entries[k]}\n" for k in sorted(self.entries))
        self.path.write_text(text)

    def files(self) -> dict[str, str]:
        return {k[5:-7]: v for k, v in self.entries.items()
                if k.startswith("file.") and k.endswith(".sha256")}


def check_integrity(workdir: Path, manifest: Manifest) -> list[str]:
    """Verify recorded checksums; returns the list of missing files, raises on corruption."""
    missing = []
    for rel, digest in sorted(manifest.files().items()):
        p = workdir / rel
        if not p.is_file():
            missing.append(rel)
            continue
        if bio.sha256(p) != digest:
            raise ChecksumError(f"checksum mismatch for {rel}")
    return missing


# --------------------------------------------------------------------------- case setup

@dataclass
class Case:
    config: CaseConfig
    system: LinearSystem
    box: Box3D | None = None


def build_case(cfg: CaseConfig) -> Case:
    if cfg.kind is CaseKind.SINGLE:
        model = build_os_squire(WavenumberPair(cfg.alpha, cfg.beta), cfg.Re, cfg.N)
        q, _ = optimal_perturbation(model)
        sys = LinearSystem.from_model(model, B=q.to_array(), real=True,
                                      label=f"alpha={cfg.alpha:g} beta={cfg.beta:g}")
        return Case(cfg, sys)
    box = Box3D(Nx=cfg.Nx, Nz=cfg.Nz, N=cfg.N)
    act = remove_mean(gaussian_actuator(box, cfg.actuator_amplitude, cfg.actuator_alpha,
                                        cfg.actuator_alpha_y))
    return Case(cfg, actuator_system(box, cfg.Re, act), box)


# --------------------------------------------------------------------------- runner

class Pipeline:
    def __init__(self, cfg: CaseConfig, workdir, force: bool = False):
        self.cfg = cfg
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest(self.workdir / MANIFEST)
        self.force = force
        self._case: Case | None = None
        self._cache: dict = {}

    # paths and bookkeeping ------------------------------------------------
    def path(self, rel: str) -> Path:
        return self.workdir / rel

    @property
    def case(self) -> Case:
        if self._case is None:
            self._case = build_case(self.cfg)
        return self._case

    def stage_hash(self, stage: str) -> str:
        h = hashlib.sha256(self.cfg.stage_digest(_STAGE_KEYS[stage]).encode())
        i = STAGES.index(stage)
        if i > 0:
            h.update(self.stage_hash(STAGES[i - 1]).encode())
        if stage in ("bpod", "evaluate"):
            h.update(repr(sorted(self.cfg.tolerances.items())).encode())
        return h.hexdigest()

    def _record(self, rel: str) -> None:
        self.manifest.set(f"file.{rel}.sha256", bio.sha256(self.path(rel)))

    def _done(self, stage: str) -> bool:
        if self.force:
            return False
        if self.manifest.get(f"stage.{stage}.status") != "complete":
            return False
        if self.manifest.get(f"stage.{stage}.hash") != self.stage_hash(stage):
            return False
        prefix = f"stage.{stage}.file."
        rels = [v for k, v in self.manifest.entries.items() if k.startswith(prefix)]
        try:
            return all(bio.sha256(self.path(r)) == self.manifest.get(f"file.{r}.sha256")
                       for r in rels)
        except FileNotFoundError:
            return False

    def run_stage(self, stage: str) -> bool:
        """Run one stage unless already complete; returns True if work was done."""
        if self._done(stage):
            log.info("stage %s up to date, skipped", stage)
            return False
        self.manifest.drop_prefix(f"stage.{stage}.")
        self.manifest.set(f"stage.{stage}.status", "incomplete")
        self.manifest.save()
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                written = getattr(self, f"_stage_{stage}")()
            for w in caught:
                log.warning("%s: %s", stage, w.message)
                self.manifest.set(f"stage.{stage}.warning", str(w.message))
        except Exception as exc:
            self.manifest.save()
            raise StageError(stage, exc) from exc
        for i, rel in enumerate(written):
            self._record(rel)
            self.manifest.set(f"stage.{stage}.file.{i:03d}", rel)
        self.manifest.set(f"stage.{stage}.hash", self.stage_hash(stage))
        self.manifest.set(f"stage.{stage}.status", "complete")
        self.manifest.save()
        return True

    def run(self, stages=STAGES) -> None:
        self.manifest.set("config_hash", self.cfg.digest())
        self.manifest.set("case", self.cfg.name)
        self.manifest.set("kind", self.cfg.kind.value)
        self.manifest.set("version.bpod", __version__)
        self.manifest.set("version.numpy", np.__version__)
        self.manifest.set("version.scipy", scipy.__version__)
        self.manifest.set("version.python", platform.python_version())
        self.manifest.save()
        (self.workdir / "config.cfg").write_text(to_ini(self.cfg))
        if not self.cfg.any_evaluation:
            # nothing to evaluate: stop once snapshots and modes exist
            stages = [s for s in stages if s not in ("reduce", "evaluate")]
        for stage in stages:
            self.run_stage(stage)

    # loaders ---------------------------------------------------------------
    def direct(self) -> SnapshotSet:
        if "X" not in self._cache:
            self._cache["X"] = bio.load_snapshots(self.path("snapshots/direct.bpr"))
        return self._cache["X"]

    def pod_basis(self) -> ModeBasis:
        if "P" not in self._cache:
            self._cache["P"] = bio.load_basis(self.path("modes/pod.bpr"), self.case.system.E)
        return self._cache["P"]

    def bpod_basis(self, s: int) -> ModeBasis:
        key = ("B", s)
        if key not in self._cache:
            self._cache[key] = bio.load_basis(self.path(f"modes/bpod_s{s}.bpr"), self.case.system.M)
        return self._cache[key]

    def rom_names(self) -> list[str]:
        idx = self.path("roms/index.txt")
        return idx.read_text().split() if idx.is_file() else []

    def rom(self, name: str) -> ReducedOrderModel:
        return bio.load_rom(self.path(f"roms/{name}.rom"))

    @property
    def exact_available(self) -> bool:
        return self.cfg.kind is CaseKind.SINGLE and 2 * self.case.system.n <= _EXACT_LIMIT

    # stages ----------------------------------------------------------------
    def _stage_build(self) -> list[str]:
        sys = self.case.system
        lam = sys.A.eigenvalues()
        self.manifest.set("meta.n_states", sys.n)
        self.manifest.set("meta.max_growth_rate", repr(float(lam[0].real)))
        if self.case.box is not None:
            self.manifest.set("meta.blocks", len(self.case.box.blocks))
        bio.write_block(self.path("snapshots/input.bpr"), bio.Kind.MATRIX,
                        [0.0], [1.0], sys.B)
        return ["snapshots/input.bpr"]

    def _stage_simulate(self) -> list[str]:
        X = direct_impulse_snapshots(self.case.system, 0, self.cfg.schedule())
        bio.save_snapshots(self.path("snapshots/direct.bpr"), X)
        self._cache["X"] = X
        self.manifest.set("meta.direct.decayed", int(X.decayed))
        self.manifest.set("meta.direct.terminal_ratio", repr(X.terminal_ratio))
        self.manifest.set("meta.direct.dt", repr(X.dt))
        self.manifest.set("meta.direct.T", repr(float(X.times[-1])))
        E = an.energy_curve(X.states(), self.case.system.E)
        an.energy_csv(self.path("reports/energy_full.csv"), {"full": (X.times, E)})
        return ["snapshots/direct.bpr", "reports/energy_full.csv"]

    def _stage_pod(self) -> list[str]:
        X = self.direct()
        P = pod(X, self.case.system.E, r=self.cfg.pod_modes, tol=self.cfg.tol("pod_rank"))
        self._cache["P"] = P
        files = [str(p.relative_to(self.workdir)) for p in bio.save_basis(self.path("modes/pod.bpr"), P)]
        an.eigen_table_csv(self.path("reports/pod_eigenvalues.csv"), P.all_values)
        return files + ["reports/pod_eigenvalues.csv"]

    def _stage_adjoint(self) -> list[str]:
        P = self.pod_basis()
        files = []
        sched = self.cfg.schedule(adjoint=True)
        for s in self.cfg.output_projection_ranks:
            runs = adjoint_impulse_snapshots(self.case.system, P, s, sched)
            Y = stack(runs)
            del runs
            rel = f"snapshots/adjoint_s{s}.bpr"
            bio.save_snapshots(self.path(rel), Y)
            self.manifest.set(f"meta.adjoint_s{s}.decayed", int(Y.decayed))
            del Y
            files.append(rel)
        return files

    def _stage_bpod(self) -> list[str]:
        X, sys = self.direct(), self.case.system
        files = []
        rmax = max(self.cfg.model_ranks)
        for s in self.cfg.output_projection_ranks:
            Y = bio.load_snapshots(self.path(f"snapshots/adjoint_s{s}.bpr"))
            B = bpod(X, Y, sys.M, r=max(rmax + 4, 2 * s), tol=self.cfg.tol("hsv_rank"))
            del Y
            self._cache[("B", s)] = B
            files += [str(p.relative_to(self.workdir))
                      for p in bio.save_basis(self.path(f"modes/bpod_s{s}.bpr"), B)]
            rel = f"reports/hsv_s{s}.csv"
            an.eigen_table_csv(self.path(rel), B.all_values)
            files.append(rel)
        if self.exact_available:
            hsv = gramians(sys).hsv
            an.eigen_table_csv(self.path("reports/hsv_exact.csv"), hsv)
            files.append("reports/hsv_exact.csv")
            P = self.pod_basis()
            for s in self.cfg.output_projection_ranks:
                h = gramians(sys, output_projection(P, s)).hsv
                rel = f"reports/hsv_exact_s{s}.csv"
                an.eigen_table_csv(self.path(rel), h)
                files.append(rel)
        return files

    def _cut(self, values: np.ndarray, r: int) -> int:
        if self.cfg.force_rank:
            return r
        return pair_boundary(values, r, self.cfg.tol("hsv_tie"))

    def _stage_reduce(self) -> list[str]:
        sys, P = self.case.system, self.pod_basis()
        names, files = [], []

        def save(name, rom):
            rel = f"roms/{name}.rom"
            bio.save_rom(self.path(rel), rom)
            names.append(name)
            files.append(rel)

        for r in self.cfg.model_ranks:
            if r <= P.rank:
                save(f"pod_r{r:02d}", reduce(sys, P.leading(r)))
        for s in self.cfg.output_projection_ranks:
            B = self.bpod_basis(s)
            op = output_projection(P, s)
            ranks = sorted({self._cut(B.all_values, r) for r in self.cfg.model_ranks})
            for r in ranks:
                if r <= B.rank:
                    save(f"bpod_s{s}_r{r:02d}", reduce(sys, B.leading(r), op))
        if self.exact_available:
            hsv = gramians(sys).hsv
            for r in sorted({self._cut(hsv, r) for r in self.cfg.model_ranks}):
                rom, _, _ = exact_balanced_truncation(sys, r)
                save(f"exact_bt_r{r:02d}", rom)
        self.path("roms/index.txt").write_text("\n".join(names) + "\n")
        return files + ["roms/index.txt"]

    def _stage_evaluate(self) -> list[str]:
        cfg, sys = self.cfg, self.case.system
        X = self.direct()
        files = []
        names = self.rom_names()
        roms = {n: self.rom(n) for n in names}
        full_out = an.full_outputs(X, sys.E)
        hsv = self._hsv_for_bounds()

        if cfg.impulse:
            reports, curves = {}, {"full": (X.times, an.energy_curve(X.states(), sys.E))}
            for n, rom in roms.items():
                ro = an.rom_outputs(rom, full_out)
                err = an.impulse_error_2norm(full_out, ro)
                lo, hi = an.hsv_bounds(hsv.get(self._family(n), np.zeros(0)), rom.rank)
                reports.setdefault(self._family(n), []).append(
                    an.ErrorReport(rom.rank, err, float("nan"), lo, hi))
                curves[n] = (X.times, an.energy_curve(ro.values, sys.E))
            files.append(self._rel(an.error_norms_csv(self.path("reports/error_norms_2.csv"), reports)))
            files.append(self._rel(an.energy_csv(self.path("reports/energy.csv"), curves)))
        if cfg.freq:
            om = an.log_grid(cfg.omega_min, cfg.omega_max, cfg.omega_count)
            frs = [an.frequency_response(sys, om, sys.E, label="full")]
            frs += [an.frequency_response(rom, om, sys.E, label=n) for n, rom in roms.items()]
            files.append(self._rel(an.freq_response_csv(self.path("reports/freq_response.csv"), frs)))
        if cfg.bounds:
            om = an.log_grid(cfg.omega_min, cfg.omega_max, cfg.omega_count)
            reports = {}
            for n, rom in roms.items():
                rep = an.hinf_error(sys, rom, hsv.get(self._family(n), np.zeros(0)), omegas=om)
                reports.setdefault(self._family(n), []).append(rep)
            files.append(self._rel(an.error_norms_csv(self.path("reports/error_norms.csv"), reports)))
        if cfg.spectrum:
            spectra = {"full": sys.A.eigenvalues()}
            spectra.update({n: rom.eigenvalues() for n, rom in roms.items()})
            files.append(self._rel(an.spectrum_csv(self.path("reports/spectrum.csv"), spectra)))
            if sys.A.n_blocks == 1:
                lam, res = an.modal_controllability(sys)
                rows = [(l.real, l.imag, r) for l, r in zip(lam, res)]
                files.append(self._rel(an.write_csv(self.path("reports/controllability.csv"),
                                                    ["re", "im", "residual"], rows)))
        if cfg.re_sweep:
            rows = []
            for Re in cfg.re_sweep:
                full_sys = sys.at_reynolds(Re)
                lam_max = float(full_sys.A.eigenvalues()[0].real)
                rows.append(("full", sys.n, Re, lam_max))
                curves = {}
                if lam_max < 0:
                    # off-design full run on the design sample times
                    sched = replace(cfg.schedule(), T=float(X.times[-1]))
                    Xr = direct_impulse_snapshots(full_sys, 0, sched)
                    curves["full"] = (Xr.times, an.energy_curve(Xr.states(), sys.E))
                for n, rom in roms.items():
                    off = rom.at_reynolds(Re)
                    rows.append((n, rom.rank, Re, off.max_growth_rate()))
                    if curves and off.max_growth_rate() < 0:
                        a = an.rom_states(off, curves["full"][0])
                        curves[n] = (curves["full"][0], an.energy_curve(off.state_map() @ a, sys.E))
                if curves:
                    files.append(self._rel(an.energy_csv(
                        self.path(f"reports/energy_Re{Re:g}.csv"), curves)))
            files.append(self._rel(an.write_csv(self.path("reports/reynolds.csv"),
                                                ["system", "rank", "Re", "max_re"], rows)))
        if cfg.traces:
            P = self.pod_basis()
            traces, rows = {}, []
            for s in cfg.output_projection_ranks:
                B = self.bpod_basis(s)
                rmax = min(P.rank, B.rank, max(cfg.model_ranks))
                traces[f"pod_vs_bpod_s{s}"] = [
                    (r, an.subspace_trace(P.modes[:, :r], B.modes[:, :r], sys.E))
                    for r in range(1, rmax + 1)]
                for r in range(0, min(rmax, 10) + 1):
                    rows.append((f"bpod_s{s}", r,
                                 an.input_projection_norm(B, sys.B, sys.E, r, "petrov")))
            for r in range(0, min(P.rank, 10) + 1):
                rows.append(("pod", r, an.input_projection_norm(P, sys.B, sys.E, r)))
            files.append(self._rel(an.trace_csv(self.path("reports/trace.csv"), traces)))
            files.append(self._rel(an.write_csv(self.path("reports/input_projection.csv"),
                                                ["basis", "rank", "norm_ratio"], rows)))
        return files

    # helpers ---------------------------------------------------------------
    def _rel(self, p: Path) -> str:
        return str(Path(p).relative_to(self.workdir))

    @staticmethod
    def _family(name: str) -> str:
        return name.rsplit("_r", 1)[0]

    def _hsv_for_bounds(self) -> dict[str, np.ndarray]:
        """HSVs defining the bounds: exact ones when available, else each BPOD's own."""
        out = {}
        exact = self.path("reports/hsv_exact.csv")
        if exact.is_file():
            v = np.loadtxt(exact, delimiter=",", skiprows=1, usecols=1, ndmin=1)
            out.update({"exact_bt": v, "pod": v})
            out.update({f"bpod_s{s}": v for s in self.cfg.output_projection_ranks})
        else:
            for s in self.cfg.output_projection_ranks:
                out[f"bpod_s{s}"] = self.bpod_basis(s).all_values
        return out
