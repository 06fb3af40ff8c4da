"""Stage orchestration: mesh -> bloch -> macro -> {zhikov, dispersion, steklov}.

Expensive intermediates (meshes, Bloch data, macroscopic tensors, Steklov
studies) are cached in an :class:`~hicon.store.ArtifactStore`. Output tables
are always regenerated from those intermediates, so a cache hit yields the
same bytes as a fresh run.
"""
from __future__ import annotations

import hashlib
import json
import logging
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import BlochData, bloch_eigs
from .config import RunConfig
from .dispersion import default_theta_grid, dispersion_surface
from .errors import PoleError
from .macro import MacroTensor, assemble_macro
from .mesh import TriMesh, build_unit_cell_mesh, load_mesh, refine_times, save_mesh
from .steklov import StudyReport, dtn_convergence_study, write_rate_json
from .store import ArtifactStore
from .tensor import ElasticTensor
from .zhikov import POLE_GUARD, ZhikovFunction, find_band_gaps, write_beta_csv

log = logging.getLogger(__name__)

STAGES = ("mesh", "bloch", "macro", "zhikov", "dispersion", "steklov")


def _key(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dispersion_filename(eps: float) -> str:
    return f"dispersion_eps{eps:.0e}.csv"


class Pipeline:
    """Runs stages for one configuration, writing into ``out_dir``.

    Every file written in this run is recorded in ``written`` so a caller can
    remove partial outputs after a failure.
    """

    def __init__(
        self,
        cfg: RunConfig,
        out_dir,
        store: ArtifactStore | None = None,
        mesh_in=None,
        mesh_out=None,
        threads: int = 1,
    ):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.store = store
        self.mesh_in = Path(mesh_in) if mesh_in else None
        self.mesh_out = Path(mesh_out) if mesh_out else None
        self.threads = max(1, int(threads))
        self.written: list[Path] = []
        self.cache_hits: list[str] = []
        self._memo: dict = {}
        lam, mu = cfg.lame
        self.A = ElasticTensor.isotropic(lam, mu)

    # -- helpers ---------------------------------------------------------
    @property
    def config_hash(self) -> str:
        return self.cfg.digest()

    def header(self, stage: str) -> str:
        return f"# hicon {__version__} config={self.config_hash} stage={stage}\n"

    def _out(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(p)
        return p

    def _cached(self, stage: str, key: str, build, save, load):
        """Return the stage object from the store or build and store it."""
        memo = (stage, key)
        if memo in self._memo:
            return self._memo[memo]
        if self.store is not None and self.store.has(stage, key):
            obj = load(self.store.path(stage, key))
            self.cache_hits.append(stage)
            log.info("%s: cache hit %s", stage, key)
        else:
            obj = build()
            if self.store is not None:
                with tempfile.TemporaryDirectory() as tmp:
                    files = save(obj, Path(tmp))
                    self.store.put(stage, key, files)
        self._memo[memo] = obj
        return obj

    # -- mesh ------------------------------------------------------------
    def mesh_key(self, level: int) -> str:
        src = hashlib.sha256(self.mesh_in.read_bytes()).hexdigest()[:16] if self.mesh_in else self.cfg.digest("geometry")
        return _key("mesh", src, level)

    def mesh(self, level: int | None = None) -> TriMesh:
        level = self.cfg.refine if level is None else level

        def build():
            base = load_mesh(self.mesh_in) if self.mesh_in else build_unit_cell_mesh(self.cfg.geometry)
            return refine_times(base, level)

        def save(m, d):
            save_mesh(m, d / "mesh.json")
            return {"mesh.json": d / "mesh.json"}

        m = self._cached("mesh", self.mesh_key(level), build, save, lambda d: load_mesh(d / "mesh.json"))
        if self.mesh_out is not None and level == self.cfg.refine:
            self.mesh_out.parent.mkdir(parents=True, exist_ok=True)
            save_mesh(m, self.mesh_out)
            self.written.append(self.mesh_out)
        return m

    # -- bloch -----------------------------------------------------------
    def bloch_key(self) -> str:
        c = self.cfg
        return _key("bloch", self.mesh_key(c.refine), c.lame, c.n_modes, c.element_order, c.tolerances.rtol, c.seed)

    def bloch(self) -> BlochData:
        c = self.cfg

        def build():
            return bloch_eigs(self.mesh(), self.A, c.n_modes, order=c.element_order, rtol=c.tolerances.rtol, seed=c.seed)

        def save(b, d):
            np.savez(d / "bloch.npz", etas=b.etas, means=b.means, soft_area=b.soft_area, provenance=b.provenance)
            return {"bloch.npz": d / "bloch.npz"}

        def load(d):
            z = np.load(d / "bloch.npz")
            return BlochData(z["etas"], z["means"], float(z["soft_area"]), str(z["provenance"]))

        return self._cached("bloch", self.bloch_key(), build, save, load)

    def write_bloch(self) -> None:
        self.bloch().write_csv(self._out("bloch_eigs.csv"), self.header("bloch"))

    # -- macro -----------------------------------------------------------
    def macro(self, level: int | None = None) -> MacroTensor:
        c = self.cfg
        level = c.refine if level is None else level
        key = _key("macro", self.mesh_key(level), c.lame, c.element_order)

        def build():
            return assemble_macro(self.mesh(level), self.A, order=c.element_order)

        def save(m, d):
            m.write_json(d / "amacro.json")
            return {"amacro.json": d / "amacro.json"}

        def load(d):
            return MacroTensor.from_dict(json.loads((d / "amacro.json").read_text()))

        return self._cached("macro", key, build, save, load)

    def write_macro(self) -> None:
        self.macro().write_json(self._out("amacro.json"), {"_tool": f"hicon {__version__}", "_config": self.config_hash})

    # -- zhikov ----------------------------------------------------------
    def zhikov_function(self) -> ZhikovFunction:
        t = self.cfg.tolerances
        return ZhikovFunction(self.bloch(), t.delta_pole, t.mean_rel)

    def z_grid(self) -> np.ndarray:
        return make_z_grid(self.cfg.z_grid, self.bloch(), self.zhikov_function())

    def gap_grid(self) -> np.ndarray:
        """Grid fine enough for the band-gap search (spacing at most min pole gap / 60)."""
        z = self.z_grid()
        fn = self.zhikov_function()
        poles = fn.poles[(fn.poles > z[0]) & (fn.poles < z[-1])]
        h = np.min(np.diff(z))
        if len(poles) >= 2:
            h = min(h, np.min(np.diff(poles)) / 60.0)
        n = int(np.ceil((z[-1] - z[0]) / h)) + 1
        return nudge_off_poles(np.linspace(z[0], z[-1], n), fn)

    def write_zhikov(self) -> None:
        fn = self.zhikov_function()
        write_beta_csv(self._out("beta_eigs.csv"), self.z_grid(), fn, self.header("zhikov"))
        gaps = find_band_gaps(self.gap_grid(), self.bloch(), self.cfg.tolerances.tol_gap, fn=fn)
        with open(self._out("band_gaps.csv"), "w") as fh:
            fh.write(self.header("zhikov"))
            fh.write("z_lo,z_hi\n")
            for lo, hi in gaps:
                fh.write(f"{lo:.17g},{hi:.17g}\n")

    # -- dispersion ------------------------------------------------------
    def write_dispersion(self) -> None:
        fn = self.zhikov_function()
        z = self.z_grid()
        thetas = default_theta_grid(self.cfg.n_directions)
        A_macro = self.macro()
        for eps in self.cfg.epsilons:
            table = dispersion_surface(z, thetas, eps, A_macro=A_macro, tol_gap=self.cfg.tolerances.tol_gap, fn=fn)
            table.write_csv(self._out(dispersion_filename(eps)), self.header("dispersion"))

    # -- steklov ---------------------------------------------------------
    def steklov_level(self) -> int:
        s = self.cfg.steklov.refine
        return self.cfg.refine if s is None else s

    def steklov(self) -> list[StudyReport]:
        c = self.cfg
        level = self.steklov_level()
        key = _key("steklov", self.mesh_key(level), c.lame, c.element_order, c.steklov.chi_norms, c.steklov.directions, c.steklov.k)

        def build():
            mesh = self.mesh(level)
            A_macro = self.macro(level)
            run = lambda t: dtn_convergence_study(mesh, self.A, A_macro, c.steklov.chi_norms, t, c.element_order, c.steklov.k)  # noqa: E731
            if self.threads > 1:
                with ThreadPoolExecutor(max_workers=self.threads) as pool:
                    return list(pool.map(run, c.steklov.directions))
            return [run(t) for t in c.steklov.directions]

        def save(reports, d):
            arrays = {}
            for i, r in enumerate(reports):
                for name in ("theta", "chi_norms", "nus", "hom", "err", "rayleigh"):
                    arrays[f"{i}_{name}"] = getattr(r, name)
                arrays[f"{i}_energy_residual"] = np.float64(r.energy_residual)
            np.savez(d / "steklov.npz", n=len(reports), **arrays)
            return {"steklov.npz": d / "steklov.npz"}

        def load(d):
            z = np.load(d / "steklov.npz")
            return [
                StudyReport(
                    *(z[f"{i}_{name}"] for name in ("theta", "chi_norms", "nus", "hom", "err", "rayleigh")),
                    energy_residual=float(z[f"{i}_energy_residual"]),
                )
                for i in range(int(z["n"]))
            ]

        return self._cached("steklov", key, build, save, load)

    def write_steklov(self) -> None:
        reports = self.steklov()
        path = self._out("steklov.csv")
        for i, r in enumerate(reports):
            r.write_csv(path, self.header("steklov"), append=i > 0)
        write_rate_json(
            self._out("steklov_rates.json"),
            reports,
            {"_tool": f"hicon {__version__}", "_config": self.config_hash, "refine": self.steklov_level()},
        )

    # -- driver ----------------------------------------------------------
    def run(self, stage: str) -> None:
        if stage == "mesh":
            m = self.mesh()
            save_mesh(m, self._out("mesh.json"))
        elif stage == "bloch":
            self.write_bloch()
        elif stage == "macro":
            self.write_macro()
        elif stage == "zhikov":
            self.write_zhikov()
        elif stage == "dispersion":
            self.write_dispersion()
        elif stage == "steklov":
            self.write_steklov()
        elif stage == "pipeline":
            for s in ("bloch", "macro", "zhikov", "dispersion", "steklov"):
                self.run(s)
        else:
            raise ValueError(f"unknown stage {stage!r}")


def make_z_grid(spec, data: BlochData, fn: ZhikovFunction) -> np.ndarray:
    """Frequency grid from a :class:`~hicon.config.ZGridSpec`.

    Explicit ``values`` are used verbatim (a value on a pole then raises
    downstream); generated grids are nudged off exact pole hits.
    """
    if spec.values is not None:
        return np.asarray(spec.values, dtype=float)
    z_max = spec.z_max if spec.z_max is not None else spec.z_max_factor * data.etas[-1]
    if spec.z_min == 0.0:
        z = np.linspace(0.0, z_max, spec.n_points + 1)[1:]
    else:
        z = np.linspace(spec.z_min, z_max, spec.n_points)
    return nudge_off_poles(z, fn)


def nudge_off_poles(z: np.ndarray, fn: ZhikovFunction) -> np.ndarray:
    """Shift grid points that land on a contributing pole by a tiny relative amount."""
    z = np.array(z, dtype=float)
    if fn.poles.size:
        d = np.abs(z[:, None] - fn.poles[None, :])
        hit = np.any(d < 10 * POLE_GUARD * np.abs(fn.poles)[None, :], axis=1)
        z[hit] += 1e-9 * np.abs(fn.poles).max()
    return z


def pole_hits(z, fn: ZhikovFunction) -> np.ndarray:
    """Grid values that would raise :class:`PoleError`."""
    z = np.asarray(z, dtype=float)
    out = []
    for zi in z:
        try:
            fn.matrices([zi])
        except PoleError:
            out.append(zi)
    return np.array(out)
