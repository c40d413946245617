"""Experiment drivers: robustness sweeps, coarse-approximation studies, and
subdomain-scaling studies, all writing CSV tables plus nodal field dumps.

Every solve is appended to a cumulative run log (runs.csv) with the schema
problem, contrast, subdomains, evs_per_subdomain, dim_VH, iterations,
kappa_est, kappa_bound, setup_s, solve_s. The result tables contain no
timings and reproduce bit-identically for a fixed config and seed; the run
log's timing columns are the one documented exception.
"""

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decomposition import build_decomposition, coverage_constant, sarkis_pou, standard_pou
from .fem import (
    BoundaryCondition,
    CoefficientField,
    DofMap,
    StructuredMesh,
    assemble_darcy,
    assemble_elasticity,
)
from .geneo import (
    SelectionRule,
    assemble_coarse,
    assemble_geneo_pencil,
    build_geneo_basis,
    subdomain_rows,
)
from .linalg.factorize import factorize
from .solvers import (
    SchwarzPreconditioner,
    check_error_bound,
    coarse_solve,
    local_factorizations,
    pcg,
    theoretical_condition_bound,
)

RUNS_HEADER = [
    "problem",
    "contrast",
    "subdomains",
    "evs_per_subdomain",
    "dim_VH",
    "iterations",
    "kappa_est",
    "kappa_bound",
    "setup_s",
    "solve_s",
]


@dataclass
class ProblemSetup:
    mesh: StructuredMesh
    dofmap: DofMap
    field: CoefficientField
    bc: BoundaryCondition
    matrix: object
    rhs: np.ndarray
    lift: np.ndarray
    dirichlet_dofs: np.ndarray


@dataclass
class RunSummary:
    kind: str
    tables: list = field(default_factory=list)
    figures: list = field(default_factory=list)
    dumps: list = field(default_factory=list)
    runs_log: str | None = None
    failures: list = field(default_factory=list)
    bound_violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures and not self.bound_violations


@dataclass
class FieldDump:
    """Nodal values (one per dof, constrained dofs included) with coordinates."""

    mesh: StructuredMesh
    ndof_per_node: int
    values: np.ndarray

    def write_csv(self, path):
        coords = np.repeat(self.mesh.node_coords(), self.ndof_per_node, axis=0)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "value"])
            for (x, y), v in zip(coords, self.values):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(v))])

    def write_vtk(self, path, name="value"):
        mesh = self.mesh
        lines = [
            "# vtk DataFile Version 3.0",
            "geneo-lab field dump",
            "ASCII",
            "DATASET STRUCTURED_POINTS",
            f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1",
            "ORIGIN 0.0 0.0 0.0",
            f"SPACING {mesh.hx!r} {mesh.hy!r} 1.0",
            f"POINT_DATA {mesh.num_nodes}",
        ]
        if self.ndof_per_node == 1:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in self.values)
        else:
            lines.append(f"VECTORS {name} double")
            vals = self.values.reshape(-1, 2)
            lines.extend(f"{float(vx)!r} {float(vy)!r} 0.0" for vx, vy in vals)
        Path(path).write_text("\n".join(lines) + "\n")


def build_field(cfg, mesh, contrast):
    if cfg.layout == "constant":
        return CoefficientField.constant(mesh, value=cfg.base, nu=cfg.nu[0])
    if cfg.layout == "layers":
        return CoefficientField.layers(mesh, cfg.layers, contrast, base=cfg.base, nu=cfg.nu)
    if cfg.layout == "skyscrapers":
        return CoefficientField.skyscrapers(mesh, cfg.rectangles, contrast, base=cfg.base, nu=cfg.nu)
    if cfg.layout == "channels":
        return CoefficientField.channels(mesh, cfg.rectangles, contrast, base=cfg.base, nu=cfg.nu)
    return CoefficientField.from_raster_file(mesh, cfg.raster_file)


def build_problem(cfg, nx, ny, contrast):
    """Mesh, coefficients, boundary conditions, and the eliminated system."""
    mesh = StructuredMesh(nx, ny, cfg.lx, cfg.ly)
    field_ = build_field(cfg, mesh, contrast)
    ncomp = 1 if cfg.problem == "darcy" else 2
    dirichlet = dict(cfg.dirichlet)
    neumann = dict(cfg.flux)
    if ncomp == 2:
        dirichlet = {s: (v, v) if np.isscalar(v) else v for s, v in dirichlet.items()}
        neumann = {s: (v, v) if np.isscalar(v) else v for s, v in neumann.items()}
    bc = BoundaryCondition(dirichlet=dirichlet, neumann=neumann)
    dofmap = DofMap(mesh, ncomp)
    if cfg.problem == "darcy":
        a, b = assemble_darcy(mesh, field_, bc, f=cfg.source)
    else:
        a, b = assemble_elasticity(mesh, field_, bc, body_force=cfg.body_force)
    dofs, values = bc.constrained_dofs(mesh, dofmap)
    lift = np.zeros(dofmap.ndof)
    lift[dofs] = values
    return ProblemSetup(mesh, dofmap, field_, bc, a, b, lift, dofs)


def build_pou(cfg, decomp, dirichlet_dofs):
    builder = sarkis_pou if cfg.pou == "sarkis" else standard_pou
    return builder(decomp, dirichlet_dofs)


def build_coarse_space(cfg, setup, decomp, pou, selection, seed):
    """Pencils, eigensolves, basis, and assembled coarse operator, timed."""
    t0 = time.perf_counter()
    pencils = [
        assemble_geneo_pencil(decomp, setup.mesh, setup.field, setup.bc, setup.dofmap, pou, j)
        for j in range(decomp.num_subdomains)
    ]
    basis = build_geneo_basis(
        decomp,
        pencils,
        pou,
        selection,
        tol=cfg.eig_tol,
        seed=seed,
        ncv=cfg.subspace,
        sigma=cfg.sigma,
    )
    t1 = time.perf_counter()
    coarse = assemble_coarse(decomp, subdomain_rows(setup.matrix, decomp), basis)
    t2 = time.perf_counter()
    return basis, coarse, {"eigen_s": t1 - t0, "coarse_s": t2 - t1}


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return str(path)


def _append_runs(path, records):
    new = not Path(path).exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(RUNS_HEADER)
        for rec in records:
            writer.writerow([_fmt(v) for v in rec])
    return str(path)


def _workers(requested=None):
    limit = os.environ.get("GENEO_LAB_THREADS")
    limit = int(limit) if limit else (os.cpu_count() or 1)
    if requested:
        limit = min(limit, requested)
    return max(1, limit)


def _run_points(points, worker, parallel):
    """Evaluate sweep points in input order, optionally concurrently; each
    point builds its own state, so points are fully isolated."""
    if not parallel or len(points) <= 1:
        return [worker(p) for p in points]
    with ThreadPoolExecutor(max_workers=_workers(len(points))) as pool:
        return list(pool.map(worker, points))


def run_robustness_sweep(cfg, out_dir, parallel=False):
    """Condition number versus coefficient contrast for each fixed
    eigenvector count; CSV columns mirror 'Contrast, 2 EV, 3 EV, ...'."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    evs = sorted(cfg.evs)
    summary = RunSummary(kind="robustness")

    def point(args):
        index, contrast = args
        row = [contrast]
        records, failures = [], []
        try:
            setup = build_problem(cfg, cfg.nx, cfg.ny, contrast)
            decomp = build_decomposition(
                setup.mesh, setup.dofmap, cfg.px, cfg.py, cfg.overlap_layers
            )
            pou = build_pou(cfg, decomp, setup.dirichlet_dofs)
            selection = SelectionRule.fixed(max(evs), max_evs=cfg.max_evs)
            t0 = time.perf_counter()
            basis_full, _, timers = build_coarse_space(
                cfg, setup, decomp, pou, selection, (cfg.seed, index)
            )
            factors = local_factorizations(setup.matrix, decomp)
            factor_s = time.perf_counter() - t0 - timers["eigen_s"] - timers["coarse_s"]
            k0 = coverage_constant(decomp)
            bound = theoretical_condition_bound(
                k0,
                [s.diameter for s in decomp.subdomains],
                [s.overlap_width for s in decomp.subdomains],
            )
            rows_cache = subdomain_rows(setup.matrix, decomp)
        except Exception as exc:  # noqa: BLE001 - sweep must continue
            return [contrast] + [np.nan] * len(evs), [], [f"contrast {contrast:g}: {exc}"]
        for ev in evs:
            try:
                basis = basis_full.trimmed(ev)
                coarse = assemble_coarse(decomp, rows_cache, basis)
                precond = SchwarzPreconditioner(
                    setup.matrix, decomp, "two_level", coarse, local_factors=factors
                )
                _, rep = pcg(
                    setup.matrix,
                    setup.rhs,
                    precond,
                    tol=cfg.solver_tol,
                    max_iter=cfg.max_iter,
                    x0=setup.lift,
                )
                row.append(rep.kappa_est)
                records.append(
                    [
                        cfg.problem,
                        contrast,
                        f"{cfg.px}x{cfg.py}",
                        ev,
                        coarse.dim,
                        rep.iterations,
                        rep.kappa_est,
                        bound,
                        timers["eigen_s"] + timers["coarse_s"] + factor_s,
                        rep.timings.get("cg_s", 0.0),
                    ]
                )
            except Exception as exc:  # noqa: BLE001
                row.append(np.nan)
                failures.append(f"contrast {contrast:g}, {ev} EV: {exc}")
        return row, records, failures

    results = _run_points(list(enumerate(cfg.contrasts)), point, parallel)
    rows, records = [], []
    for row, recs, fails in results:
        rows.append(row)
        records.extend(recs)
        summary.failures.extend(fails)
    header = ["Contrast"] + [f"{ev} EV" for ev in evs]
    table = _write_csv(out_dir / f"{cfg.prefix}_cond.csv", header, rows)
    summary.tables.append(table)
    summary.runs_log = _append_runs(out_dir / "runs.csv", records)
    return summary


def run_coarse_error_study(cfg, out_dir, parallel=False):
    """Relative energy error of the coarse-only solve per eigenvector count,
    with a nodal error-field dump for each count."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    evs = sorted(cfg.evs)
    summary = RunSummary(kind="coarse_error")
    setup = build_problem(cfg, cfg.nx, cfg.ny, cfg.contrast)
    decomp = build_decomposition(setup.mesh, setup.dofmap, cfg.px, cfg.py, cfg.overlap_layers)
    pou = build_pou(cfg, decomp, setup.dirichlet_dofs)
    k0 = coverage_constant(decomp)

    t0 = time.perf_counter()
    direct = factorize(setup.matrix)
    v_exact = direct.solve(setup.rhs)
    v0 = v_exact - setup.lift
    direct_s = time.perf_counter() - t0

    selection = SelectionRule.fixed(max(evs), max_evs=cfg.max_evs)
    basis_full, _, timers = build_coarse_space(cfg, setup, decomp, pou, selection, (cfg.seed,))
    rows_cache = subdomain_rows(setup.matrix, decomp)

    rows, records = [], []
    for ev in evs:
        basis = basis_full.trimmed(ev)
        coarse = assemble_coarse(decomp, rows_cache, basis)
        t1 = time.perf_counter()
        v_h = coarse_solve(coarse, setup.rhs)
        solve_s = time.perf_counter() - t1
        report = check_error_bound(setup.matrix, coarse, v0, k0, basis.next_eigenvalue)
        if report.violated:
            summary.bound_violations.append(
                f"{ev} EV: error {report.error:.3e} exceeds bound {report.bound:.3e}"
            )
        rows.append(
            [ev, coarse.dim, report.error, report.relative_error, report.bound, report.ratio]
        )
        dump = FieldDump(setup.mesh, setup.dofmap.ndof_per_node, v0 - v_h)
        dump_path = out_dir / f"{cfg.prefix}_error_field_{ev}ev.csv"
        dump.write_csv(dump_path)
        summary.dumps.append(str(dump_path))
        if cfg.vtk:
            vtk_path = out_dir / f"{cfg.prefix}_error_field_{ev}ev.vtk"
            dump.write_vtk(vtk_path, name="coarse_error")
            summary.dumps.append(str(vtk_path))
        records.append(
            [
                cfg.problem,
                cfg.contrast,
                f"{cfg.px}x{cfg.py}",
                ev,
                coarse.dim,
                0,
                None,
                None,
                timers["eigen_s"] + timers["coarse_s"] + direct_s,
                solve_s,
            ]
        )
    header = ["evs", "dim_VH", "energy_error", "rel_energy_error", "bound", "ratio"]
    table = _write_csv(out_dir / f"{cfg.prefix}_coarse_error.csv", header, rows)
    summary.tables.append(table)

    solution = FieldDump(setup.mesh, setup.dofmap.ndof_per_node, v0)
    sol_path = out_dir / f"{cfg.prefix}_solution.csv"
    solution.write_csv(sol_path)
    summary.dumps.append(str(sol_path))
    _dump_coefficients(out_dir / f"{cfg.prefix}_coefficients.csv", setup, summary)
    summary.runs_log = _append_runs(out_dir / "runs.csv", records)
    return summary


def _dump_coefficients(path, setup, summary):
    centers = setup.mesh.element_centers()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for (x, y), v in zip(centers, setup.field.values):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    summary.dumps.append(str(path))


def run_scaling_study(cfg, out_dir, parallel=False):
    """One-level versus two-level iteration counts over a subdomain-grid
    sweep at fixed per-subdomain size, with coarse-exchange counters."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = RunSummary(kind="scaling")

    def point(args):
        index, (px, py) = args
        records, failures, violations = [], [], []
        try:
            nx, ny = px * cfg.nx, py * cfg.ny
            setup = build_problem(cfg, nx, ny, cfg.contrast)
            decomp = build_decomposition(setup.mesh, setup.dofmap, px, py, cfg.overlap_layers)
            pou = build_pou(cfg, decomp, setup.dirichlet_dofs)
            k0 = coverage_constant(decomp)
            bound = theoretical_condition_bound(
                k0,
                [s.diameter for s in decomp.subdomains],
                [s.overlap_width for s in decomp.subdomains],
            )
            t0 = time.perf_counter()
            factors = local_factorizations(setup.matrix, decomp)
            factor_s = time.perf_counter() - t0

            one = SchwarzPreconditioner(
                setup.matrix, decomp, "one_level", local_factors=factors
            )
            _, rep1 = pcg(
                setup.matrix, setup.rhs, one,
                tol=cfg.solver_tol, max_iter=cfg.max_iter, x0=setup.lift,
            )
            records.append(
                [cfg.problem, cfg.contrast, f"{px}x{py}", 0, 0, rep1.iterations,
                 rep1.kappa_est, None, factor_s, rep1.timings.get("cg_s", 0.0)]
            )

            selection = (
                SelectionRule.threshold(cfg.tau, max_evs=cfg.max_evs)
                if cfg.selection_mode == "threshold"
                else SelectionRule.fixed(max(cfg.evs), max_evs=cfg.max_evs)
            )
            basis, coarse, timers = build_coarse_space(
                cfg, setup, decomp, pou, selection, (cfg.seed, index)
            )
            two = SchwarzPreconditioner(
                setup.matrix, decomp, "two_level", coarse, local_factors=factors
            )
            _, rep2 = pcg(
                setup.matrix, setup.rhs, two,
                tol=cfg.solver_tol, max_iter=cfg.max_iter, x0=setup.lift,
            )
            label = (
                f"tau={cfg.tau:g}" if cfg.selection_mode == "threshold" else max(cfg.evs)
            )
            records.append(
                [cfg.problem, cfg.contrast, f"{px}x{py}", label, coarse.dim,
                 rep2.iterations, rep2.kappa_est, bound,
                 factor_s + timers["eigen_s"] + timers["coarse_s"],
                 rep2.timings.get("cg_s", 0.0)]
            )
            bound_ok = True
            if cfg.selection_mode == "threshold" and rep2.kappa_est is not None:
                bound_ok = rep2.kappa_est <= bound
                if not bound_ok:
                    violations.append(
                        f"grid {px}x{py}: kappa estimate {rep2.kappa_est:.3e} "
                        f"exceeds theoretical bound {bound:.3e}"
                    )
            row = [
                f"{px}x{py}", px * py, rep1.iterations, rep1.kappa_est,
                rep2.iterations, rep2.kappa_est, coarse.dim,
                coarse.stats.messages, coarse.stats.bytes, bound, bound_ok,
            ]
            return row, records, failures, violations
        except Exception as exc:  # noqa: BLE001 - sweep must continue
            failures.append(f"grid {px}x{py}: {exc}")
            return [f"{px}x{py}"] + [np.nan] * 10, records, failures, violations

    results = _run_points(list(enumerate(cfg.grids)), point, parallel)
    rows, records = [], []
    for row, recs, fails, viols in results:
        rows.append(row)
        records.extend(recs)
        summary.failures.extend(fails)
        summary.bound_violations.extend(viols)
    header = [
        "grid", "subdomains", "one_level_iterations", "one_level_kappa",
        "two_level_iterations", "two_level_kappa", "dim_VH",
        "messages", "bytes", "kappa_bound", "bound_ok",
    ]
    table = _write_csv(out_dir / f"{cfg.prefix}_scaling.csv", header, rows)
    summary.tables.append(table)
    summary.runs_log = _append_runs(out_dir / "runs.csv", records)
    return summary


def run_experiment(cfg, out_dir, parallel=False, make_plots=True):
    """Dispatch one experiment config; optionally render figures next to the
    CSV tables."""
    runners = {
        "robustness": run_robustness_sweep,
        "coarse_error": run_coarse_error_study,
        "scaling": run_scaling_study,
    }
    summary = runners[cfg.kind](cfg, out_dir, parallel=parallel)
    if make_plots:
        from . import plots

        try:
            summary.figures.extend(plots.render_summary(cfg, summary, out_dir))
        except Exception as exc:  # noqa: BLE001 - plotting must not fail the run
            summary.failures.append(f"plotting: {exc}")
    return summary
