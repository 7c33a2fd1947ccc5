"""Experiment orchestration: sweeps, bound dominance checks and CSV output."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from . import bounds, evolution, fock, free_oracle, geometry, hamiltonian, tilting
from .config import ConfigError, ExperimentConfig

logger = logging.getLogger(__name__)

__all__ = [
    "EXIT_OK",
    "EXIT_VIOLATION",
    "EXIT_INVALID",
    "EXIT_FAILURE",
    "ResourceError",
    "RunResult",
    "TRANSPORT_COLUMNS",
    "TILTING_COLUMNS",
    "LIGHTCONE_COLUMNS",
    "ORACLE_COLUMNS",
    "run",
    "lightcone_grid",
    "verify_tilting",
    "info",
    "model_parts",
]

EXIT_OK, EXIT_VIOLATION, EXIT_INVALID, EXIT_FAILURE = 0, 1, 2, 3
DOMINANCE_ATOL = 1e-9
DENSE_AGREEMENT = 1e-8
ORACLE_ATOL = 1e-8

TRANSPORT_COLUMNS = ["config_id", "t", "measured_norm", "bound", "probability", "norm_drift"]
TILTING_COLUMNS = ["config_id", "t", "lemma8_measured", "lemma8_bound", "schur_bound", "av",
                   "proj_lhs_X", "proj_rhs_X", "proj_lhs_Y", "proj_rhs_Y"]
LIGHTCONE_COLUMNS = ["config_id", "r", "d_XY", "t", "measured_norm", "bound", "kappa_cone_r", "v_cone_r"]
ORACLE_COLUMNS = ["r", "t", "N", "theta", "probability", "exhibited_bound"]
COMPARISON_COLUMNS = ["N", "r", "t", "theta", "oracle_probability", "engine_probability", "abs_error"]


class ResourceError(RuntimeError):
    pass


@dataclass
class RunResult:
    status: int
    artifacts: dict[str, Path] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def model_parts(cfg: ExperimentConfig, N: int, U: float | None = None, max_dim: int | None = None):
    """(basis, H, J) for one sweep point; H is None when the model has a schedule."""
    m = cfg.model
    dim = fock.sector_dimension(m.statistics, m.lattice.L, N)
    cap = cfg.run.max_dim if max_dim is None else max_dim
    if dim > cap:
        raise ResourceError(f"sector dimension {dim} for N={N} exceeds the cap {cap}")
    basis = fock.build_basis(m.statistics, m.lattice.L, N)
    J = _hopping(cfg, m.J)
    H = None
    if m.schedule is None:
        H = hamiltonian.assemble(basis, J, _potential(cfg, m.U if U is None else U, m.mu))
    return basis, H, J


def _hopping(cfg, J_value):
    m = cfg.model
    if m.hopping == "nearest-neighbor":
        return hamiltonian.nearest_neighbor(m.lattice, J_value)
    return hamiltonian.exponential_decay(m.lattice, J_value, m.gamma)


def _potential(cfg, U, mu):
    m = cfg.model
    if m.potential == "bose-hubbard":
        return hamiltonian.PotentialSpec.bose_hubbard(U, mu, m.fields)
    return hamiltonian.PotentialSpec("zero", fields=m.fields)


def _schedule_pieces(cfg, basis, U_override=None):
    m = cfg.model
    pieces = []
    for p in m.schedule:
        U = p.get("U", m.U if U_override is None else U_override)
        pieces.append(hamiltonian.Piece(p["duration"], _hopping(cfg, p.get("J", m.J)),
                                        _potential(cfg, U, p.get("mu", m.mu))))
    return pieces


def _initial_state(cfg, basis):
    reg = cfg.regions
    pY = fock.threshold_projector(basis, reg.Y, 1 - reg.alpha)
    if reg.initial == "ensemble":
        w = pY / pY.sum()
        return evolution.DiagonalEnsemble(w)
    occ = np.zeros(basis.L, dtype=int)
    occ[min(reg.Y)] = basis.N
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.lookup(occ)[0]] = 1.0
    return psi


def _a_values(cfg, d, t, v_cache):
    """(label, a, v) triples for one time point."""
    bc = cfg.bound
    lat = cfg.model.lattice
    if not bc.auto:
        return [(f"a={a:g}", a, v_cache(a)) for a in bc.a]
    if cfg.model.hopping != "nearest-neighbor":
        raise ConfigError("a = auto requires nearest-neighbor hopping", "bound", "a")
    reg = cfg.regions
    try:
        a = hamiltonian.optimal_a(abs(cfg.model.J), lat.dimension, reg.beta - reg.alpha, d, t).a_star
        a = min(a, bc.a_max)
    except hamiltonian.NoSupersonicSeparationError:
        a = bc.a_max if t == 0 else 1.0
    return [("a=auto", a, v_cache(a))]


def _velocity_cache(cfg, J):
    cache = {}

    def v(a):
        if a not in cache:
            if cfg.model.schedule is not None:
                cache[a] = hamiltonian.schedule_velocity(_schedule_pieces(cfg, None), cfg.model.lattice, a)
            else:
                cache[a] = hamiltonian.velocity_v(J, cfg.model.lattice, a)
        return cache[a]
    return v


def _sweep_points(cfg):
    Ns = cfg.sweep.N or [cfg.model.N]
    Us = cfg.sweep.U or [cfg.model.U]
    return list(product(Ns, Us))


def _dense_schedule_norm(pieces_h, basis, X, Y, alpha, beta, t):
    rows = np.nonzero(fock.threshold_projector(basis, X, beta))[0]
    cols = np.nonzero(fock.threshold_projector(basis, Y, 1 - alpha))[0]
    if len(rows) == 0 or len(cols) == 0:
        return 0.0, 1.0
    U = np.eye(basis.dim, dtype=complex)
    remaining = t
    for d, H in pieces_h:
        step = min(d, remaining)
        if step <= 0:
            break
        U = evolution.dense_propagator(H, step) @ U
        remaining -= step
    if remaining > 1e-12:
        raise ValueError("time grid extends beyond the schedule")
    return float(linalg.svdvals(U[np.ix_(rows, cols)])[0]), None


def _transport_point(cfg, N, U):
    """All rows for one (N, U) sweep point plus bookkeeping."""
    reg = cfg.regions
    lat = cfg.model.lattice
    d = geometry.region_distance(lat, reg.X, reg.Y)
    schedule = cfg.model.schedule is not None
    basis, H, J = model_parts(cfg, N, U, cfg.run.max_dense_dim if schedule else None)
    vfun = _velocity_cache(cfg, J)
    rho0 = _initial_state(cfg, basis)
    times = list(cfg.sweep.t)
    out = {"rows": [], "violations": 0, "max_dense_gap": 0.0, "max_drift": 0.0, "max_ratio": 0.0,
           "unconverged": 0}
    if not times:
        return out
    if schedule:
        pieces_h = hamiltonian.assemble_schedule(basis, _schedule_pieces(cfg, basis, U))
        psi = rho0 if not isinstance(rho0, evolution.DiagonalEnsemble) else None
    for t in times:
        if schedule:
            measured, _ = _dense_schedule_norm(pieces_h, basis, reg.X, reg.Y, reg.alpha, reg.beta, t)
            if psi is not None:
                pt = evolution.evolve_schedule(pieces_h, psi, t)
                pX = fock.threshold_projector(basis, reg.X, reg.beta)
                prob = float(np.sum(pX * np.abs(pt) ** 2))
                drift = abs(np.linalg.norm(pt) - 1.0)
            else:
                prob, drift = float("nan"), 0.0
        else:
            cn = evolution.cone_norm(H, basis, reg.X, reg.Y, reg.alpha, reg.beta, t, seed=cfg.run.seed,
                                     cross_check=basis.dim <= cfg.run.max_dense_dim)
            measured = cn.value
            if not cn.converged:
                out["unconverged"] += 1
            if cn.dense_value is not None:
                out["max_dense_gap"] = max(out["max_dense_gap"], abs(cn.value - cn.dense_value))
            if isinstance(rho0, evolution.DiagonalEnsemble):
                prob = evolution.transport_probability(H, basis, rho0, reg.X, reg.Y, reg.alpha, reg.beta, t)
                drift = 0.0
            else:
                res = evolution.transport_sweep(H, basis, rho0, reg.X, reg.Y, reg.alpha, reg.beta, [t])
                prob, drift = float(res.amplitudes[0]), float(res.norm_drift[0])
        out["max_drift"] = max(out["max_drift"], drift)
        for label, a, v in _a_values(cfg, d, t, vfun):
            raw = bounds.BoundEvaluation(bounds.log_norm_bound(a, v, reg.alpha, reg.beta, d, N, t))
            cid = f"{cfg.run.id}:N={N}:U={U:g}:{label}"
            out["rows"].append([cid, float(t), measured, raw.norm_bound, prob, drift])
            if measured > raw.norm_bound + DOMINANCE_ATOL:
                out["violations"] += 1
            out["max_ratio"] = max(out["max_ratio"], measured / raw.norm_bound if raw.norm_bound > 0 else 0)
    return out


def _pool_map(cfg, fn, items):
    if cfg.run.workers <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=cfg.run.workers) as ex:
        return list(ex.map(lambda it: fn(*it), items))


def _oracle_comparison(cfg: ExperimentConfig):
    o = cfg.oracle
    m = cfg.model
    lat = m.lattice
    if lat.dimension != 1 or m.statistics != "boson" or m.hopping != "nearest-neighbor":
        raise ConfigError("[oracle] needs a bosonic nearest-neighbor chain", "oracle")
    L = lat.L
    chain = free_oracle.OneBodyChain(L, m.J, m.fields)
    f = np.zeros(L)
    f[o.initial_site] = 1.0
    X = list(range(o.r, L))
    Y = [o.initial_site]
    comp_rows, max_err = [], 0.0
    for N in o.N:
        basis = fock.build_basis("boson", L, N)
        if basis.dim > cfg.run.max_dim:
            raise ResourceError(f"sector dimension {basis.dim} exceeds the cap")
        H = hamiltonian.assemble(basis, hamiltonian.nearest_neighbor(lat, m.J),
                                 hamiltonian.PotentialSpec("zero", fields=m.fields))
        psi0 = free_oracle.product_state(basis, f)
        res = evolution.transport_sweep(H, basis, psi0, X, Y, 0.0, o.theta, o.t)
        for t, pe in zip(o.t, res.amplitudes):
            po = free_oracle.cluster_probability(chain, f, o.r, o.theta, N, t)
            err = abs(po - pe)
            max_err = max(max_err, err)
            comp_rows.append([N, o.r, t, o.theta, po, float(pe), err])
    report_rows = []
    if o.check_r and o.check_t:
        for N in o.N:
            rep = free_oracle.free_massmat_check(chain, o.theta, N, o.check_r, o.check_t, f, o.C, o.v_prime)
            report_rows.extend(rep.rows)
    return comp_rows, report_rows, max_err


def run(cfg: ExperimentConfig, out_dir: Path | None = None) -> RunResult:
    """Execute every block present in the config and persist the CSV artifacts.

    Status is 1 if any measured value exceeds its bound (or the oracle and the
    engine disagree), 3 on resource or convergence failures, 0 otherwise.
    """
    res = RunResult(EXIT_OK)
    out = Path(out_dir) if out_dir is not None else cfg.output.dir
    try:
        if cfg.physical is not None:
            p = cfg.physical
            pb = bounds.physical_units_bound(p.N, p.J_over_hbar, p.r0, p.D, p.beta_minus_alpha, p.ell, p.t, p.mode)
            res.summary["physical"] = pb
            res.messages.append(f"physical bound ({pb.mode}): exponent = {pb.exponent:.6f}, "
                                f"probability = {pb.probability:.3e}")

        if cfg.model is not None and cfg.regions is not None:
            if cfg.output.profile:
                prof = geometry.separation(cfg.model.lattice, cfg.regions.X, cfg.regions.Y, cfg.regions.strategy)
                path = out / cfg.output.profile
                path.parent.mkdir(parents=True, exist_ok=True)
                prof.to_csv(path, cfg.model.lattice)
                res.artifacts["profile"] = path
            results = _pool_map(cfg, lambda N, U: _transport_point(cfg, N, U), _sweep_points(cfg))
            rows = [r for pt in results for r in pt["rows"]]
            path = out / cfg.output.csv
            _write_csv(path, TRANSPORT_COLUMNS, rows)
            res.artifacts["transport"] = path
            viol = sum(pt["violations"] for pt in results)
            gap = max((pt["max_dense_gap"] for pt in results), default=0.0)
            drift = max((pt["max_drift"] for pt in results), default=0.0)
            res.summary.update(points=len(rows), violations=viol, max_dense_gap=gap, max_norm_drift=drift,
                               max_measured_over_bound=max((pt["max_ratio"] for pt in results), default=0.0),
                               unconverged=sum(pt["unconverged"] for pt in results))
            res.messages.append(f"transport sweep: {len(rows)} rows, {viol} bound violations, "
                                f"max |krylov - dense| = {gap:.2e}, max norm drift = {drift:.2e}")
            if viol:
                res.status = max(res.status, EXIT_VIOLATION)
            if gap > DENSE_AGREEMENT:
                res.messages.append("cone norm disagrees with the dense oracle")
                res.status = EXIT_FAILURE

            if cfg.sweep.r:
                grid = lightcone_grid(cfg)
                path = out / cfg.output.lightcone
                _write_csv(path, LIGHTCONE_COLUMNS, grid.rows)
                res.artifacts["lightcone"] = path
                res.summary["lightcone_violations"] = grid.violations
                res.messages.append(f"light-cone grid: {len(grid.rows)} cells, {grid.violations} violations")
                if grid.violations:
                    res.status = max(res.status, EXIT_VIOLATION)

            if cfg.output.verify_tilting:
                status, path, msgs = _verify_tilting_to(cfg, out)
                res.artifacts["tilting"] = path
                res.messages.extend(msgs)
                res.status = max(res.status, status) if res.status != EXIT_FAILURE else res.status

        if cfg.oracle is not None:
            comp, report, err = _oracle_comparison(cfg)
            path = out / cfg.output.comparison
            _write_csv(path, COMPARISON_COLUMNS, comp)
            res.artifacts["comparison"] = path
            if report:
                path = out / cfg.output.oracle
                _write_csv(path, ORACLE_COLUMNS, report)
                res.artifacts["oracle"] = path
            res.summary["oracle_max_abs_error"] = err
            res.messages.append(f"oracle-vs-engine max abs error = {err:.3e}")
            if err > ORACLE_ATOL:
                res.status = max(res.status, EXIT_VIOLATION)
    except (ResourceError, evolution.PropagationError, tilting.TiltingOverflowError) as e:
        res.status = EXIT_FAILURE
        res.messages.append(f"error: {e}")
    return res


@dataclass
class LightconeGrid:
    r: np.ndarray
    t: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    kappa_cone: np.ndarray
    v_cone: np.ndarray
    rows: list
    violations: int


def _lightcone_region(lat, Y, r, mode):
    dY = cKDTree(lat.coords[list(Y)]).query(lat.coords)[0]
    if mode == "shell":
        sel = np.abs(dY - r) <= 1e-9
    else:
        sel = dY >= r - 1e-9
    return [int(i) for i in np.nonzero(sel)[0]]


def lightcone_grid(cfg: ExperimentConfig, N: int | None = None, U: float | None = None) -> LightconeGrid:
    """Measured cone norms and bounds over (r, t) for regions X_r at distance r from Y.

    X_r is the tail {x : dist_Y(x) >= r} or, with ``lightcone_x = shell``, the
    sites at distance exactly r.  The first configured a is used for the
    bound (or a* per cell with ``a = auto``), and the kappa- and v-cone
    positions kappa t / (beta - alpha), v t / (beta - alpha) are attached.
    """
    reg = cfg.regions
    lat = cfg.model.lattice
    N = N if N is not None else (cfg.sweep.N[0] if cfg.sweep.N else cfg.model.N)
    U = U if U is not None else (cfg.sweep.U[0] if cfg.sweep.U else cfg.model.U)
    basis, H, J = model_parts(cfg, N, U)
    if H is None:
        raise ConfigError("light-cone grids need a time-independent model", "sweep", "r")
    vfun = _velocity_cache(cfg, J)
    k = hamiltonian.kappa(J, lat)
    rs = np.array(cfg.sweep.r, dtype=int)
    ts = np.array(cfg.sweep.t, dtype=float)
    meas = np.zeros((len(rs), len(ts)))
    bnd = np.ones((len(rs), len(ts)))
    v_ref = vfun(cfg.bound.a[0]) if not cfg.bound.auto else vfun(1.0)
    dba = reg.beta - reg.alpha
    rows, viol = [], 0
    for i, r in enumerate(rs):
        X = [x for x in _lightcone_region(lat, reg.Y, r, cfg.sweep.lightcone_x) if x not in reg.Y]
        if not X:
            raise ConfigError(f"no sites at distance {r} from Y", "sweep", "r")
        d = geometry.region_distance(lat, X, reg.Y)
        for j, t in enumerate(ts):
            meas[i, j] = evolution.cone_norm(H, basis, X, reg.Y, reg.alpha, reg.beta, t, seed=cfg.run.seed,
                                             cross_check=False).value
            label, a, v = _a_values(cfg, d, t, vfun)[0]
            bnd[i, j] = bounds.BoundEvaluation(bounds.log_norm_bound(a, v, reg.alpha, reg.beta, d, N, t)).norm_bound
            if meas[i, j] > bnd[i, j] + DOMINANCE_ATOL:
                viol += 1
            rows.append([f"{cfg.run.id}:N={N}:U={U:g}:{label}", int(r), d, float(t), meas[i, j], bnd[i, j],
                         k * t / dba, v_ref * t / dba])
    return LightconeGrid(rs, ts, meas, bnd, k * ts / dba, v_ref * ts / dba, rows, viol)


def _verify_tilting_to(cfg: ExperimentConfig, out: Path):
    reg = cfg.regions
    lat = cfg.model.lattice
    prof = geometry.separation(lat, reg.X, reg.Y, reg.strategy)
    rows, violations, msgs = [], 0, []
    a_list = cfg.bound.a if not cfg.bound.auto else [1.0]
    for N, U in _sweep_points(cfg):
        basis, H, J = model_parts(cfg, N, U, cfg.run.max_dense_dim)
        pieces = None
        if H is None:
            sched = _schedule_pieces(cfg, basis, U)
            pieces = hamiltonian.assemble_schedule(basis, sched)
        for a in a_list:
            w = tilting.tilting_weights(prof, a)
            if pieces is None:
                v = hamiltonian.velocity_v(J, lat, a)
                dh = tilting.deformed_hopping(J, w, lat)
            else:
                v = hamiltonian.schedule_velocity(sched, lat, a)
                dh = max((tilting.deformed_hopping(p.J, w, lat) for p in sched), key=lambda x: x.schur_bound)
            pb = tilting.projector_tilt_bounds(basis, w, reg.X, reg.Y, reg.alpha, reg.beta)
            chk = tilting.verify_deformed_propagator(H, basis, w, a, v, cfg.sweep.t, pieces=pieces)
            violations += int(chk.violations.sum()) + (0 if pb.holds() else 1)
            violations += int(dh.schur_bound > a * v * (1 + 1e-12))
            lx, ly = pb.lhs
            rx, ry = pb.rhs
            cid = f"{cfg.run.id}:N={N}:U={U:g}:a={a:g}"
            for t, m_, b_ in zip(chk.times, chk.measured, chk.bound):
                rows.append([cid, float(t), float(m_), float(b_), dh.schur_bound, a * v, lx, rx, ly, ry])
    path = out / cfg.output.tilting
    _write_csv(path, TILTING_COLUMNS, rows)
    msgs.append(f"tilting verification: {len(rows)} rows, {violations} violations")
    return (EXIT_VIOLATION if violations else EXIT_OK), path, msgs


def verify_tilting(cfg: ExperimentConfig, out_dir: Path | None = None) -> RunResult:
    if cfg.model is None or cfg.regions is None:
        return RunResult(EXIT_INVALID, messages=["verify-tilting needs [model] and [regions] blocks"])
    out = Path(out_dir) if out_dir is not None else cfg.output.dir
    try:
        status, path, msgs = _verify_tilting_to(cfg, out)
    except (ResourceError, tilting.TiltingOverflowError, ValueError) as e:
        return RunResult(EXIT_FAILURE, messages=[f"error: {e}"])
    return RunResult(status, {"tilting": path}, messages=msgs)


def info(cfg: ExperimentConfig) -> list[str]:
    """Human-readable description of the model, regions and sector sizes."""
    lines = []
    if cfg.model is not None:
        m = cfg.model
        lat = m.lattice
        lines.append(f"lattice: {m.lattice_spec} (L={lat.L}, D={lat.dimension}, "
                     f"edges={len(lat.edges) if lat.edges is not None else 0})")
        lines.append(f"statistics: {m.statistics}; hopping: {m.hopping} J={m.J:g}; potential: {m.potential}")
        J = _hopping(cfg, m.J)
        k = hamiltonian.kappa(J, lat)
        lines.append(f"kappa = {k:.6g}")
        a_list = cfg.bound.a if not cfg.bound.auto else [1.0]
        for a in a_list:
            lines.append(f"v(a={a:g}) = {hamiltonian.velocity_v(J, lat, a):.6g}")
        for N in (cfg.sweep.N or [m.N]):
            dim = fock.sector_dimension(m.statistics, lat.L, N)
            flag = "" if dim <= cfg.run.max_dim else "  (exceeds cap)"
            lines.append(f"sector N={N}: dimension {dim}{flag}")
        if cfg.regions is not None:
            reg = cfg.regions
            d = geometry.region_distance(lat, reg.X, reg.Y)
            prof = geometry.separation(lat, reg.X, reg.Y, reg.strategy)
            counts = {lab: int(np.sum(prof.labels == lab)) for lab in geometry.LABELS}
            lines.append(f"regions: X={reg.X} Y={reg.Y} d_XY={d:.6g} alpha={reg.alpha:g} beta={reg.beta:g}")
            lines.append(f"separation ({reg.strategy}): " + ", ".join(f"{k_}={v_}" for k_, v_ in counts.items()))
    if cfg.physical is not None:
        p = cfg.physical
        lines.append(f"physical example: N={p.N}, J/hbar={p.J_over_hbar:g}/s, r0={p.r0:g} m, ell={p.ell:g}, "
                     f"t={p.t:g} s")
    return lines
