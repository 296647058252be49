"""Experiment runners turning an :class:`ExperimentConfig` into a :class:`Report`."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma

from ..coefficient import Mollifier, mollify, parse_coefficient
from ..covering import build_vitali_cover, eq1_bound, partition_error
from ..domain import Domain, build_grid
from ..energy import PairIndicator, QuadratureScheme, ScalarField, block_pair_sums, local_energy, nonlocal_energy
from ..kernel import Kernel, c_n
from ..solver import l_p_error, solve_local, solve_nonlocal
from . import fixtures
from .config import ConfigError, ExperimentConfig
from .report import Report, Row, fit_order


def _domain(cfg: ExperimentConfig) -> Domain:
    try:
        return Domain(cfg.domain.lower, cfg.domain.upper)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def grid_for(cfg: ExperimentConfig, domain: Domain, delta: float):
    """Grid for one horizon, honouring ``horizon_nodes`` when set."""
    if cfg.grid.horizon_nodes:
        m = int(cfg.grid.horizon_nodes)
        n = [int(round(m * (side + 2 * delta) / delta)) + 1 for side in domain.sides]
    else:
        n = list(cfg.grid.n)
    grid = build_grid(domain, n, delta)
    if not delta > 2 * float(np.max(grid.spacing)):
        raise ConfigError(f"resolution guard: delta={delta} is not above twice the spacing {np.max(grid.spacing)}")
    return grid


def _kernel(cfg: ExperimentConfig, delta: float, dim: int) -> Kernel:
    k = cfg.kernel
    return Kernel(k.family, delta, k.p, dim, k.normalization)


def _scheme(cfg: ExperimentConfig) -> QuadratureScheme:
    return QuadratureScheme(cfg.kernel.rule)


def _coefficient(cfg: ExperimentConfig, domain: Domain, grid=None):
    h = parse_coefficient(cfg.coefficient.spec, domain)
    if cfg.coefficient.mollify is not None and grid is not None:
        h = mollify(h, Mollifier(cfg.coefficient.mollify, domain.dim), grid)
    return h


def default_tol_ineq(spacing: float, delta_min: float, local: float) -> float:
    return 5.0 * (spacing + delta_min) * (local + 1.0)


def _metadata(cfg: ExperimentConfig, grids) -> dict:
    return {
        "name": cfg.name,
        "dim": len(cfg.domain.lower),
        "domain": [list(cfg.domain.lower), list(cfg.domain.upper)],
        "grid_nodes": [list(g.n_per_axis) for g in grids],
        "spacing": [float(np.max(g.spacing)) for g in grids],
        "kernel": cfg.kernel.family,
        "p": float(cfg.kernel.p),
        "normalization": cfg.kernel.normalization,
        "rule": cfg.kernel.rule,
        "coefficient": cfg.coefficient.spec,
        "field": cfg.field.u,
        "load": cfg.load.f,
    }


def _inequality_verdicts(report: Report, cfg: ExperimentConfig, spacing: float) -> None:
    if not report.rows:
        return
    last = report.rows[-1]
    tol = cfg.sweep.tol_ineq
    if tol is None:
        tol = default_tol_ineq(spacing, last.delta, last.local)
    report.tol_ineq = tol
    report.verdicts["inequality"] = last.gap >= -tol
    report.order = fit_order([r.delta for r in report.rows], [r.gap for r in report.rows])
    if cfg.sweep.min_order is not None:
        report.verdicts["min_order"] = report.order is None or report.order >= cfg.sweep.min_order
    if cfg.sweep.max_order is not None:
        report.verdicts["max_order"] = report.order is None or report.order <= cfg.sweep.max_order


def run_ponce_sweep(cfg: ExperimentConfig) -> Report:
    """Nonlocal energy over the box against the local weighted energy, per horizon."""
    domain = _domain(cfg)
    p = float(cfg.kernel.p)
    report = Report(cfg.experiment)
    grids = []
    energies = []
    for delta in cfg.sweep.deltas:
        grid = grid_for(cfg, domain, delta)
        grids.append(grid)
        h = _coefficient(cfg, domain, grid)
        kernel = _kernel(cfg, delta, domain.dim)
        if cfg.field.u == "solve":
            f = ScalarField.from_function(grid, fixtures.field(cfg.load.f), constrained=False)
            res = solve_nonlocal(f, h, kernel, grid, scheme=_scheme(cfg))
            ref = solve_local(f, h, grid, p)
            nl = nonlocal_energy(res.u, h, kernel, _scheme(cfg), "omega")
            energies.append(nonlocal_energy(res.u, h, kernel, _scheme(cfg), "omega_delta"))
            row = Row(delta, nl, local_energy(ref, h, p), l_p_error(res.u, ref, p), res.iterations)
        else:
            u = ScalarField.from_function(grid, fixtures.field(cfg.field.u), constrained=False)
            row = Row(delta, nonlocal_energy(u, h, kernel, _scheme(cfg), "omega"), local_energy(u, h, p))
        report.rows.append(row)
    report.metadata = _metadata(cfg, grids)
    if energies:
        report.metadata["h1_bound"] = max(energies)
        report.metadata["h1_energies"] = energies
    _inequality_verdicts(report, cfg, float(np.max(grids[-1].spacing)) if grids else 0.0)
    return report


def run_measurable_check(cfg: ExperimentConfig) -> Report:
    """Sweep with a discontinuous (piecewise constant) coefficient."""
    domain = _domain(cfg)
    if parse_coefficient(cfg.coefficient.spec, domain).kind != "simple":
        raise ConfigError("measurable_check needs a simple or checkerboard coefficient")
    return run_ponce_sweep(cfg)


def _instance_fields(cfg: ExperimentConfig, grid, rng):
    if cfg.field.u == "random":
        return [ScalarField(grid, rng.standard_normal(grid.size), np.zeros(grid.size, bool))
                for _ in range(cfg.sweep.instances)]
    return [ScalarField.from_function(grid, fixtures.field(cfg.field.u), constrained=False)]


def block_inequality(u: ScalarField, h, kernel: Kernel, scheme: QuadratureScheme) -> tuple[float, float]:
    """Both sides of the block lower bound for a simple coefficient.

    Returns ``(full, blocks)``: the double sum over all pairs and the sum of
    its diagonal blocks, where the midpoint coefficient equals ``h_i``.
    Both are correctly rounded sums of the same nonnegative partial sums, so
    ``full >= blocks`` holds exactly.
    """
    sums = block_pair_sums(u, h, kernel, scheme, "omega")
    return math.fsum(sums.ravel()), math.fsum(np.diag(sums))


def indicator_identity(u: ScalarField, mask: np.ndarray, kernel: Kernel, scheme: QuadratureScheme) -> tuple[float, float]:
    """Energy with the pair indicator of ``G x G`` and with ``h = 1`` on pairs inside ``G``."""
    one = parse_coefficient("const:1", u.grid.domain)
    with_indicator = nonlocal_energy(u, PairIndicator(mask), kernel, scheme, "omega")
    inside = nonlocal_energy(u, one, kernel, scheme, np.asarray(mask))
    return with_indicator, inside


def run_simple_check(cfg: ExperimentConfig) -> Report:
    """Exact block lower bound and indicator identity for a simple coefficient.

    Rows hold ``nonlocal`` = full double sum and ``local`` = sum over the
    diagonal blocks, so ``gap`` is the discarded cross-block mass.
    """
    domain = _domain(cfg)
    rng = np.random.default_rng(cfg.sweep.seed)
    report = Report(cfg.experiment)
    grids = []
    block_ok = identity_ok = True
    for delta in cfg.sweep.deltas:
        grid = grid_for(cfg, domain, delta)
        grids.append(grid)
        h = parse_coefficient(cfg.coefficient.spec, domain)
        if h.kind != "simple":
            raise ConfigError("simple_check needs a simple or checkerboard coefficient")
        kernel = _kernel(cfg, delta, domain.dim)
        mask = h.block_index(grid.nodes) == 0
        for i, u in enumerate(_instance_fields(cfg, grid, rng)):
            full, blocks = block_inequality(u, h, kernel, _scheme(cfg))
            ind, inside = indicator_identity(u, mask, kernel, _scheme(cfg))
            block_ok &= full >= blocks
            identity_ok &= ind == inside
            report.checks.append({"delta": delta, "instance": i, "full": full, "blocks": blocks,
                                  "discarded": full - blocks, "indicator": ind, "inside_G": inside})
            if i == 0:
                report.rows.append(Row(delta, full, blocks))
    report.verdicts["block_bound"] = bool(block_ok)
    report.verdicts["indicator_identity"] = bool(identity_ok)
    report.metadata = _metadata(cfg, grids)
    return report


def run_gconv(cfg: ExperimentConfig) -> Report:
    """Nonlocal solutions against the local solution, per horizon."""
    domain = _domain(cfg)
    p = float(cfg.kernel.p)
    if domain.dim == 2 and p != 2:
        raise ConfigError("2D G-convergence runs need p = 2")
    report = Report(cfg.experiment)
    grids = []
    ref_energies = []
    for delta in cfg.sweep.deltas:
        grid = grid_for(cfg, domain, delta)
        grids.append(grid)
        h = _coefficient(cfg, domain, grid)
        kernel = _kernel(cfg, delta, domain.dim)
        f = ScalarField.from_function(grid, fixtures.field(cfg.load.f), constrained=False)
        res = solve_nonlocal(f, h, kernel, grid, scheme=_scheme(cfg))
        ref = solve_local(f, h, grid, p)
        local = local_energy(ref, h, p)
        ref_energies.append(local)
        energy = nonlocal_energy(res.u, h, kernel, _scheme(cfg), "omega_delta")
        report.rows.append(Row(delta, energy, local, l_p_error(res.u, ref, p), res.iterations))
    report.metadata = _metadata(cfg, grids)
    errors = [r.sol_err for r in report.rows]
    energies = [r.nonlocal_ for r in report.rows]
    report.metadata["h1_bound"] = max(energies, default=0.0)
    report.metadata["h1_energies"] = energies
    all_zero = all(e <= 1e-14 for e in errors)
    report.verdicts["error_decreasing"] = all_zero or all(b < a for a, b in zip(errors, errors[1:]))
    report.verdicts["uniform_bound"] = max(energies, default=0.0) <= 2.0 * max(ref_energies, default=0.0) + 1e-12
    if cfg.sweep.max_error is not None and errors:
        report.verdicts["max_error"] = errors[-1] <= cfg.sweep.max_error
    return report


def run_vitali_check(cfg: ExperimentConfig) -> Report:
    """Partition error of dyadic covers against the oscillation bound."""
    domain = _domain(cfg)
    report = Report(cfg.experiment)
    for spec in cfg.sweep.f_specs:
        f = parse_coefficient(spec, domain)
        for name in cfg.sweep.xi:
            xi = fixtures.field(name)
            brk = fixtures.breakpoints(name, domain.dim)
            for k in cfg.sweep.k:
                cover = build_vitali_cover(domain, f, int(k), cfg.sweep.residual_tol)
                err = partition_error(cover, f, xi, brk)
                bound = eq1_bound(cover, f, xi, brk)
                ok = err <= bound and cover.residual_measure <= cfg.sweep.residual_tol
                report.checks.append({"f": spec, "xi": name, "k": int(k), "pieces": len(cover.pieces),
                                      "residual": cover.residual_measure, "error": err, "bound": bound, "ok": ok})
                report.verdicts[f"{spec}|{name}|k={k}"] = bool(ok)
    report.metadata = {"name": cfg.name, "dim": domain.dim, "residual_tol": cfg.sweep.residual_tol}
    return report


def c_n_closed_form(dim: int, p: float) -> float:
    """``Gamma(N/2) Gamma((p+1)/2) / (sqrt(pi) Gamma((N+p)/2))``."""
    return float(gamma(dim / 2) * gamma((p + 1) / 2) / (math.sqrt(math.pi) * gamma((dim + p) / 2)))


def run_cn_table(cfg: ExperimentConfig) -> Report:
    """Quadrature values of ``C_N`` against the Gamma-function closed form."""
    report = Report(cfg.experiment)
    for dim in cfg.sweep.dims:
        for p in cfg.sweep.p_values:
            value = c_n(int(dim), float(p))
            exact = c_n_closed_form(int(dim), float(p))
            ok = value == 1.0 if dim == 1 else abs(value - exact) <= 1e-10
            report.checks.append({"dim": int(dim), "p": float(p), "c_n": value, "closed_form": exact, "ok": ok})
            report.verdicts[f"N={dim},p={p}"] = bool(ok)
    report.metadata = {"name": cfg.name}
    return report


RUNNERS = {
    "cn_table": run_cn_table,
    "ponce_sweep": run_ponce_sweep,
    "gconv": run_gconv,
    "vitali_check": run_vitali_check,
    "simple_check": run_simple_check,
    "measurable_check": run_measurable_check,
}


def run_experiment(cfg: ExperimentConfig) -> Report:
    return RUNNERS[cfg.experiment](cfg)
