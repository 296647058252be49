"""Built-in fixture matrix run by ``check --all``."""

from __future__ import annotations

from .config import ExperimentConfig, from_dict


def _cfg(experiment: str, **sections) -> ExperimentConfig:
    return from_dict({"experiment": experiment, **sections})


def fixture_matrix(quick: bool = True) -> list[tuple[str, ExperimentConfig]]:
    """``(label, config)`` pairs; ``quick`` shrinks grids for a fast smoke run.

    The p = 3 solve keeps 200 nodes in both modes: coarser grids let the
    discretization error hide the decrease of the error in the horizon.
    """
    m = 100 if quick else 400
    n_solve = 200 if quick else 800
    out = [("cn", _cfg("cn_table"))]
    out.append(("bbm-linear", _cfg(
        "ponce_sweep", grid={"horizon_nodes": 4 * m},
        sweep={"deltas": [0.2, 0.1, 0.05, 0.025], "min_order": 0.8, "max_order": 1.2},
        field={"u": "x"})))
    for u in ("x", "x2", "sin"):
        for spec in ("const:1", "affine:1,1", "checkerboard:1,2,4"):
            for p in (2.0, 3.0):
                continuous = not spec.startswith("checkerboard")
                sweep = {"deltas": [0.2, 0.1, 0.05]}
                if continuous:
                    sweep["min_order"] = 0.8
                experiment = "ponce_sweep" if continuous else "measurable_check"
                out.append((f"ineq-{u}-{spec.split(':')[0]}-p{p:g}", _cfg(
                    experiment, grid={"horizon_nodes": m}, kernel={"p": p},
                    coefficient={"spec": spec}, field={"u": u}, sweep=sweep)))
    out.append(("blocks", _cfg(
        "simple_check", grid={"n": [200]}, coefficient={"spec": "simple:2,3@0.5"},
        field={"u": "random"}, sweep={"deltas": [0.2, 0.1], "instances": 10 if quick else 20})))
    out.append(("gconv-p2", _cfg(
        "gconv", grid={"n": [n_solve]}, sweep={"deltas": [0.2, 0.1, 0.05], "max_error": 2e-2})))
    out.append(("gconv-p3", _cfg(
        "gconv", grid={"n": [200]}, kernel={"p": 3.0}, sweep={"deltas": [0.2, 0.1, 0.05]})))
    out.append(("vitali", _cfg("vitali_check")))
    return out
