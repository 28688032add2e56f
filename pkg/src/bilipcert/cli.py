"""Command-line entry point: ``bilipcert {enumerate,verify,conjugate}``.

Scenes are YAML documents (or ``builtin:<name>``)::

    group:  {k: 2, mode: free}
    action:
      type: circle
      generators:
        - {name: a, rotation: 0.41421356237309515}
        - {name: b, power: {alpha: 2.0, breakpoints: 4096}}
    params: {s: 1.2, R: 8, N: 200, mu_grid: 4096,
             witnesses: [{x: 0, epsilon: 6.0}]}

Point clouds use ``action: {type: pointcloud, distances: [[...]],
generators: [{name: a, permutation: [...]}]}``.  A generator may also be read
from a two-column breakpoint table with ``{name: c, table: path.csv}``.
DEDUP mode takes ``group.resolver: abelian`` or ``group.resolver: probe``.

Exit status: 0 if every certificate passes, 1 if any fails, 2 on a bad
configuration.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .action_space import (
    CircleAction,
    CircleHomeoPL,
    CircleSample,
    PermutationAction,
    PointCloudSample,
    apply_word,
    load_homeo,
    write_table,
)
from .circle_conjugator import certify_conjugation, verify_measure_equivariance
from .group_core import (
    GeneratorSet,
    Mode,
    NormalFormResolver,
    ProbeResolver,
    abelian_normal_form,
    build_weight_table,
    enumerate_ball,
    estimate_critical_exponent,
    free_tail_bound,
)
from .metric_engine import (
    Certificate,
    RegularizedMetric,
    neighborhood_witness,
    verify_bilipschitz_sandwich,
    verify_equivariance,
    verify_generator_bilipschitz,
    verify_lower_bound_identity,
    verify_metric_axioms,
    verify_part3_adjustment,
)


# dyadic angle and sample: rotation images are exact in floating point
DYADIC_ANGLE = round((math.sqrt(2) - 1) * 2**32) / 2**32

BUILTIN_SCENES = {
    "singular": {
        "group": {"k": 2, "mode": "free"},
        "action": {
            "type": "circle",
            "generators": [
                {"name": "a", "rotation": math.sqrt(2) - 1},
                {"name": "b", "power": {"alpha": 2.0, "breakpoints": 4096}},
            ],
        },
        "params": {"s": 1.2, "R": 8, "N": 200, "mu_grid": 4096, "witnesses": [{"x": 0, "epsilon": 6.0}]},
    },
    "rotation": {
        "group": {"k": 1, "mode": "free"},
        "action": {"type": "circle", "generators": [{"name": "a", "rotation": DYADIC_ANGLE}]},
        "params": {
            "s": 0.7,
            "R": 12,
            "N": 256,
            "witnesses": [{"x": 0, "epsilon": 0.05}],
            "adjustment": {"L": 1.0, "u": 0.5},
        },
    },
    "trivial": {
        "group": {"k": 0, "mode": "free"},
        "action": {"type": "circle", "generators": []},
        "params": {"s": 1.0, "R": 4, "N": 16, "witnesses": [{"x": 0, "epsilon": 0.1}]},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class Scene:
    gens: GeneratorSet
    resolver: object
    kind: str
    generators: list
    names: list[str]
    space: object
    action: object
    params: dict


def load_config(source: str) -> dict:
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name not in BUILTIN_SCENES:
            raise ConfigError(f"unknown built-in scene {name!r}; choose from {sorted(BUILTIN_SCENES)}")
        return copy.deepcopy(BUILTIN_SCENES[name])
    path = Path(source)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with group, action and params")
    data.setdefault("_base", str(path.parent))
    return data


def _circle_generator(g: dict, base: Path) -> CircleHomeoPL:
    if "rotation" in g:
        return CircleHomeoPL.rotation(float(g["rotation"]))
    if "power" in g:
        p = g["power"] or {}
        return CircleHomeoPL.power_map(float(p.get("alpha", 2.0)), int(p.get("breakpoints", 4096)))
    if "table" in g:
        return load_homeo(base / g["table"])
    if "breakpoints" in g and "values" in g:
        return CircleHomeoPL(g["breakpoints"], g["values"])
    raise ConfigError(f"generator {g.get('name')!r} needs rotation, power, table or breakpoints/values")


def build_scene(cfg: dict, radius: int | None = None, exponent: float | None = None) -> Scene:
    try:
        group, action, params = cfg["group"], cfg["action"], dict(cfg.get("params") or {})
    except (KeyError, TypeError):
        raise ConfigError("config needs group, action and params sections") from None
    base = Path(cfg.get("_base", "."))
    if radius is not None:
        params["R"] = radius
    if exponent is not None:
        params["s"] = exponent
    for key in ("s", "R"):
        if key not in params:
            raise ConfigError(f"params.{key} is required")
    params["s"] = float(params["s"])
    params["R"] = int(params["R"])
    k = int(group.get("k", 0))
    try:
        mode = Mode(group.get("mode", "free"))
    except ValueError:
        raise ConfigError(f"group.mode must be free or dedup, got {group.get('mode')!r}") from None
    gdefs = list(action.get("generators") or [])
    if len(gdefs) != k:
        raise ConfigError(f"group.k = {k} but {len(gdefs)} generators are defined")
    names = [str(g.get("name", f"g{i}")) for i, g in enumerate(gdefs)]
    labels = []
    for n in names:
        labels += [n, n.upper() if n.upper() != n else n + "'"]
    try:
        gens = GeneratorSet(k, tuple(labels), mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    kind = action.get("type")
    try:
        if kind == "circle":
            generators = [_circle_generator(g, base) for g in gdefs]
            act = CircleAction(generators, names)
            N = int(params.get("N", 200))
            if N < 2:
                raise ConfigError("params.N must be at least 2")
            space = CircleSample.uniform(N)
        elif kind == "pointcloud":
            if "distances" not in action:
                raise ConfigError("a point cloud needs action.distances")
            space = PointCloudSample(action["distances"])
            generators = [list(g["permutation"]) for g in gdefs]
            act = PermutationAction(generators, names)
        else:
            raise ConfigError(f"action.type must be circle or pointcloud, got {kind!r}")
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad generator definition: {exc}") from None
    resolver = None
    if mode is Mode.DEDUP:
        resolver_kind = group.get("resolver", "probe")
        if resolver_kind == "abelian":
            resolver = NormalFormResolver(abelian_normal_form)
        elif resolver_kind == "probe":
            resolver = ProbeResolver(lambda w, x: apply_word(act, w, x), space.points, distance=space.dist)
        else:
            raise ConfigError(f"group.resolver must be abelian or probe, got {resolver_kind!r}")
    return Scene(gens, resolver, kind, generators, names, space, act, params)


def _weight_table(scene: Scene):
    try:
        return build_weight_table(scene.gens, scene.params["s"], scene.params["R"], scene.resolver)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --- output -----------------------------------------------------------------


CERT_FIELDS = ["claim", "status", "achieved", "bound", "witness", "params", "reason"]


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def write_certificates(path: Path, certs: list[Certificate]) -> None:
    counts = {s: sum(c.status == s for c in certs) for s in ("PASS", "FAIL", "SKIPPED")}
    overall = "FAIL" if counts["FAIL"] else "PASS"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CERT_FIELDS)
        for c in certs:
            w.writerow(
                [
                    c.claim,
                    c.status,
                    repr(float(c.achieved)),
                    repr(float(c.bound)),
                    c.witness,
                    json.dumps(_jsonable(c.params), sort_keys=True),
                    c.reason,
                ]
            )
        w.writerow(["SUMMARY", overall, counts["PASS"], len(certs), "", json.dumps(counts, sort_keys=True), ""])


def _exit_code(certs: list[Certificate]) -> int:
    return 1 if any(c.status == "FAIL" for c in certs) else 0


def _report(certs: list[Certificate]) -> None:
    for c in certs:
        print(c)


def _skipped(claim: str, reason: str, **params) -> Certificate:
    return Certificate(claim=claim, params=params, bound=math.nan, achieved=math.nan, status="SKIPPED", reason=reason)


# --- commands -----------------------------------------------------------------


def cmd_enumerate(scene: Scene, out: Path) -> int:
    wt = _weight_table(scene)
    counts = wt.sphere_counts
    if scene.gens.mode is Mode.DEDUP:
        counts = enumerate_ball(scene.gens, wt.R, scene.resolver).sphere_counts
    partial = wt.partial_sums()
    rows = {"n": [], "sphere_count": [], "partial_sum": [], "tail_bound": [], "exponent_estimate": []}
    for n in range(len(counts)):
        nonzero = n == 0 or counts[n] > 0
        if not nonzero and scene.gens.k == 0:
            break
        rows["n"].append(n)
        rows["sphere_count"].append(counts[n])
        rows["partial_sum"].append(partial[n])
        rows["tail_bound"].append(free_tail_bound(scene.gens.k, wt.s, n))
        rows["exponent_estimate"].append(estimate_critical_exponent(counts[: n + 1], k=scene.gens.k) if n >= 2 else 0.0)
    write_table(out / "growth.csv", rows)
    print(f"growth: counts {list(rows['sphere_count'])} exponent {rows['exponent_estimate'][-1]!r}")
    return 0


def run_verifiers(scene: Scene, threads: int = 1) -> list[Certificate]:
    """Every verifier of the suite, in a fixed order."""
    wt = _weight_table(scene)
    rm = RegularizedMetric(wt, scene.space, scene.action, threads=threads)
    certs: list[Certificate] = []
    certs.append(verify_metric_axioms(rm, n_triples=int(scene.params.get("triples", 100_000))))
    certs.append(verify_lower_bound_identity(rm))
    small = [w for w in wt.words if len(w) <= 2 and 2 * len(w) <= wt.R]
    if wt.mode is Mode.FREE:
        rm.prefetch(small)
        for p in small:
            certs.append(verify_bilipschitz_sandwich(rm, p))
        for eta in small:
            if 2 * len(eta) <= wt.R:
                certs.append(verify_equivariance(rm, eta))
    else:
        certs.append(_skipped("SANDWICH", "basepoints other than the identity need FREE mode"))
        certs.append(_skipped("EQUIVARIANCE", "translated basepoints need FREE mode"))
    for w in scene.gens.generator_words():
        if 2 * len(w) <= wt.R and wt.mode is Mode.FREE:
            certs.append(verify_generator_bilipschitz(rm, w))
    for item in scene.params.get("witnesses") or []:
        eps = float(item["epsilon"])
        try:
            certs.append(neighborhood_witness(rm, int(item.get("x", 0)), eps).certificate(rm))
        except ValueError as exc:
            certs.append(_skipped("NEIGHBORHOOD_WITNESS", str(exc), x=item.get("x", 0), epsilon=eps))
    adj = scene.params.get("adjustment")
    if adj:
        L, u = float(adj["L"]), float(adj["u"])
        s = float(adj.get("s", scene.params["s"]))
        try:
            certs.append(
                verify_part3_adjustment(scene.space, scene.action, scene.gens, L, u, s, wt.R, threads=threads)
            )
        except ValueError as exc:
            certs.append(_skipped("LIPSCHITZ_ADJUSTMENT", str(exc), L=L, u=u, s=s))
    else:
        certs.append(_skipped("LIPSCHITZ_ADJUSTMENT", "no params.adjustment {L, u} given"))
    return certs


def cmd_verify(scene: Scene, out: Path, threads: int = 1) -> int:
    certs = run_verifiers(scene, threads)
    write_certificates(out / "certificates.csv", certs)
    _report(certs)
    return _exit_code(certs)


def cmd_conjugate(scene: Scene, out: Path) -> int:
    if scene.kind != "circle":
        raise ConfigError("conjugate needs a circle scene")
    wt = _weight_table(scene)
    grid = scene.params.get("mu_grid", 4096)
    grid = None if grid in (None, "exact") else int(grid)
    eps_rep = float(scene.params.get("eps_rep", 0.05))
    res = certify_conjugation(scene.generators, wt, grid=grid, eps_rep=eps_rep, names=scene.names)
    certs = list(res.certificates)
    if wt.k and wt.mode is Mode.FREE:
        certs.append(verify_measure_equivariance(res.measure))
    cdf = res.measure.cdf
    write_table(out / "mu_cdf.csv", {"t": cdf.breakpoints, "mu": cdf.values})
    write_table(out / "psi_mu.csv", {"t": res.psi.breakpoints, "psi": res.psi.values})
    for name, h, before, after in zip(scene.names, res.conjugated, res.before, res.after):
        write_table(out / f"conjugated_{name}.csv", {"t": h.breakpoints, "value": h.values})
        print(f"{name}: Lipschitz before {before!r} after {after!r}")
    write_certificates(out / "certificates.csv", certs)
    _report(certs)
    return _exit_code(certs)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bilipcert", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("enumerate", "sphere counts, partial sums and tail bounds"),
        ("verify", "run the metric verifier suite"),
        ("conjugate", "build mu, Psi_mu and the conjugated generators"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML scene file or builtin:singular|rotation|trivial")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--radius", type=int, default=None, help="override params.R")
        p.add_argument("--exponent", type=float, default=None, help="override params.s")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        scene = build_scene(load_config(args.config), args.radius, args.exponent)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "enumerate":
            return cmd_enumerate(scene, out)
        if args.command == "verify":
            return cmd_verify(scene, out, args.threads)
        return cmd_conjugate(scene, out)
    except ConfigError as exc:
        print(f"bilipcert: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
