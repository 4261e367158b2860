"""Experiment catalog, configuration schema and runners.

A configuration is a JSON object naming one experiment plus its cases. Every
experiment turns its cases into a list of checks; a check is a plain dict
with an ``id``, a ``lemma_id``, a ``status`` (pass, fail or inconclusive) and
an optional table written to ``<id>.csv``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from . import decaylab as dl
from . import fields as fl
from . import fracops as fo
from . import masolver as ms

TOP_LEVEL_KEYS = {
    "experiment", "n", "seed", "margin", "strict", "threads", "quadrature", "radii", "cases", "output_dir",
}
# keys that locate a run rather than define it; left out of the config hash
UNHASHED_KEYS = {"output_dir"}


class ConfigError(ValueError):
    """Invalid configuration, including violated lemma hypotheses."""


# catalog ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    title: str
    anchor: str
    modules: tuple
    case_keys: frozenset
    default_cases: tuple
    runner: Callable = field(compare=False, repr=False)

    def to_dict(self):
        return {"id": self.id, "title": self.title, "anchor": self.anchor, "modules": list(self.modules)}


def _ip(sigma, alpha=0.9):
    return fl.inverse_power(sigma, alpha=alpha).to_dict()


def _po(kappa, beta):
    return fl.perturbed_one(kappa, beta).to_dict()


def _const(c=1.0):
    return fl.constant(c).to_dict()


def _field(d, n):
    f = fl.field_from_dict(d)
    if f.n != n:
        raise ConfigError(f"field dimension {f.n} differs from n = {n}")
    return f


def _slug(*parts):
    out = []
    for p in parts:
        if isinstance(p, float):
            p = f"{p:g}"
        out.append(str(p).replace(".", "p").replace("-", "m"))
    return "_".join(out)


def _field_slug(d):
    return _slug(d["kind"], *d.get("params", []))


def _bound_check_dict(cid, chk: dl.BoundCheck, details=None):
    fit = chk.fitted
    return {
        "id": cid,
        "lemma_id": chk.lemma_id,
        "status": chk.status,
        "claimed": chk.claimed_exponent,
        "fitted": _num(fit.exponent),
        "log_model": fit.log_corrected,
        "margin": chk.margin,
        "radii": list(map(float, chk.radii)),
        "values": list(map(float, chk.values)),
        "errors": None if chk.errors is None else list(map(float, chk.errors)),
        "fit": fit.to_dict(),
        "details": details or {},
        "table": {"header": ["r", "value", "bound"], "rows": chk.csv_rows()},
    }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _simple_check(cid, lemma_id, passed, details, table=None, inconclusive=False):
    status = "inconclusive" if inconclusive else ("pass" if passed else "fail")
    out = {"id": cid, "lemma_id": lemma_id, "status": status, "details": details}
    if table is not None:
        out["table"] = table
    return out


# runners ------------------------------------------------------------------------------


def _run_decay(cfg, ctx, kind):
    checks = []
    fn = {"fraclap": dl.check_fraclap_decay, "growth": dl.check_growth_case, "riesz": dl.check_riesz_decay}[kind]
    for i, case in enumerate(cfg["cases"]):
        u = _field(case["field"], cfg["n"])
        chk = fn(u, case["s"], radii=cfg.get("radii"), margin=cfg["margin"], quad=ctx.quad, threads=cfg["threads"])
        cid = f"{cfg['experiment']}-{i}-{_field_slug(case['field'])}-s{_slug(case['s'])}"
        checks.append(_bound_check_dict(cid, chk, {"s": case["s"]}))
    return checks


def _run_bilinear(cfg, ctx):
    checks = []
    for i, case in enumerate(cfg["cases"]):
        u1, u2 = _field(case["field1"], cfg["n"]), _field(case["field2"], cfg["n"])
        chk = dl.check_bilinear_decay(u1, u2, case["s"], radii=cfg.get("radii"), margin=cfg["margin"],
                                      quad=ctx.quad, threads=cfg["threads"])
        cid = f"bilinear-{i}-{_field_slug(case['field1'])}-{_field_slug(case['field2'])}"
        checks.append(_bound_check_dict(cid, chk, {"s": case["s"]}))
    return checks


def _run_holder(cfg, ctx):
    checks = []
    for i, case in enumerate(cfg["cases"]):
        u1, u2 = _field(case["field1"], cfg["n"]), _field(case["field2"], cfg["n"])
        kw = dict(radius=case.get("radius", 10.0), pairs=case.get("pairs", 256), seed=cfg["seed"],
                  margin=case.get("holder_margin", 10.0), quad=ctx.quad, threads=cfg["threads"])
        base = dl.check_holder_of_remainder(u1, u2, case["s"], **kw)
        lam = float(case.get("scale", 2.0))
        s1 = dl.check_holder_of_remainder(fl.ScaledField(u1, lam), u2, case["s"], **kw)
        s2 = dl.check_holder_of_remainder(u1, fl.ScaledField(u2, lam), case["s"], **kw)
        semi = base.estimate.seminorm
        if semi > 0:
            ratios = [s1.estimate.seminorm / semi, s2.estimate.seminorm / semi]
            linear = all(abs(r - abs(lam)) <= 1e-9 * abs(lam) for r in ratios)
        else:
            ratios = [0.0, 0.0]
            linear = s1.estimate.seminorm == 0.0 and s2.estimate.seminorm == 0.0
        details = base.to_dict()
        details.update({"scale": lam, "scale_ratios": ratios, "linear": linear})
        cid = f"holder-{i}-{_field_slug(case['field1'])}-{_field_slug(case['field2'])}"
        checks.append(_simple_check(cid, "holder-remainder", base.passed and linear, details))
    return checks


def _run_commute(cfg, ctx):
    checks = []
    for i, case in enumerate(cfg["cases"]):
        u = _field(case["field"], cfg["n"])
        rep = dl.check_commutation(
            u, case["s"], case.get("k", 0), case.get("points", DEFAULT_COMMUTE_POINTS), h=case.get("h", 1e-3),
            case=case.get("case", "i"), alpha=case.get("alpha"), tolerance=case.get("tolerance", 1e-3),
            quad=ctx.quad, threads=cfg["threads"],
        )
        rows = [(float(np.linalg.norm(p)), lhs, rhs) for p, lhs, rhs in zip(rep.points, rep.lhs, rep.rhs)]
        cid = f"commute-{i}-case{rep.case}-s{_slug(case['s'])}"
        checks.append(_simple_check(cid, "commutation", rep.passed, rep.to_dict(),
                                    {"header": ["r", "value", "bound"], "rows": rows}))
    return checks


def _run_product(cfg, ctx):
    checks = []
    for i, case in enumerate(cfg["cases"]):
        u1, u2 = _field(case["field1"], cfg["n"]), _field(case["field2"], cfg["n"])
        P = fo.FracParams(cfg["n"], case["s"])
        tol = case.get("tolerance", 1e-3)
        rows, worst = [], 0.0
        for r in case.get("points", [4.0]):
            res, err, mag = fo.product_rule_residual(u1, u2, P, [float(r), 0.0, 0.0], ctx.quad, diagnostic=True)
            rel = abs(res) / mag if mag > 0 else abs(res)
            worst = max(worst, rel)
            rows.append((float(r), rel, tol))
        cid = f"product-rule-{i}-{_field_slug(case['field1'])}-{_field_slug(case['field2'])}"
        checks.append(_simple_check(cid, "product-rule", worst <= tol,
                                    {"s": case["s"], "max_rel_residual": worst, "tolerance": tol},
                                    {"header": ["r", "value", "bound"], "rows": rows}))
    return checks


def _run_hypothesis(cfg, ctx):
    checks = []
    for i, case in enumerate(cfg["cases"]):
        f = _field(case["field"], cfg["n"])
        rep = fl.verify_hypothesis_H(f, case["alpha"], case["beta"], radii=case.get("radii"),
                                     pairs=case.get("pairs", 2048), tolerance=case.get("tolerance", 0.1),
                                     rng_seed=cfg["seed"])
        rows = [(r, v, b) for name, r, v, b, _ in rep.csv_rows() if name == "value"]
        rows += [(r, v, b) for name, r, v, b, _ in rep.csv_rows() if name == "holder"]
        cid = f"hypothesis-H-{i}-{_field_slug(case['field'])}"
        checks.append(_simple_check(cid, "hypothesis-H", rep.passed, rep.to_dict(),
                                    {"header": ["r", "value", "bound"], "rows": rows}))
    return checks


def _solve(case, n):
    f = _field(case["field"], n)
    return f, ms.solve_radial(f, n, case.get("r_max", 32768.0), case.get("grid_nodes", 2048))


def _run_ma_radial(cfg, ctx):
    checks = []
    for i, case in enumerate(cfg["cases"]):
        f, sol = _solve(case, cfg["n"])
        base = f"ma-radial-{i}-{_field_slug(case['field'])}"
        defect = float(sol.defect().max())
        r = sol.grid[1:]
        convex = bool(np.all(sol.d2v(r) > 0) and np.all(sol.dv(r) / r > 0))
        tab = sol.table()
        rows = [(float(a), float(b), 1e-8) for a, b in zip(r, sol.defect(r))]
        checks.append(_simple_check(f"{base}-defect", "monge-ampere", defect <= 1e-8 and convex,
                                    {"max_rel_defect": defect, "convex": convex},
                                    {"header": ["r", "value", "bound"], "rows": rows}))
        rng = np.random.default_rng(cfg["seed"])
        k = case.get("points", 20)
        pts = rng.standard_normal((k, cfg["n"]))
        pts *= (rng.uniform(0.05, 0.5 * sol.r_max ** 0.5, k) / np.linalg.norm(pts, axis=1))[:, None]
        rr = np.linalg.norm(pts, axis=1)
        det_err = np.abs(np.linalg.det(ms.hessian(sol, pts)) / f.radial(rr) - 1.0)
        checks.append(_simple_check(f"{base}-hessian-det", "monge-ampere", float(det_err.max()) <= 1e-6,
                                    {"max_rel_error": float(det_err.max()), "points": k},
                                    {"header": ["r", "value", "bound"],
                                     "rows": [(float(a), float(b), 1e-6) for a, b in sorted(zip(rr, det_err))]}))
        A = ms.linearized_coefficients(sol, pts, ctx.quad.t_nodes)
        lhs = np.einsum("kij,kij->k", A, ms.hessian_w(sol, pts))
        rhs = f.deviation(rr)
        scale = np.maximum(np.abs(rhs), 1e-300)
        id_err = np.where(lhs == rhs, 0.0, np.abs(lhs - rhs) / scale)
        checks.append(_simple_check(f"{base}-linearization", "linearization", float(id_err.max()) <= 1e-6,
                                    {"max_rel_error": float(id_err.max())}))
        wmax = float(np.max(np.abs(tab["w"])))
        details = {"max_abs_w": wmax, "w_limit": sol.w_limit(), "r_max": sol.r_max}
        if not np.any(f.deviation(sol.grid)):
            checks.append(_simple_check(f"{base}-liouville", "liouville", wmax <= 1e-8, details))
        ctx.extra_tables[f"{base}-solution"] = {
            "header": ["r", "v", "dv", "d2v", "w", "lap_w"],
            "rows": list(zip(*(tab[c].tolist() for c in ("r", "v", "dv", "d2v", "w", "lap_w")))),
        }
    return checks


def _run_bootstrap(cfg, ctx):
    checks = []
    for i, case in enumerate(cfg["cases"]):
        f, sol = _solve(case, cfg["n"])
        s = case.get("s", 0.2)
        try:
            rep = ms.run_bootstrap_schedule(sol, f, case.get("eps0"), s, ctx.quad, margin=cfg["margin"],
                                            threads=cfg["threads"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        base = f"bootstrap-{i}-{_field_slug(case['field'])}"
        d = rep.to_dict()
        for st in d["stages"]:
            for key, c in st["checks"].items():
                claimed = c["claimed"]
                vals = {"lap_w": d["lap_w_values"], "F": d["F_values"], "H": d["H_values"]}[key]
                rows = _bound_rows(d["radii"], vals, claimed)
                out = {"id": f"{base}-stage{st['stage']}-{key}", "lemma_id": "bootstrap",
                       "status": c["status"], "claimed": claimed, "fitted": c["fitted"],
                       "details": {"eps": st["eps"], "lemma_applicable": st["lemma_applicable"]},
                       "table": {"header": ["r", "value", "bound"], "rows": rows}}
                checks.append(out)
        id_ok = all(x["pass"] for x in d["identity"])
        checks.append(_simple_check(f"{base}-identity", "bootstrap", id_ok, {"identity": d["identity"]},
                                    {"header": ["r", "value", "bound"],
                                     "rows": [(x["r"], x["rel_err"], 0.02) for x in d["identity"]]}))
        sched_ok = 0.5 < d["eps1"] < 1.0 and 1.0 < d["two_eps1"] < 2.0
        checks.append(_simple_check(f"{base}-schedule", "bootstrap", sched_ok,
                                    {k: d[k] for k in ("eps0", "eps0_source", "eps0_measured", "m0", "stage_eps",
                                                       "eps1", "two_eps1", "nu_formula", "nu_measured")}))
        s3 = d["step3"]
        checks.append(_simple_check(f"{base}-newton", "bootstrap",
                                    s3.get("H2_pass", True) and s3.get("harmonic_pass", True), s3))
    return checks


def _bound_rows(radii, values, claimed):
    r = np.asarray(radii, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    shape = r**claimed
    K = float(np.max(v / shape)) if np.any(v > 0) else 0.0
    return [(float(a), float(b), K * float(c)) for a, b, c in zip(r, v, shape)]


def _run_expansion(cfg, ctx):
    checks = []
    n = cfg["n"]
    for i, case in enumerate(cfg["cases"]):
        f, sol = _solve(case, n)
        beta = float(case["beta"])
        radii = case.get("radii") or list(DEFAULT_EXPANSION_RADII)
        fit = ms.extract_expansion(sol, n, radii, beta=beta)
        base = f"expansion-{i}-{_field_slug(case['field'])}"
        lead = min(beta, float(n))
        for k in range(3):
            claimed = 2.0 - k - lead
            fk = fit.fits[k]
            if fk.status == "zero":
                status = "pass"
            elif not fk.conclusive:
                status = "inconclusive"
            elif fit.log_flag:
                status = "pass" if fk.log_ratio is not None and fk.log_ratio <= dl.LOG_RATIO_MAX else "fail"
            elif k == 0:
                # the radial oracle is exact, so the k = 0 rate is checked for sharpness
                status = "pass" if abs(fk.exponent - claimed) <= cfg["margin"] else "fail"
            else:
                status = "pass" if fk.exponent <= claimed + cfg["margin"] else "fail"
            hc = fit.harmonic_corrected[k] if fit.harmonic_corrected else None
            checks.append({
                "id": f"{base}-k{k}", "lemma_id": "expansion", "status": status, "claimed": claimed,
                "fitted": _num(fk.exponent), "log_model": fit.log_flag,
                "details": {"fit": fk.to_dict(), "harmonic_corrected": hc, "c": fit.c, "A": fit.A, "b": fit.b},
                "table": {"header": ["r", "value", "bound"], "rows": _bound_rows(fit.radii, fit.residuals[k], claimed)},
            })
        A_ok = np.allclose(fit.A, np.eye(n), atol=1e-6) and max(abs(x) for x in fit.b) <= 1e-6
        det_ok = abs(np.linalg.det(np.asarray(fit.A)) - 1.0) <= 1e-8
        checks.append(_simple_check(f"{base}-normal-form", "expansion", A_ok and det_ok,
                                    {"A": fit.A, "b": fit.b, "c": fit.c, "scale": fit.scale}))
    return checks


def _run_full(cfg, ctx):
    checks = []
    for eid in EXPERIMENT_ORDER:
        if eid == "full-suite":
            continue
        sub = default_config(eid)
        for key in ("n", "seed", "margin", "strict", "threads", "quadrature"):
            sub[key] = cfg[key]
        sub = validate_config(sub)
        ctx.log(f"full-suite: {eid}")
        sub_ctx = RunContext(fo.QuadratureSpec.from_dict(sub["quadrature"]), ctx.log)
        checks.extend(CATALOG[eid].runner(sub, sub_ctx))
        ctx.extra_tables.update(sub_ctx.extra_tables)
    return checks


@dataclass
class RunContext:
    quad: fo.QuadratureSpec
    log: Callable = lambda msg: None
    extra_tables: dict = field(default_factory=dict)


DEFAULT_COMMUTE_POINTS = ([1.0, 0.5, 0.25], [3.0, -1.0, 0.5], [0.3, 0.2, -0.4])
DEFAULT_EXPANSION_RADII = tuple(2.0**k for k in range(5, 11))

_DL = dl.LEMMA_INDEX

CATALOG = {
    e.id: e
    for e in [
        CatalogEntry("lemma-decay", _DL["fraclap-decay"][0], _DL["fraclap-decay"][1],
                     ("fracops.frac_laplacian", "decaylab.check_fraclap_decay"),
                     frozenset({"field", "s"}),
                     ({"field": _ip(1.0), "s": 0.2}, {"field": _ip(5.0), "s": 0.2}, {"field": _ip(3.0), "s": 0.2}),
                     lambda c, x: _run_decay(c, x, "fraclap")),
        CatalogEntry("lemma-growth", _DL["growth"][0], _DL["growth"][1],
                     ("fracops.frac_laplacian", "decaylab.check_growth_case"),
                     frozenset({"field", "s"}),
                     ({"field": fl.growth_power(0.3).to_dict(), "s": 0.25},
                      {"field": fl.growth_power(0.15).to_dict(), "s": 0.1}),
                     lambda c, x: _run_decay(c, x, "growth")),
        CatalogEntry("riesz", _DL["riesz-decay"][0], _DL["riesz-decay"][1],
                     ("fracops.riesz_potential", "decaylab.check_riesz_decay"),
                     frozenset({"field", "s"}),
                     ({"field": _ip(4.0), "s": 0.3}, {"field": _ip(2.5), "s": 0.3}, {"field": _ip(3.0), "s": 0.3}),
                     lambda c, x: _run_decay(c, x, "riesz")),
        CatalogEntry("bilinear", _DL["bilinear-decay"][0], _DL["bilinear-decay"][1],
                     ("fracops.bilinear_remainder", "decaylab.check_bilinear_decay"),
                     frozenset({"field1", "field2", "s"}),
                     ({"field1": _ip(1.0), "field2": _ip(1.0), "s": 0.2},
                      {"field1": _ip(2.0), "field2": _ip(2.0), "s": 0.2},
                      {"field1": _ip(1.0), "field2": _ip(2.0), "s": 0.2}),
                     _run_bilinear),
        CatalogEntry("holder", _DL["holder-remainder"][0], _DL["holder-remainder"][1],
                     ("fracops.bilinear_remainder", "decaylab.check_holder_of_remainder"),
                     frozenset({"field1", "field2", "s", "radius", "pairs", "holder_margin", "scale"}),
                     ({"field1": _ip(1.0), "field2": _ip(1.0), "s": 0.2},),
                     _run_holder),
        CatalogEntry("commute", _DL["commutation"][0], _DL["commutation"][1],
                     ("fracops.frac_laplacian", "decaylab.check_commutation"),
                     frozenset({"field", "s", "k", "case", "alpha", "points", "h", "tolerance"}),
                     ({"field": _ip(2.0), "s": 0.2, "case": "i"}, {"field": _ip(2.0), "s": 0.7, "case": "ii"}),
                     _run_commute),
        CatalogEntry("product-rule", _DL["product-rule"][0], _DL["product-rule"][1],
                     ("fracops.product_rule_residual",),
                     frozenset({"field1", "field2", "s", "points", "tolerance"}),
                     ({"field1": _ip(2.0), "field2": _ip(2.0), "s": 0.2, "points": [4.0]},
                      {"field1": _ip(1.0), "field2": fl.growth_power(0.15).to_dict(), "s": 0.1, "points": [8.0]},
                      {"field1": _const(2.0), "field2": _ip(1.0), "s": 0.2, "points": [0.5, 4.0]}),
                     _run_product),
        CatalogEntry("hypothesis-H", "decay and Hoelder decay of f - 1",
                     "r^beta |f(x) - 1| + r^(beta+alpha) [f]_{C^alpha(B_{|x|/2}(x))} <= C for some alpha in (0,1), beta > 2",
                     ("fields.verify_hypothesis_H",),
                     frozenset({"field", "alpha", "beta", "radii", "pairs", "tolerance"}),
                     ({"field": _const(1.0), "alpha": 0.5, "beta": 2.5},
                      {"field": _po(0.5, 2.5), "alpha": 0.5, "beta": 2.5}),
                     _run_hypothesis),
        CatalogEntry("ma-radial", "radial Monge-Ampere solutions",
                     "det D^2 v = f; radially v''(r) (v'(r)/r)^(n-1) = f(r)",
                     ("masolver.solve_radial", "masolver.hessian", "masolver.linearized_coefficients"),
                     frozenset({"field", "r_max", "grid_nodes", "points"}),
                     ({"field": _const(1.0), "r_max": 512.0, "grid_nodes": 512}, {"field": _po(0.5, 2.5)}),
                     _run_ma_radial),
        CatalogEntry("bootstrap", "decay bootstrap for the linearized equation",
                     "|D^k w| <= C|x|^(2-k-eps) and 2 eps < 1 give |D^k w| <= C|x|^(2-k-2eps); "
                     "(-Delta)^s(Delta w) = F with |F| <= C|x|^(-2s-2eps)",
                     ("masolver.bootstrap_rhs_F", "masolver.bootstrap_potential_H",
                      "masolver.run_bootstrap_schedule", "masolver.newton_potential"),
                     frozenset({"field", "s", "eps0", "r_max", "grid_nodes"}),
                     ({"field": _po(0.5, 2.5), "s": 0.2},),
                     _run_bootstrap),
        CatalogEntry("expansion", "asymptotic expansion of entire solutions",
                     "|D^k(v - (x'Ax/2 + b.x + c))| <= C|x|^(-(min{n,beta}+k-2)), "
                     "times ln|x| when beta = n",
                     ("masolver.extract_expansion",),
                     frozenset({"field", "beta", "radii", "r_max", "grid_nodes"}),
                     ({"field": _po(0.5, 2.5), "beta": 2.5}, {"field": _po(0.5, 3.0), "beta": 3.0},
                      {"field": _po(0.5, 4.0), "beta": 4.0}),
                     _run_expansion),
        CatalogEntry("full-suite", "every experiment on its defaults",
                     "conjunction of all catalog statements",
                     ("fields", "fracops", "decaylab", "masolver"),
                     frozenset(), (), _run_full),
    ]
}
EXPERIMENT_ORDER = tuple(CATALOG)


def list_experiments():
    """Catalog entries as dicts, in run order."""
    return [CATALOG[k].to_dict() for k in EXPERIMENT_ORDER]


# configuration --------------------------------------------------------------------


def default_config(experiment: str) -> dict:
    if experiment not in CATALOG:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENT_ORDER)}")
    return {
        "experiment": experiment,
        "n": 3,
        "seed": fl.DEFAULT_SEED,
        "margin": dl.DEFAULT_MARGIN,
        "strict": False,
        "threads": 1,
        "quadrature": fo.DEFAULT_QUAD.to_dict(),
        "radii": None,
        "cases": copy.deepcopy(list(CATALOG[experiment].default_cases)),
    }


def _check_hypotheses(cfg):
    """Reject cases whose lemma hypotheses fail, before any computation."""
    eid, n = cfg["experiment"], cfg["n"]
    for i, case in enumerate(cfg["cases"]):
        where = f"case {i}"
        try:
            if eid in ("lemma-decay", "lemma-growth", "riesz"):
                u = _field(case["field"], n)
                s = float(case["s"])
                alpha = u.decay.alpha if u.decay else 0.9
                t = u.decay.tail_exponent if u.decay else None
                if eid == "lemma-decay" and not (t is not None and t < 0 and 0 < s < alpha / 2):
                    raise ConfigError(f"{where}: need a decaying field and 0 < s < alpha/2")
                if eid == "lemma-growth" and not (t is not None and 0 <= t < 2 * s and 0 < s < 1):
                    raise ConfigError(f"{where}: growth exponent {t} must lie in [0, 2s) = [0, {2 * s:g})")
                if eid == "riesz" and not (t is not None and -t > 2 * s and 0 < s < n / 2):
                    raise ConfigError(f"{where}: decay exponent must exceed 2s = {2 * s:g}")
            elif eid in ("bilinear", "holder", "product-rule"):
                u1, u2 = _field(case["field1"], n), _field(case["field2"], n)
                s = float(case["s"])
                alphas = [u.decay.alpha if u.decay else 0.9 for u in (u1, u2)]
                if not 0 < s < min(alphas) / 2:
                    raise ConfigError(f"{where}: need 0 < s < min(alpha1, alpha2)/2 = {min(alphas) / 2:g}")
                if eid == "product-rule":
                    for u in (u1, u2):
                        t = u.decay.tail_exponent if u.decay else 0.0
                        if u.far_level == 0.0 or t > 0:
                            if max(t, 0.0) >= 2 * s and t > 0:
                                raise ConfigError(f"{where}: growth {t} not below 2s = {2 * s:g}")
            elif eid == "commute":
                u = _field(case["field"], n)
                s = float(case["s"])
                alpha = case.get("alpha") or (u.decay.alpha if u.decay else 0.9)
                c = case.get("case", "i")
                ok = 2 * s < alpha if c == "i" else (2 * s < 1 + alpha if c == "ii" else False)
                if not ok:
                    raise ConfigError(f"{where}: commutation hypothesis ({c}) fails for s = {s}, alpha = {alpha}")
            elif eid == "hypothesis-H":
                if not float(case["beta"]) > 2:
                    raise ConfigError(f"{where}: hypothesis (H) needs beta > 2")
                if not 0 < float(case["alpha"]) < 1:
                    raise ConfigError(f"{where}: alpha must lie in (0, 1)")
            elif eid in ("ma-radial", "bootstrap", "expansion"):
                f = _field(case["field"], n)
                if case.get("r_max", 32768.0) < ms.MIN_R_MAX:
                    raise ConfigError(f"{where}: r_max below {ms.MIN_R_MAX:g}")
                if case.get("grid_nodes", 2048) < ms.MIN_GRID_NODES:
                    raise ConfigError(f"{where}: grid_nodes below {ms.MIN_GRID_NODES}")
                if f.far_level != 1.0:
                    raise ConfigError(f"{where}: f must tend to 1")
                if eid == "bootstrap":
                    s = float(case.get("s", 0.2))
                    if not 0 < s < f.decay.alpha / 2:
                        raise ConfigError(f"{where}: need 0 < s < alpha/2")
                    e0 = case.get("eps0")
                    if e0 is not None and not 0 < e0 < 0.5:
                        raise ConfigError(f"{where}: eps0 must lie in (0, 1/2)")
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc}") from exc
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc


def validate_config(cfg: dict) -> dict:
    """Fill defaults, reject unknown keys and check lemma hypotheses up front."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(cfg) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if "experiment" not in cfg:
        raise ConfigError("configuration lacks 'experiment'")
    out = default_config(cfg["experiment"])
    out.update(copy.deepcopy(cfg))
    entry = CATALOG[out["experiment"]]
    if out["experiment"] == "full-suite" and out["cases"]:
        raise ConfigError("full-suite takes no cases")
    if not isinstance(out["cases"], list):
        raise ConfigError("'cases' must be a list")
    for i, case in enumerate(out["cases"]):
        bad = set(case) - entry.case_keys
        if bad:
            raise ConfigError(f"case {i}: unknown keys {sorted(bad)}")
    if out["n"] != 3:
        raise ConfigError("the integrators support n = 3 only")
    if not (isinstance(out["threads"], int) and out["threads"] >= 1):
        raise ConfigError("threads must be a positive integer")
    if not (isinstance(out["margin"], (int, float)) and out["margin"] > 0):
        raise ConfigError("margin must be positive")
    out["margin"] = float(out["margin"])
    out["strict"] = bool(out["strict"])
    try:
        out["quadrature"] = fo.QuadratureSpec.from_dict(out["quadrature"]).to_dict()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"quadrature: {exc}") from exc
    if out["radii"] is not None:
        r = [float(x) for x in out["radii"]]
        if len(r) < 4 or any(b <= a for a, b in zip(r, r[1:])):
            raise ConfigError("radii must be an increasing list of at least 4 values")
        out["radii"] = r
    _check_hypotheses(out)
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: dict) -> str:
    hashed = {k: v for k, v in cfg.items() if k not in UNHASHED_KEYS}
    return hashlib.sha256(canonical_json(hashed).encode()).hexdigest()


def lineage_hash(cfg: dict) -> str:
    """Hash of the config without run-time knobs (margin, strict, threads, quadrature)."""
    keep = {k: v for k, v in cfg.items() if k not in UNHASHED_KEYS | {"margin", "strict", "threads", "quadrature"}}
    return hashlib.sha256(canonical_json(keep).encode()).hexdigest()


# running ------------------------------------------------------------------------------


def run_experiment(cfg: dict, log: Callable = lambda msg: None):
    """Run a validated config. Returns (report dict, tables dict)."""
    cfg = validate_config(cfg)
    ctx = RunContext(fo.QuadratureSpec.from_dict(cfg["quadrature"]), log)
    checks = CATALOG[cfg["experiment"]].runner(cfg, ctx)
    tables = {c["id"]: c.pop("table") for c in checks if "table" in c}
    tables.update(ctx.extra_tables)
    counts = {"pass": 0, "fail": 0, "inconclusive": 0}
    for c in checks:
        counts[c["status"]] += 1
    failed = counts["fail"] + (counts["inconclusive"] if cfg["strict"] else 0)
    report = {
        "experiment": cfg["experiment"],
        "version": __version__,
        "config": {k: v for k, v in cfg.items() if k not in UNHASHED_KEYS},
        "config_hash": config_hash(cfg),
        "lineage_hash": lineage_hash(cfg),
        "backend": _backend(),
        "checks": checks,
        "summary": {**counts, "failed": failed, "ok": failed == 0},
    }
    return _sanitize(report), tables


def _backend():
    from . import kernels

    return kernels.BACKEND


def _sanitize(obj):
    """Make a report strictly JSON-serializable (non-finite floats become strings)."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# diffing -----------------------------------------------------------------------------


_NON_NUMERIC_KEYS = {"margin", "status", "pass", "passed"}


def diff_reports(a: dict, b: dict, rtol: float = 0.0) -> dict:
    """Structured difference of two reports.

    Returns config differences, checks whose status flipped, and numeric
    differences inside checks. Where a check carries per-value error
    estimates the numeric entry is annotated with the combined tolerance.
    """
    if a.get("experiment") != b.get("experiment"):
        raise ValueError(f"experiments differ: {a.get('experiment')!r} vs {b.get('experiment')!r}")
    config = {}
    for k in sorted(set(a["config"]) | set(b["config"])):
        if a["config"].get(k) != b["config"].get(k):
            config[k] = {"a": a["config"].get(k), "b": b["config"].get(k)}
    ca = {c["id"]: c for c in a["checks"]}
    cb = {c["id"]: c for c in b["checks"]}
    flipped, numeric, missing = [], [], []
    for cid in sorted(set(ca) | set(cb)):
        if cid not in ca or cid not in cb:
            missing.append(cid)
            continue
        x, y = ca[cid], cb[cid]
        if x["status"] != y["status"]:
            flipped.append({"id": cid, "a": x["status"], "b": y["status"]})
        errs = None
        if x.get("errors") and y.get("errors"):
            errs = [abs(p) + abs(q) for p, q in zip(x["errors"], y["errors"])]
        for path, u, v in _numeric_leaves(x, y, cid):
            if u == v or (rtol and abs(u - v) <= rtol * max(abs(u), abs(v))):
                continue
            entry = {"path": path, "a": u, "b": v, "abs_diff": abs(u - v)}
            parts = path.split("/")
            if errs is not None and len(parts) == 3 and parts[1] == "values":
                tol = errs[int(parts[2])]
                entry["tolerance"] = tol
                entry["within_tolerance"] = bool(abs(u - v) <= tol)
            numeric.append(entry)
    return {
        "experiment": a["experiment"],
        "same_lineage": a.get("lineage_hash") == b.get("lineage_hash"),
        "config": config,
        "flipped": flipped,
        "numeric": numeric,
        "missing": missing,
        "empty": not (config or flipped or numeric or missing),
    }


def _numeric_leaves(x, y, path):
    if isinstance(x, dict) and isinstance(y, dict):
        for k in sorted(set(x) & set(y)):
            if k in _NON_NUMERIC_KEYS:
                continue
            yield from _numeric_leaves(x[k], y[k], f"{path}/{k}")
    elif isinstance(x, list) and isinstance(y, list):
        for i, (u, v) in enumerate(zip(x, y)):
            yield from _numeric_leaves(u, v, f"{path}/{i}")
    elif isinstance(x, (int, float)) and isinstance(y, (int, float)) and not isinstance(x, bool):
        yield path, float(x), float(y)


__all__ = [
    "CATALOG", "ConfigError", "EXPERIMENT_ORDER", "canonical_json", "config_hash", "default_config",
    "diff_reports", "lineage_hash", "list_experiments", "run_experiment", "validate_config",
]
