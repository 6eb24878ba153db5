"""Command-line interface.

Subcommands:

    assemble       coefficient matrix of a state as CSV, or a structural
                   diagnostics report as JSON
    spectrum       characteristic speeds (closed form, or numerical for the
                   uncorrected system) as CSV
    hyperbolicity  sweep the pure first-axis cubic coefficient and report the
                   largest imaginary eigenvalue part at each value
    riemann        JSON wave report for a pair of states: field classification,
                   jump-condition residuals, contact and rarefaction probes,
                   sign-table verdicts
    simulate       run the finite-volume solver (or, with --oracle, the
                   kinetic reference) from a JSON config; snapshots as CSV
    conjecture     scan Hermite root systems for near-coincident nonzero zeros
                   across orders
    hermite-check  numerical verification of the basis-function identities

Data goes to --out (default stdout); diagnostics go to stderr. Exit status is
0 on success, 1 on a validation error (bad arguments, malformed input, an
inadmissible input state), and 2 on a numerical failure (admissibility loss
during a run, a residual or identity check out of tolerance, scan violations).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import numpy as np

from .assembly import assemble, regularize, structural_report
from .hermite import (
    AnisotropicBasis,
    common_zero_scan,
    cross_order_root_distances,
    ghe_table,
    he_roots,
    integral_relation_check,
    quasi_orthogonality_check,
    weight,
)
from .index import IndexSet, factorial, order, unit
from .riemann import (
    ElementaryWave,
    classify_field,
    contact_check,
    rarefaction_curve,
    shock_check,
    shock_speed_from_mass,
    wave_speed,
    wave_table_check,
)
from .solver import (
    AdmissibilityLoss,
    CFLViolation,
    Grid1D,
    SimulationConfig,
    kinetic_reference,
    simulate,
)
from .spectral import rotation_spectrum_check, spectrum_regularized
from .state import (
    CollisionModel,
    MomentState,
    equilibrium,
    state_from_json,
    to_conserved,
)

CSV_EOL = "\n"


@contextmanager
def _open_out(path):
    """Writable text handle; '-' or None means stdout (left open)."""
    if path in (None, "-"):
        yield sys.stdout
    else:
        fh = open(path, "w", newline="")
        try:
            yield fh
        finally:
            fh.close()


def _load_state(path: str) -> MomentState:
    with open(path) as fh:
        return state_from_json(fh.read())


def _label(alpha) -> str:
    return ",".join(str(a) for a in alpha)


def _max_workers() -> int:
    raw = os.environ.get("HYPERMOMENT_THREADS")
    if raw is None or not raw.strip():
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"HYPERMOMENT_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"HYPERMOMENT_THREADS must be >= 1, got {n}")
    return n


# -- assemble ------------------------------------------------------------------


def cmd_assemble(args) -> int:
    state = _load_state(args.state)
    mat = assemble(state, args.dir)
    if args.regularized:
        mat = regularize(mat, state)
    if args.report:
        rep = structural_report(mat)
        doc = {
            "N": rep.N,
            "direction": rep.direction,
            "regularized": mat.regularized,
            "max_abs_diagonal": rep.max_abs_diagonal,
            "upper_violation_rows": list(rep.upper_violation_rows),
            "block_sizes": list(rep.block_sizes),
            "expected_block_sizes": list(rep.expected_block_sizes),
            "max_upper_block_entry": rep.max_upper_block_entry,
            "nonzero_count": rep.nonzero_count,
            "violations": list(rep.violations),
            "ok": rep.ok,
        }
        with _open_out(args.out) as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        return 0
    labels = [_label(a) for a in state.index_set.indices]
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator=CSV_EOL)
        w.writerow(["row"] + labels)
        for lab, row in zip(labels, mat.entries):
            w.writerow([lab] + [repr(float(v)) for v in row])
    return 0


# -- spectrum ------------------------------------------------------------------


def _parse_direction(text: str, D: int) -> np.ndarray:
    try:
        n = np.array([float(t) for t in text.split(",")], dtype=float)
    except ValueError:
        raise ValueError(f"direction must be comma-separated numbers, got {text!r}") from None
    if n.size != D:
        raise ValueError(f"direction needs {D} components, got {n.size}")
    norm = float(np.linalg.norm(n))
    if norm == 0.0:
        raise ValueError("direction vector must be nonzero")
    return n / norm


def cmd_spectrum(args) -> int:
    state = _load_state(args.state)
    if args.dir is not None:
        n = _parse_direction(args.dir, state.D)
    else:
        n = np.zeros(state.D)
        n[0] = 1.0
    drift = float(np.dot(state.u, n))

    if args.unregularized:
        A = np.zeros((state.index_set.N, state.index_set.N))
        for d in range(state.D):
            if n[d] != 0.0:
                A += n[d] * assemble(state, d + 1).entries
        vals = np.sort_complex(np.linalg.eigvals(A) + drift)
        with _open_out(args.out) as fh:
            w = csv.writer(fh, lineterminator=CSV_EOL)
            w.writerow(["eigenvalue", "multiplicity", "family_m", "root_index"])
            for v in vals:
                w.writerow([str(complex(v)).strip("()"), 1, -1, -1])
        return 0

    scale = float(np.sqrt(n @ state.theta_tensor @ n))
    rows = []
    for line in spectrum_regularized(state).lines:
        C = float(he_roots(line.family_m)[line.root_index])
        rows.append((drift + C * scale, line.multiplicity, line.family_m, line.root_index))
    rows.sort(key=lambda r: (r[0], r[2]))
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator=CSV_EOL)
        w.writerow(["eigenvalue", "multiplicity", "family_m", "root_index"])
        for val, mult, m, j in rows:
            w.writerow([repr(float(val)), mult, m, j])

    # cross-check the closed form against a numerical eigensolve
    dev = rotation_spectrum_check(state, n)
    tol = 1e-8 * max(1.0, abs(drift) + abs(rows[-1][0]))
    if dev > tol:
        print(
            f"closed-form spectrum deviates from numerical eigenvalues by {dev:.3e}"
            f" (tolerance {tol:.3e})",
            file=sys.stderr,
        )
        return 2
    return 0


# -- hyperbolicity scan ----------------------------------------------------------


def _parse_scan(spec: str):
    name, eq, rng = spec.partition("=")
    parts = rng.split(":")
    if name != "f3" or not eq or len(parts) != 3:
        raise ValueError(f"scan must look like f3=start:stop:steps, got {spec!r}")
    try:
        a, b, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValueError(f"scan must look like f3=start:stop:steps, got {spec!r}") from None
    if steps < 1:
        raise ValueError(f"scan needs at least one step, got {steps}")
    return a, b, steps


def cmd_hyperbolicity(args) -> int:
    a, b, steps = _parse_scan(args.scan)
    D, M = args.D, args.M
    if M < 3:
        raise ValueError(f"scan needs M >= 3 for a free cubic coefficient, got M={M}")
    values = np.linspace(a, b, steps)
    alpha3 = tuple(3 * e for e in unit(D, 1))
    base = equilibrium(D, M, 1.0, np.zeros(D), np.eye(D))

    def probe(v: float) -> float:
        st = base.replace(f={alpha3: float(v)})
        lam = np.linalg.eigvals(assemble(st, 1).entries)
        return float(np.max(np.abs(lam.imag)))

    with ThreadPoolExecutor(max_workers=_max_workers()) as ex:
        ims = list(ex.map(probe, values))
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator=CSV_EOL)
        w.writerow(["f3", "max_abs_imag"])
        for v, im in zip(values, ims):
            w.writerow([repr(float(v)), repr(im)])
    return 0


# -- riemann report --------------------------------------------------------------


def _field_rows(left: MomentState, right: MomentState):
    rows = []
    for line in spectrum_regularized(left).lines:
        C = float(he_roots(line.family_m)[line.root_index])
        fld = classify_field(left, C)
        rows.append(
            {
                "C": C,
                "family_m": line.family_m,
                "root_index": line.root_index,
                "multiplicity": line.multiplicity,
                "nature": fld.nature,
                "speed_left": wave_speed(left, C),
                "speed_right": wave_speed(right, C),
            }
        )
    return rows


def _contact_rows(left: MomentState, right: MomentState):
    rows = []
    seen = set()
    for line in spectrum_regularized(left).lines:
        C = float(he_roots(line.family_m)[line.root_index])
        fld = classify_field(left, C)
        if fld.genuinely_nonlinear or round(C, 12) in seen:
            continue
        seen.add(round(C, 12))
        v = contact_check(left, right, fld)
        rows.append(
            {
                "C": C,
                "ok": v.ok,
                "velocity_jump": v.velocity_jump,
                "pressure_jump": v.pressure_jump,
                "eigenvalue_jump": v.eigenvalue_jump,
            }
        )
    return rows


def _rarefaction_rows(left: MomentState, right: MomentState, tol: float):
    # integral-curve probe: a fan endpoint must sit on the curve through the
    # left state at the parameter fixed by the density ratio
    rows = []
    zeta = float(np.log(right.rho / left.rho))
    scale = max(1.0, float(np.max(np.abs(right.w))))
    for line in spectrum_regularized(left).lines:
        C = float(he_roots(line.family_m)[line.root_index])
        fld = classify_field(left, C)
        if not fld.genuinely_nonlinear:
            continue
        row = {"C": C, "zeta": zeta}
        try:
            end = rarefaction_curve(left, fld, zeta)
            mismatch = float(np.max(np.abs(end.w - right.w))) / scale
            row["max_mismatch"] = mismatch
            row["ok"] = bool(mismatch <= tol)
        except (ValueError, RuntimeError) as e:
            row["ok"] = False
            row["error"] = str(e)
        rows.append(row)
    return rows


def cmd_riemann(args) -> int:
    left = _load_state(args.left)
    right = _load_state(args.right)
    if (left.D, left.M) != (right.D, right.M):
        raise ValueError(
            f"left state is D={left.D}, M={left.M} but right is D={right.D}, M={right.M}"
        )
    FL, FR = to_conserved(left), to_conserved(right)
    tol = args.tol
    report = {
        "D": left.D,
        "M": left.M,
        "fields": _field_rows(left, right),
        "contacts": _contact_rows(left, right),
        "rarefactions": _rarefaction_rows(left, right, tol),
        "mass_flux_speed": None,
        "shock": None,
        "table": {"shock": [], "contact": [], "rarefaction": []},
    }

    S = shock_speed_from_mass(FL, FR)
    if S is not None:
        rep = shock_check(FL, FR, S)
        report["mass_flux_speed"] = rep.speed
        report["shock"] = {
            "speed": rep.speed,
            "conservative_max": rep.conservative_max,
            "top_max": rep.top_max,
            "lax_per_root": [bool(x) for x in rep.lax_per_root],
            "entropy": rep.entropy,
            "density_pressure_product": rep.density_pressure_product,
            "residual_ok": rep.conservative_max <= tol and rep.top_max <= tol,
        }
        if report["shock"]["residual_ok"]:
            roots = he_roots(left.M + 1)
            for j, passed in enumerate(rep.lax_per_root):
                if not passed:
                    continue
                fld = classify_field(left, float(roots[j]))
                verdict = wave_table_check(ElementaryWave("shock", left, right, fld, S))
                report["table"]["shock"].append(
                    {"C": float(roots[j]), "ok": verdict.ok, "relations": verdict.relations}
                )

    for row in report["contacts"]:
        if not row["ok"]:
            continue
        fld = classify_field(left, row["C"])
        speed = wave_speed(left, fld.C)
        verdict = wave_table_check(ElementaryWave("contact", left, right, fld, speed))
        report["table"]["contact"].append(
            {"C": row["C"], "ok": verdict.ok, "relations": verdict.relations}
        )

    for row in report["rarefactions"]:
        if not row.get("ok"):
            continue
        fld = classify_field(left, row["C"])
        speeds = (wave_speed(left, fld.C), wave_speed(right, fld.C))
        verdict = wave_table_check(ElementaryWave("rarefaction", left, right, fld, speeds))
        report["table"]["rarefaction"].append(
            {"C": row["C"], "ok": verdict.ok, "relations": verdict.relations}
        )

    with _open_out(args.out) as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return 0


# -- simulate --------------------------------------------------------------------


def _req(doc: dict, key: str, where: str):
    if key not in doc:
        raise ValueError(f"{where} is missing required field {key!r}")
    return doc[key]


def _state_from_doc(doc, D: int, M: int, name: str) -> MomentState:
    if not isinstance(doc, dict):
        raise ValueError(f"{name} state must be a JSON object")
    doc = dict(doc)
    doc.setdefault("D", D)
    doc.setdefault("M", M)
    if (int(doc["D"]), int(doc["M"])) != (D, M):
        raise ValueError(f"{name} state dimensions must match the config (D={D}, M={M})")
    return state_from_json(json.dumps(doc))


def _load_sim_config(path: str):
    with open(path) as fh:
        doc = json.load(fh)
    D = int(_req(doc, "D", "config"))
    M = int(_req(doc, "M", "config"))
    g = _req(doc, "grid", "config")
    grid = Grid1D(
        nx=int(_req(g, "nx", "grid")),
        x_min=float(g.get("x_min", 0.0)),
        x_max=float(g.get("x_max", 1.0)),
        boundary=g.get("boundary", "copy"),
    )
    c = doc.get("collision", {})
    model = CollisionModel(
        nu=float(c.get("nu", 0.0)),
        kind=c.get("kind", "bgk"),
        Pr=float(c.get("Pr", 1.0)),
    )
    config = SimulationConfig(
        D=D,
        M=M,
        grid=grid,
        t_end=float(_req(doc, "t_end", "config")),
        cfl=float(doc.get("cfl", 0.8)),
        collision=model,
        n_snapshots=int(doc.get("n_snapshots", 2)),
    )
    left = _state_from_doc(_req(doc, "left", "config"), D, M, "left")
    right = _state_from_doc(_req(doc, "right", "config"), D, M, "right")
    kin = doc.get("kinetic", {})
    return config, left, right, kin


def cmd_simulate(args) -> int:
    config, left, right, kin = _load_sim_config(args.config)
    if args.oracle:
        result = kinetic_reference(
            config,
            left,
            right,
            n_v=int(kin.get("n_v", 64)),
            K=float(kin.get("K", 6.0)),
        )
    else:
        result = simulate(config, left, right)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator=CSV_EOL)
        w.writerow(["t", "x", "rho", "u1", "p11", "theta", "q1"])
        for row in result.rows():
            w.writerow([repr(float(v)) for v in row])
    return 0


# -- conjecture scan --------------------------------------------------------------


def cmd_conjecture(args) -> int:
    violations = common_zero_scan(args.n_max, args.tol)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator=CSV_EOL)
        w.writerow(["m", "n", "root", "distance"])
        for m, n, r, d in violations:
            w.writerow([m, n, repr(float(r)), repr(float(d))])
    best = min(cross_order_root_distances(args.n_max), key=lambda t: t[3], default=None)
    if best is not None:
        bm, bn, br, bd = best
        print(
            f"orders 2..{args.n_max}: {len(violations)} violation(s);"
            f" closest nonzero-zero gap {bd:.6e} between orders ({bm}, {bn})",
            file=sys.stderr,
        )
    if violations:
        return 2
    return 0


# -- hermite identity checks -------------------------------------------------------


_CHECK_THETA = {
    1: [[1.3]],
    2: [[1.2, 0.3], [0.3, 0.9]],
    3: [[1.2, 0.3, 0.1], [0.3, 0.9, -0.2], [0.1, -0.2, 1.1]],
}


def _parity_deviation(basis, pts, max_order: int) -> float:
    tab_p = ghe_table(basis, pts, max_order)
    tab_m = ghe_table(basis, -pts, max_order)
    dev = 0.0
    for a, vals in tab_p.items():
        sign = -1.0 if order(a) % 2 else 1.0
        scale = max(1.0, float(np.max(np.abs(vals))))
        dev = max(dev, float(np.max(np.abs(tab_m[a] - sign * vals))) / scale)
    return dev


def _differential_deviation(basis, pts, max_order: int, h: float = 1e-5) -> float:
    # d/dx_i of the weighted function lowers to minus the (alpha + e_i) one
    D = basis.D
    w0 = weight(basis, pts)
    tab0 = ghe_table(basis, pts, max_order)
    dev = 0.0
    for i in range(D):
        ei = np.zeros(D)
        ei[i] = h
        wp, tp = weight(basis, pts + ei), ghe_table(basis, pts + ei, max_order - 1)
        wm, tm = weight(basis, pts - ei), ghe_table(basis, pts - ei, max_order - 1)
        for a in tp:
            up = tuple(x + int(k == i) for k, x in enumerate(a))
            fd = (wp * tp[a] - wm * tm[a]) / (2 * h)
            target = -w0 * tab0[up]
            scale = max(1.0, float(np.max(np.abs(target))))
            dev = max(dev, float(np.max(np.abs(fd - target))) / scale)
    return dev


def _orthogonality_deviation(basis, max_order: int) -> float:
    s = IndexSet(basis.D, max_order)
    diag = {a: quasi_orthogonality_check(a, a, basis) for a in s.indices}
    dev = 0.0
    for i, a in enumerate(s.indices):
        for b in s.indices[: i + 1]:
            if order(a) == order(b):
                continue
            val = quasi_orthogonality_check(a, b, basis)
            dev = max(dev, abs(val) / np.sqrt(diag[a] * diag[b]))
    return float(dev)


def _integral_deviation(basis, max_order: int) -> float:
    s = IndexSet(basis.D, max_order)
    shift = 0.2 * np.arange(1, basis.D + 1)
    dev = 0.0
    for a in s.indices:
        fact = float(factorial(a))
        for b in s.indices:
            if order(b) > order(a):
                continue
            val = integral_relation_check(a, b, basis, shift=shift)
            expected = fact if a == b else 0.0
            dev = max(dev, abs(val - expected) / fact)
    return float(dev)


def cmd_hermite_check(args) -> int:
    if args.D not in _CHECK_THETA:
        raise ValueError(f"D must be 1, 2, or 3, got {args.D}")
    if args.max_order < 2:
        raise ValueError(f"max order must be >= 2, got {args.max_order}")
    basis = AnisotropicBasis(np.array(_CHECK_THETA[args.D], dtype=float))
    rng = np.random.default_rng(7)
    pts = 1.5 * rng.standard_normal((32, args.D))

    checks = [
        ("parity", _parity_deviation(basis, pts, args.max_order), args.tol),
        ("differential", _differential_deviation(basis, pts[:8], args.max_order), args.fd_tol),
        ("orthogonality", _orthogonality_deviation(basis, args.max_order), args.tol),
        ("integral_relation", _integral_deviation(basis, args.max_order), args.tol),
    ]
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator=CSV_EOL)
        w.writerow(["check", "deviation", "tolerance", "ok"])
        for name, dev, tol in checks:
            w.writerow([name, repr(float(dev)), repr(float(tol)), str(dev <= tol).lower()])
    bad = [name for name, dev, tol in checks if dev > tol]
    if bad:
        print(f"identity checks out of tolerance: {', '.join(bad)}", file=sys.stderr)
        return 2
    return 0


# -- parser / dispatch --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hypermoment",
        description="Anisotropic-Hermite moment systems: matrices, spectra, waves, solver.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("assemble", help="coefficient matrix of a state as CSV")
    a.add_argument("--state", required=True, help="state JSON file")
    a.add_argument("--dir", type=int, default=1, help="spatial axis (1-based)")
    a.add_argument("--regularized", action="store_true", help="apply the hyperbolicity correction")
    a.add_argument("--report", action="store_true", help="emit structural diagnostics JSON instead")
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_assemble)

    s = sub.add_parser("spectrum", help="characteristic speeds as CSV")
    s.add_argument("--state", required=True, help="state JSON file")
    s.add_argument("--dir", default=None, help="direction vector n1,n2,... (normalized; default first axis)")
    s.add_argument("--unregularized", action="store_true", help="numerical eigenvalues of the uncorrected system")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_spectrum)

    h = sub.add_parser("hyperbolicity", help="sweep f3 and report max |Im eigenvalue|")
    h.add_argument("--scan", required=True, metavar="f3=START:STOP:STEPS")
    h.add_argument("--D", type=int, default=1)
    h.add_argument("--M", type=int, default=3)
    h.add_argument("--out", default=None)
    h.set_defaults(func=cmd_hyperbolicity)

    r = sub.add_parser("riemann", help="JSON wave report for a pair of states")
    r.add_argument("--left", required=True, help="left state JSON file")
    r.add_argument("--right", required=True, help="right state JSON file")
    r.add_argument("--tol", type=float, default=1e-8, help="residual / probe tolerance")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_riemann)

    m = sub.add_parser("simulate", help="finite-volume run from a JSON config, CSV snapshots")
    m.add_argument("--config", required=True, help="simulation config JSON file")
    m.add_argument("--oracle", action="store_true", help="run the kinetic reference instead")
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_simulate)

    c = sub.add_parser("conjecture", help="cross-order root coincidence scan")
    c.add_argument("--n-max", type=int, required=True)
    c.add_argument("--tol", type=float, default=1e-9, help="relative coincidence tolerance")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_conjecture)

    k = sub.add_parser("hermite-check", help="verify basis-function identities numerically")
    k.add_argument("--D", type=int, default=2)
    k.add_argument("--max-order", type=int, default=4)
    k.add_argument("--tol", type=float, default=1e-9)
    k.add_argument("--fd-tol", type=float, default=1e-6, help="finite-difference check tolerance")
    k.add_argument("--out", default=None)
    k.set_defaults(func=cmd_hermite_check)

    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        return args.func(args)
    except (AdmissibilityLoss, CFLViolation) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as e:
        # AdmissibilityError on *input* states lands here: validation, not a
        # mid-run numerical failure
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
